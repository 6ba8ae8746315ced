#include "bnsens/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "bnsens/errors.hpp"

namespace bnsens {

std::string to_string(SamplingMethod m) {
  return m == SamplingMethod::LogicRejection ? "logic-rejection" : "likelihood-weighting";
}

SamplingMethod parse_sampling_method(const std::string& s) {
  if (s == "reject" || s == "rejection" || s == "logic-rejection") return SamplingMethod::LogicRejection;
  if (s == "lw" || s == "likelihood-weighting") return SamplingMethod::LikelihoodWeighting;
  throw DomainError("unknown-method", "unknown sampling method '" + s + "'");
}

std::uint64_t SplitMix64::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::next() {
  state_ += 0x9e3779b97f4a7c15ULL;
  return mix(state_);
}

namespace {

constexpr std::uint64_t kBlock = 4096;

struct UEntry {
  int slot;  // accumulator row
  double u;
};

class Sampler {
 public:
  Sampler(const Network& net, const Evidence& e, SamplingMethod method)
      : net_(net), evidence_(e), method_(method), order_(net.topological_order()) {
    for (int v = 0; v < net.size(); ++v) cpt_.push_back(local_distribution(net, v));
    clamp_.assign(net.size(), -1);
    for (auto [var, state] : e) clamp_[var] = state;
  }

  WeightedSample draw(SplitMix64& rng) const {
    WeightedSample s;
    s.assignment.assign(net_.size(), 0);
    auto& x = s.assignment;
    for (int v : order_) {
      const int row = net_.row_of(v, x);
      if (method_ == SamplingMethod::LikelihoodWeighting && clamp_[v] >= 0) {
        x[v] = clamp_[v];
        s.weight *= cpt_[v](row, x[v]);
        continue;
      }
      const double u = rng.uniform();
      const int states = static_cast<int>(cpt_[v].cols());
      double cum = 0.0;
      int pick = states - 1;
      for (int j = 0; j < states; ++j) {
        cum += cpt_[v](row, j);
        if (u < cum) {
          pick = j;
          break;
        }
      }
      x[v] = pick;
      if (clamp_[v] >= 0 && pick != clamp_[v]) s.weight = 0.0;
    }
    return s;
  }

 private:
  const Network& net_;
  Evidence evidence_;
  SamplingMethod method_;
  std::vector<int> order_;
  std::vector<Eigen::MatrixXd> cpt_;
  std::vector<int> clamp_;
};

// Nonzero U values of interior parameters, per node and (row, state) cell.
std::vector<std::vector<std::vector<UEntry>>> u_cells(const Network& net, const std::vector<ParamIndex>& params) {
  std::vector<std::vector<std::vector<UEntry>>> cells(net.size());
  for (int v = 0; v < net.size(); ++v)
    cells[v].resize(static_cast<std::size_t>(net.config_count(v) * net.cardinality(v)));
  for (std::size_t slot = 0; slot < params.size(); ++slot) {
    const ParamIndex p = params[slot];
    const int states = net.cardinality(p.node);
    for (int r = 0; r < net.config_count(p.node); ++r)
      for (int x = 0; x < states; ++x) {
        const double u = u_value(net, p, x, r);
        if (u != 0.0) cells[p.node][r * states + x].push_back({static_cast<int>(slot), u});
      }
  }
  return cells;
}

}  // namespace

WeightedSample draw_sample(const Network& net, const Evidence& e, SamplingMethod method, SplitMix64& rng) {
  return Sampler(net, e, method).draw(rng);
}

Accumulators::Accumulators(std::vector<ParamIndex> p, int target_states)
    : params(std::move(p)),
      a(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(params.size()), target_states)),
      b(Eigen::VectorXd::Zero(target_states)),
      wu2(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(params.size()), target_states)),
      w2u(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(params.size()), target_states)),
      w2(Eigen::VectorXd::Zero(target_states)) {}

void Accumulators::merge(const Accumulators& o) {
  a += o.a;
  b += o.b;
  wu2 += o.wu2;
  w2u += o.w2u;
  w2 += o.w2;
  draws += o.draws;
  accepted += o.accepted;
}

MonteCarloReport estimate_sensitivities(const Network& net, const Scenario& sc, const SamplerConfig& cfg) {
  require_valid(net);
  check_scenario(net, sc);
  if (cfg.sample_count < 1) throw DomainError("bad-config", "sample_count must be at least 1");

  std::vector<ParamIndex> params;
  for (int v = 0; v < net.size(); ++v)
    for (int k = 0; k < net.param_count(v); ++k)
      if (!is_frozen(net, {v, k})) params.push_back({v, k});
  const int states = net.cardinality(sc.target);
  const Sampler sampler(net, sc.evidence, cfg.method);
  const auto cells = u_cells(net, params);

  const std::uint64_t blocks = (cfg.sample_count + kBlock - 1) / kBlock;
  std::vector<Accumulators> partial(blocks, Accumulators(params, states));
  std::atomic<std::uint64_t> next{0};
  auto work = [&] {
    for (std::uint64_t blk; (blk = next.fetch_add(1)) < blocks;) {
      Accumulators& acc = partial[blk];
      const std::uint64_t end = std::min(cfg.sample_count, (blk + 1) * kBlock);
      for (std::uint64_t i = blk * kBlock; i < end; ++i) {
        SplitMix64 rng(SplitMix64::mix(cfg.seed ^ SplitMix64::mix(i + 1)));
        const WeightedSample s = sampler.draw(rng);
        ++acc.draws;
        if (s.weight == 0.0) continue;
        ++acc.accepted;
        const double w = s.weight;
        const int t = s.assignment[sc.target];
        acc.b(t) += w;
        acc.w2(t) += w * w;
        for (int v = 0; v < net.size(); ++v) {
          const int cell = net.row_of(v, s.assignment) * net.cardinality(v) + s.assignment[v];
          for (const UEntry& ue : cells[v][cell]) {
            acc.a(ue.slot, t) += w * ue.u;
            acc.w2u(ue.slot, t) += w * w * ue.u;
            acc.wu2(ue.slot, t) += w * w * ue.u * ue.u;
          }
        }
      }
    }
  };
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, blocks));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();

  Accumulators total(params, states);
  for (const auto& p : partial) total.merge(p);
  if (total.accepted == 0)
    throw DomainError("no-accepted-samples", to_string(cfg.method) + ": all " + std::to_string(total.draws) +
                                                 " samples had zero weight (evidence never matched)");
  auto rep = finish_estimate(net, sc, std::move(total));
  rep.config = cfg;
  return rep;
}

MonteCarloReport finish_estimate(const Network& net, const Scenario& sc, Accumulators acc) {
  MonteCarloReport out;
  const auto rows = static_cast<Eigen::Index>(acc.params.size());
  const Eigen::Index states = acc.b.size();
  const double total_w = acc.b.sum();
  if (!(total_w > 0)) throw DomainError("no-accepted-samples", "all samples had zero weight");

  auto& rep = out.estimate;
  rep.scenario = sc;
  rep.params = acc.params;
  rep.target_distribution = acc.b / total_w;
  for (int v = 0; v < net.size(); ++v)
    for (int k = 0; k < net.param_count(v); ++k)
      if (is_frozen(net, {v, k})) rep.frozen.insert({v, k});
  rep.derivatives.resize(rows, states);
  out.standard_error.resize(rows, states);
  out.undefined.resize(rows, states);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mean_all = acc.a.row(i).sum() / total_w;  // E^[U | e]
    for (Eigen::Index t = 0; t < states; ++t) {
      if (!(acc.b(t) > 0)) {
        rep.derivatives(i, t) = nan;
        out.standard_error(i, t) = nan;
        out.undefined(i, t) = true;
        continue;
      }
      out.undefined(i, t) = false;
      const double pt = acc.b(t) / total_w;
      const double d = pt * (acc.a(i, t) / acc.b(t) - mean_all);
      // Linearization of the self-normalized covariance estimator: each
      // sample contributes (1{x_t} - p_t)(U - R) - D.
      double var = 0.0;
      for (Eigen::Index c = 0; c < states; ++c) {
        const double alpha = (c == t ? 1.0 : 0.0) - pt;
        const double sq = acc.wu2(i, c) - 2 * mean_all * acc.w2u(i, c) + mean_all * mean_all * acc.w2(c);
        const double lin = acc.w2u(i, c) - mean_all * acc.w2(c);
        var += alpha * alpha * sq - 2 * alpha * d * lin + d * d * acc.w2(c);
      }
      rep.derivatives(i, t) = d;
      out.standard_error(i, t) = std::sqrt(std::max(0.0, var)) / total_w;
    }
  }
  for (const auto& [node, m] : node_max_summary(rep)) rep.node_max[node] = m.value;
  out.accumulators = std::move(acc);
  return out;
}

}  // namespace bnsens
