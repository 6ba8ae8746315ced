#include "bnsens/fitting.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "bnsens/montecarlo.hpp"

namespace bnsens {

std::string to_string(ScoringRule r) { return r == ScoringRule::Logarithmic ? "log" : "quad"; }

ScoringRule parse_scoring_rule(const std::string& s) {
  if (s == "log" || s == "logarithmic") return ScoringRule::Logarithmic;
  if (s == "quad" || s == "quadratic") return ScoringRule::Quadratic;
  throw DomainError("unknown-rule", "unknown scoring rule '" + s + "'");
}

void check_assessment(const Network& net, const Assessment& a) {
  check_scenario(net, a.scenario);
  const auto& target = net.variable(a.scenario.target);
  if (a.assessed.size() != target.cardinality())
    throw DomainError("bad-assessment", "assessment for '" + target.id + "' needs " +
                                            std::to_string(target.cardinality()) + " probabilities");
  if ((a.assessed.array() < 0).any() || !a.assessed.allFinite())
    throw DomainError("bad-assessment", "assessment for '" + target.id + "' has a negative entry");
  if (std::abs(a.assessed.sum() - 1.0) > 1e-9)
    throw DomainError("bad-assessment", "assessment for '" + target.id + "' does not sum to one");
  if (!(a.weight > 0) || !std::isfinite(a.weight))
    throw DomainError("bad-assessment", "assessment for '" + target.id + "' needs a positive weight");
}

Assessment local_assessment(const Network& net, int node, const std::vector<int>& config, Eigen::VectorXd assessed,
                            double weight) {
  Assessment a;
  a.kind = AssessmentKind::Local;
  a.scenario.target = node;
  const auto& pa = net.parents(node);
  if (config.size() != pa.size()) throw LookupError("parent configuration has the wrong length");
  for (std::size_t j = 0; j < pa.size(); ++j) a.scenario.evidence[pa[j]] = config[j];
  a.assessed = std::move(assessed);
  a.weight = weight;
  return a;
}

Eigen::VectorXd model_distribution(const InferenceContext& ctx, const Assessment& a) {
  return query_marginal(ctx, a.scenario.evidence, a.scenario.target);
}

Eigen::VectorXd distance_gradient(const InferenceContext& ctx, const Assessment& a, ScoringRule rule, bool screen) {
  const Network& net = ctx.network();
  check_assessment(net, a);
  const SensitivityReport rep = sensitivities(ctx, a.scenario, std::nullopt, screen);
  const Eigen::VectorXd& p = rep.target_distribution;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(p.size());  // dh/dP * P*
  for (Eigen::Index t = 0; t < p.size(); ++t) {
    if (a.assessed(t) == 0) continue;
    if (rule == ScoringRule::Logarithmic && !(p(t) > 0))
      throw DomainError("support-violation", "model gives '" + net.variable(a.scenario.target).states[t] +
                                                 "' probability zero but the assessment does not");
    coef(t) = score_dh(rule, p(t), a.assessed(t)) * a.assessed(t);
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.total_params());
  const Eigen::VectorXd by_row = rep.derivatives * coef;
  for (std::size_t i = 0; i < rep.params.size(); ++i) grad(net.flat(rep.params[i])) = by_row(static_cast<Eigen::Index>(i));
  return grad;
}

Eigen::VectorXd log_gradient_by_expectations(const InferenceContext& ctx, const Assessment& a) {
  const Network& net = ctx.network();
  check_assessment(net, a);
  const auto& sc = a.scenario;
  const auto model = family_posteriors(ctx, sc.evidence);
  // Family posteriors under Q = P*(x_t) P(x | x_t, e).
  std::vector<Eigen::MatrixXd> reweighted;
  for (int v = 0; v < net.size(); ++v) reweighted.push_back(Eigen::MatrixXd::Zero(net.config_count(v), net.cardinality(v)));
  for (int t = 0; t < a.assessed.size(); ++t) {
    if (a.assessed(t) == 0) continue;
    Evidence ev = sc.evidence;
    ev[sc.target] = t;
    const auto cond = family_posteriors(ctx, ev);
    for (int v = 0; v < net.size(); ++v) reweighted[v] += a.assessed(t) * cond[v].table;
  }
  Eigen::VectorXd grad(net.total_params());
  for (int v = 0; v < net.size(); ++v)
    grad.segment(net.param_offset(v), net.param_count(v)) =
        expected_u(net, v, model[v].table) - expected_u(net, v, reweighted[v]);
  return grad;
}

Objective aggregate_objective(const Network& net, const std::vector<Assessment>& assessments, ScoringRule rule,
                              bool screen) {
  const InferenceContext ctx(net);
  Objective obj;
  obj.gradient = Eigen::VectorXd::Zero(net.total_params());
  obj.distances = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(assessments.size()));
  for (std::size_t i = 0; i < assessments.size(); ++i) {
    const auto& a = assessments[i];
    try {
      const double d = score_distance(model_distribution(ctx, a), a.assessed, rule);
      obj.distances(static_cast<Eigen::Index>(i)) = d;
      obj.value += a.weight * d;
      obj.gradient += a.weight * distance_gradient(ctx, a, rule, screen);
    } catch (const DomainError& e) {
      throw DomainError(e.reason(), "assessment #" + std::to_string(i) + (a.label.empty() ? "" : " (" + a.label + ")") +
                                        ": " + e.what());
    }
  }
  return obj;
}

Network apply_update(const Network& net, const Eigen::VectorXd& delta, double floor) {
  Eigen::VectorXd theta = net.parameter_vector();
  for (int i = 0; i < theta.size(); ++i) {
    if (delta(i) == 0.0) continue;
    const ParamIndex p = net.unflat(i);
    if (is_frozen(net, p)) continue;
    theta(i) += delta(i);
    if (is_table(net.params(p.node)))
      theta(i) = std::max(theta(i), floor);
    else
      theta(i) = std::clamp(theta(i), floor, 1.0 - floor);
  }
  return scale_to_unit(net.with_parameters(theta));
}

std::vector<std::size_t> flag_outliers(const Eigen::VectorXd& distances, double factor, double min_distance) {
  std::vector<std::size_t> out;
  if (distances.size() == 0) return out;
  std::vector<double> sorted(distances.data(), distances.data() + distances.size());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  for (Eigen::Index i = 0; i < distances.size(); ++i)
    if (distances(i) > factor * median && distances(i) > min_distance) out.push_back(static_cast<std::size_t>(i));
  return out;
}

namespace {

// Objective value and distances without gradients.
Objective evaluate(const Network& net, const std::vector<Assessment>& as, ScoringRule rule) {
  Objective obj;
  obj.distances = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(as.size()));
  const InferenceContext ctx(net);
  for (std::size_t i = 0; i < as.size(); ++i) {
    try {
      const double d = score_distance(model_distribution(ctx, as[i]), as[i].assessed, rule);
      obj.distances(static_cast<Eigen::Index>(i)) = d;
      obj.value += as[i].weight * d;
    } catch (const DomainError& e) {
      throw DomainError(e.reason(), "assessment #" + std::to_string(i) + ": " + e.what());
    }
  }
  return obj;
}

struct Run {
  Network network;
  std::vector<double> trace;
  int epochs = 0;
  double step = 0;
  bool converged = false;
};

Network jitter_start(const Network& net, double jitter, std::uint64_t seed, double floor) {
  SplitMix64 rng(seed);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(net.total_params());
  for (int i = 0; i < delta.size(); ++i) {
    const ParamIndex p = net.unflat(i);
    if (is_frozen(net, p)) continue;
    delta(i) = net.parameter(p) * jitter * (2 * rng.uniform() - 1);
  }
  return apply_update(net, delta, floor);
}

Run descend(Network current, const std::vector<Assessment>& as, ScoringRule rule, const FitConfig& cfg,
            std::uint64_t seed, int restart) {
  Run run;
  SplitMix64 rng(seed);
  double step = cfg.step_size;
  double prev = evaluate(current, as, rule).value;
  if (!std::isfinite(prev)) throw FitDiverged(0, 0);
  run.trace.push_back(prev);
  std::vector<std::size_t> order(as.size());
  std::iota(order.begin(), order.end(), 0);

  int halvings = 0;
  while (run.epochs < cfg.max_epochs) {
    if (cfg.order == ScenarioOrder::Shuffled)
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next() % i]);
    Network trial = current;
    for (std::size_t idx : order) {
      const auto& a = as[idx];
      const Eigen::VectorXd g = distance_gradient(InferenceContext(trial), a, rule, cfg.screen);
      if (!g.allFinite()) throw FitDiverged(run.epochs + 1, idx);
      trial = apply_update(trial, -step * a.weight * g, cfg.parameter_floor);
    }
    const Objective obj = evaluate(trial, as, rule);
    if (!std::isfinite(obj.value)) {
      Eigen::Index worst = 0;
      for (Eigen::Index i = 0; i < obj.distances.size(); ++i)
        if (!std::isfinite(obj.distances(i))) worst = i;
      throw FitDiverged(run.epochs + 1, static_cast<std::size_t>(worst));
    }
    if (cfg.halve_on_increase && obj.value > prev) {
      step /= 2;
      if (++halvings > 60) break;
      continue;
    }
    ++run.epochs;
    current = std::move(trial);
    run.trace.push_back(obj.value);
    if (cfg.on_epoch) cfg.on_epoch(restart, run.trace);
    const double change = std::abs(prev - obj.value);
    prev = obj.value;
    if (change <= cfg.convergence_tol * std::max(std::abs(obj.value), 1.0)) {
      run.converged = true;
      break;
    }
  }
  run.network = std::move(current);
  run.step = step;
  return run;
}

}  // namespace

FitResult fit(const Network& input, const std::vector<Assessment>& assessments, ScoringRule rule, const FitConfig& cfg) {
  require_valid(input);
  if (!(cfg.step_size > 0) || cfg.max_epochs < 1 || cfg.restarts < 1 || !(cfg.convergence_tol > 0) ||
      !(cfg.convergence_tol < 1) || !(cfg.parameter_floor > 0) || !(cfg.parameter_floor < 0.5))
    throw DomainError("bad-config", "fit configuration out of range");
  for (std::size_t i = 0; i < assessments.size(); ++i) {
    try {
      check_assessment(input, assessments[i]);
    } catch (const DomainError& e) {
      throw DomainError(e.reason(), "assessment #" + std::to_string(i) + ": " + e.what());
    }
  }
  const Network start = scale_to_unit(input);

  auto run_all = [&](const Network& from, const std::vector<Assessment>& as) {
    FitResult res;
    Run best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.restarts; ++r) {
      const std::uint64_t seed = SplitMix64::mix(cfg.seed ^ SplitMix64::mix(static_cast<std::uint64_t>(r) + 1));
      const Network init = r == 0 ? from : jitter_start(from, cfg.restart_jitter, seed ^ 0x5bd1e995ULL, cfg.parameter_floor);
      Run run = descend(init, as, rule, cfg, seed, r);
      res.restart_objectives.push_back(run.trace.back());
      if (run.trace.back() < best_obj) {
        best_obj = run.trace.back();
        best = std::move(run);
        res.best_restart = r;
      }
    }
    res.network = std::move(best.network);
    res.objective_trace = std::move(best.trace);
    res.epochs = best.epochs;
    res.final_step = best.step;
    res.converged = best.converged;
    return res;
  };

  FitResult res = run_all(start, assessments);
  res.distances = evaluate(res.network, assessments, rule).distances;
  res.outliers = flag_outliers(res.distances, cfg.outlier_factor, cfg.outlier_min_distance);
  if (!cfg.set_aside_outliers) return res;

  // Worst offender first, refitting from the start each time, until the
  // remaining assessments show no outlier.
  std::vector<std::size_t> aside;
  while (!res.outliers.empty() && aside.size() + 1 < assessments.size()) {
    std::size_t worst = res.outliers.front();
    for (std::size_t i : res.outliers)
      if (res.distances(static_cast<Eigen::Index>(i)) > res.distances(static_cast<Eigen::Index>(worst))) worst = i;
    aside.insert(std::upper_bound(aside.begin(), aside.end(), worst), worst);
    std::vector<std::size_t> kept_index;
    std::vector<Assessment> kept;
    for (std::size_t i = 0; i < assessments.size(); ++i)
      if (!std::binary_search(aside.begin(), aside.end(), i)) {
        kept_index.push_back(i);
        kept.push_back(assessments[i]);
      }
    res = run_all(start, kept);
    res.distances = evaluate(res.network, assessments, rule).distances;
    Eigen::VectorXd kept_distances(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k)
      kept_distances(static_cast<Eigen::Index>(k)) = res.distances(static_cast<Eigen::Index>(kept_index[k]));
    res.outliers.clear();
    for (std::size_t k : flag_outliers(kept_distances, cfg.outlier_factor, cfg.outlier_min_distance))
      res.outliers.push_back(kept_index[k]);
  }
  for (std::size_t i : aside) res.outliers.push_back(i);
  std::sort(res.outliers.begin(), res.outliers.end());
  return res;
}

}  // namespace bnsens
