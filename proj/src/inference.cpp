#include "bnsens/inference.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "bnsens/errors.hpp"

namespace bnsens {

namespace {

std::vector<int> strides_in(const Factor& f, const std::vector<int>& vars) {
  // stride of each of `vars` inside f, 0 when absent
  std::vector<int> own(f.vars.size());
  int s = 1;
  for (std::size_t i = 0; i < f.vars.size(); ++i) {
    own[i] = s;
    s *= f.cards[i];
  }
  std::vector<int> out(vars.size(), 0);
  for (std::size_t i = 0; i < vars.size(); ++i) {
    auto it = std::lower_bound(f.vars.begin(), f.vars.end(), vars[i]);
    if (it != f.vars.end() && *it == vars[i]) out[i] = own[it - f.vars.begin()];
  }
  return out;
}

int card_of(const Factor& f, int var) {
  auto it = std::lower_bound(f.vars.begin(), f.vars.end(), var);
  return f.cards[it - f.vars.begin()];
}

void check_evidence(const Network& net, const Evidence& e) {
  for (auto [var, state] : e) {
    if (var < 0 || var >= net.size()) throw LookupError("evidence refers to an unknown variable");
    if (state < 0 || state >= net.cardinality(var))
      throw LookupError("evidence state out of range for '" + net.variable(var).id + "'");
  }
}

std::string evidence_text(const Network& net, const Evidence& e) {
  std::string s;
  for (auto [var, state] : e)
    s += (s.empty() ? "" : ",") + net.variable(var).id + "=" + net.variable(var).states[state];
  return s.empty() ? "(none)" : s;
}

}  // namespace

Factor Factor::constant(double v) {
  Factor f;
  f.values = Eigen::ArrayXd::Constant(1, v);
  return f;
}

Factor operator*(const Factor& a, const Factor& b) {
  Factor out;
  std::set_union(a.vars.begin(), a.vars.end(), b.vars.begin(), b.vars.end(), std::back_inserter(out.vars));
  std::size_t n = 1;
  for (int v : out.vars) {
    const bool in_a = std::binary_search(a.vars.begin(), a.vars.end(), v);
    out.cards.push_back(in_a ? card_of(a, v) : card_of(b, v));
    n *= out.cards.back();
  }
  out.values.resize(static_cast<Eigen::Index>(n));
  const auto sa = strides_in(a, out.vars);
  const auto sb = strides_in(b, out.vars);
  std::vector<int> digit(out.vars.size(), 0);
  Eigen::Index j = 0, k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out.values(static_cast<Eigen::Index>(i)) = a.values(j) * b.values(k);
    for (std::size_t l = 0; l < digit.size(); ++l) {
      if (++digit[l] == out.cards[l]) {
        digit[l] = 0;
        j -= static_cast<Eigen::Index>(out.cards[l] - 1) * sa[l];
        k -= static_cast<Eigen::Index>(out.cards[l] - 1) * sb[l];
      } else {
        j += sa[l];
        k += sb[l];
        break;
      }
    }
  }
  return out;
}

Factor divide(const Factor& a, const Factor& b) {
  Factor inv = b;
  inv.values = (b.values == 0.0).select(0.0, 1.0 / b.values);
  return a * inv;
}

Factor Factor::marginal(const std::vector<int>& keep) const {
  Factor out;
  for (std::size_t i = 0; i < vars.size(); ++i)
    if (std::binary_search(keep.begin(), keep.end(), vars[i])) {
      out.vars.push_back(vars[i]);
      out.cards.push_back(cards[i]);
    }
  Eigen::Index n = 1;
  for (int c : out.cards) n *= c;
  out.values = Eigen::ArrayXd::Zero(n);
  const auto st = strides_in(out, vars);
  std::vector<int> digit(vars.size(), 0);
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    out.values(j) += values(i);
    for (std::size_t l = 0; l < digit.size(); ++l) {
      if (++digit[l] == cards[l]) {
        digit[l] = 0;
        j -= static_cast<Eigen::Index>(cards[l] - 1) * st[l];
      } else {
        j += st[l];
        break;
      }
    }
  }
  return out;
}

void Factor::reduce(const Evidence& e) {
  int stride = 1;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    auto it = e.find(vars[i]);
    if (it != e.end()) {
      for (Eigen::Index idx = 0; idx < values.size(); ++idx)
        if ((idx / stride) % cards[i] != it->second) values(idx) = 0.0;
    }
    stride *= cards[i];
  }
}

Factor family_factor(const Network& net, int node) {
  Factor f;
  f.vars = net.parents(node);
  f.vars.push_back(node);
  std::sort(f.vars.begin(), f.vars.end());
  for (int v : f.vars) f.cards.push_back(net.cardinality(v));
  const Eigen::MatrixXd cpt = local_distribution(net, node);
  f.values.resize(static_cast<Eigen::Index>(std::accumulate(f.cards.begin(), f.cards.end(), 1, std::multiplies<>())));
  std::vector<int> assignment(net.size(), 0);
  std::vector<int> digit(f.vars.size(), 0);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) {
    for (std::size_t l = 0; l < f.vars.size(); ++l) assignment[f.vars[l]] = digit[l];
    f.values(i) = cpt(net.row_of(node, assignment), assignment[node]);
    for (std::size_t l = 0; l < digit.size(); ++l) {
      if (++digit[l] < f.cards[l]) break;
      digit[l] = 0;
    }
  }
  return f;
}

InferenceContext::InferenceContext(Network net) : net_(std::move(net)) {
  require_valid(net_);
  const int n = net_.size();

  std::vector<std::set<int>> adj(n);
  for (int i = 0; i < n; ++i) {
    const auto& pa = net_.parents(i);
    for (std::size_t a = 0; a < pa.size(); ++a) {
      adj[i].insert(pa[a]);
      adj[pa[a]].insert(i);
      for (std::size_t b = a + 1; b < pa.size(); ++b) {
        adj[pa[a]].insert(pa[b]);
        adj[pa[b]].insert(pa[a]);
      }
    }
  }

  // Min-fill elimination, ties broken by smallest clique weight then index.
  std::vector<bool> gone(n, false);
  std::vector<std::vector<int>> elim_cliques;
  for (int step = 0; step < n; ++step) {
    int best = -1;
    long best_fill = 0;
    double best_weight = 0;
    for (int v = 0; v < n; ++v) {
      if (gone[v]) continue;
      std::vector<int> nb(adj[v].begin(), adj[v].end());
      long fill = 0;
      for (std::size_t a = 0; a < nb.size(); ++a)
        for (std::size_t b = a + 1; b < nb.size(); ++b)
          if (!adj[nb[a]].count(nb[b])) ++fill;
      double weight = net_.cardinality(v);
      for (int u : nb) weight *= net_.cardinality(u);
      if (best < 0 || fill < best_fill || (fill == best_fill && weight < best_weight)) {
        best = v;
        best_fill = fill;
        best_weight = weight;
      }
    }
    std::vector<int> clique(adj[best].begin(), adj[best].end());
    for (std::size_t a = 0; a < clique.size(); ++a)
      for (std::size_t b = a + 1; b < clique.size(); ++b) {
        adj[clique[a]].insert(clique[b]);
        adj[clique[b]].insert(clique[a]);
      }
    for (int u : clique) adj[u].erase(best);
    clique.push_back(best);
    std::sort(clique.begin(), clique.end());
    elim_cliques.push_back(std::move(clique));
    gone[best] = true;
  }
  for (std::size_t i = 0; i < elim_cliques.size(); ++i) {
    bool contained = false;
    for (std::size_t j = 0; j < elim_cliques.size() && !contained; ++j) {
      if (i == j) continue;
      const auto& a = elim_cliques[i];
      const auto& b = elim_cliques[j];
      if (std::includes(b.begin(), b.end(), a.begin(), a.end()) && (a.size() < b.size() || j < i))
        contained = true;
    }
    if (!contained) cliques_.push_back(elim_cliques[i]);
  }

  // Maximum-weight spanning tree on separator sizes (Kruskal).
  struct Candidate {
    int weight, a, b;
  };
  std::vector<Candidate> cand;
  const int m = static_cast<int>(cliques_.size());
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      std::vector<int> sep;
      std::set_intersection(cliques_[a].begin(), cliques_[a].end(), cliques_[b].begin(), cliques_[b].end(),
                            std::back_inserter(sep));
      cand.push_back({static_cast<int>(sep.size()), a, b});
    }
  std::stable_sort(cand.begin(), cand.end(), [](const Candidate& x, const Candidate& y) { return x.weight > y.weight; });
  std::vector<int> comp(m);
  std::iota(comp.begin(), comp.end(), 0);
  auto find = [&](int x) {
    while (comp[x] != x) x = comp[x] = comp[comp[x]];
    return x;
  };
  for (const auto& c : cand) {
    const int ra = find(c.a), rb = find(c.b);
    if (ra == rb) continue;
    comp[ra] = rb;
    edges_.emplace_back(c.a, c.b);
  }

  family_clique_.assign(n, -1);
  home_clique_.assign(n, -1);
  for (int v = 0; v < n; ++v) {
    std::vector<int> fam = net_.parents(v);
    fam.push_back(v);
    std::sort(fam.begin(), fam.end());
    for (int c = 0; c < m; ++c) {
      const auto& cl = cliques_[c];
      if (family_clique_[v] < 0 && std::includes(cl.begin(), cl.end(), fam.begin(), fam.end()))
        family_clique_[v] = c;
      if (std::binary_search(cl.begin(), cl.end(), v) &&
          (home_clique_[v] < 0 || cl.size() < cliques_[home_clique_[v]].size()))
        home_clique_[v] = c;
    }
  }

  initial_.resize(m);
  for (int c = 0; c < m; ++c) {
    Factor ones;
    ones.vars = cliques_[c];
    Eigen::Index sz = 1;
    for (int v : ones.vars) {
      ones.cards.push_back(net_.cardinality(v));
      sz *= ones.cards.back();
    }
    ones.values = Eigen::ArrayXd::Ones(sz);
    initial_[c] = std::move(ones);
  }
  for (int v = 0; v < n; ++v) initial_[family_clique_[v]] = initial_[family_clique_[v]] * family_factor(net_, v);

  std::vector<std::vector<int>> nbrs(m);
  for (auto [a, b] : edges_) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  parent_.assign(m, -2);
  if (m > 0) {
    parent_[0] = -1;
    order_.push_back(0);
    for (std::size_t i = 0; i < order_.size(); ++i)
      for (int nb : nbrs[order_[i]])
        if (parent_[nb] == -2) {
          parent_[nb] = order_[i];
          order_.push_back(nb);
        }
  }
}

Calibration InferenceContext::propagate(const Evidence& e) const {
  check_evidence(net_, e);
  counter_->fetch_add(1);
  Calibration cal;
  auto& pot = cal.beliefs;
  pot = initial_;
  for (auto [var, state] : e) pot[home_clique_[var]].reduce({{var, state}});

  const int m = static_cast<int>(pot.size());
  std::vector<Factor> upward(m);
  std::vector<std::vector<int>> sep(m);
  for (int i = m - 1; i > 0; --i) {
    const int c = order_[i], p = parent_[c];
    std::set_intersection(cliques_[c].begin(), cliques_[c].end(), cliques_[p].begin(), cliques_[p].end(),
                          std::back_inserter(sep[c]));
    upward[c] = pot[c].marginal(sep[c]);
    pot[p] = pot[p] * upward[c];
  }
  const double z = pot[order_[0]].values.sum();
  if (!(z > 0.0))
    throw ZeroProbabilityEvidence("evidence " + evidence_text(net_, e) + " has probability zero");
  for (int i = 1; i < m; ++i) {
    const int c = order_[i], p = parent_[c];
    pot[c] = pot[c] * divide(pot[p].marginal(sep[c]), upward[c]);
  }
  for (auto& f : pot) f.values /= f.values.sum();
  cal.evidence_probability = z;
  return cal;
}

InferenceContext compile(const Network& net) { return InferenceContext(net); }

Eigen::VectorXd query_marginal(const InferenceContext& ctx, const Calibration& cal, int target) {
  const auto& net = ctx.network();
  if (target < 0 || target >= net.size()) throw LookupError("unknown target variable");
  const Factor m = cal.beliefs[ctx.home_clique(target)].marginal({target});
  return m.values.matrix();
}

Eigen::VectorXd query_marginal(const InferenceContext& ctx, const Evidence& e, int target) {
  if (e.count(target))
    throw DomainError("target-in-evidence",
                      "target '" + ctx.network().variable(target).id + "' is also an evidence variable");
  return query_marginal(ctx, ctx.propagate(e), target);
}

std::vector<FamilyPosterior> family_posteriors(const InferenceContext& ctx, const Calibration& cal) {
  const auto& net = ctx.network();
  std::vector<FamilyPosterior> out;
  out.reserve(net.size());
  std::vector<int> assignment(net.size(), 0);
  for (int s = 0; s < net.size(); ++s) {
    std::vector<int> fam = net.parents(s);
    fam.push_back(s);
    std::sort(fam.begin(), fam.end());
    const Factor f = cal.beliefs[ctx.family_clique(s)].marginal(fam);
    FamilyPosterior fp{s, Eigen::MatrixXd::Zero(net.config_count(s), net.cardinality(s))};
    std::vector<int> digit(f.vars.size(), 0);
    for (Eigen::Index i = 0; i < f.values.size(); ++i) {
      for (std::size_t l = 0; l < f.vars.size(); ++l) assignment[f.vars[l]] = digit[l];
      fp.table(net.row_of(s, assignment), assignment[s]) = f.values(i);
      for (std::size_t l = 0; l < digit.size(); ++l) {
        if (++digit[l] < f.cards[l]) break;
        digit[l] = 0;
      }
    }
    out.push_back(std::move(fp));
  }
  return out;
}

std::vector<FamilyPosterior> family_posteriors(const InferenceContext& ctx, const Evidence& e) {
  return family_posteriors(ctx, ctx.propagate(e));
}

Eigen::VectorXd enumerate_oracle(const Network& net, const Evidence& e, int target) {
  require_valid(net);
  check_evidence(net, e);
  if (target < 0 || target >= net.size()) throw LookupError("unknown target variable");
  double configs = 1;
  for (int i = 0; i < net.size(); ++i) configs *= net.cardinality(i);
  if (configs > double(1 << 24)) throw DomainError("state-space-too-large", "joint state space exceeds 2^24");

  std::vector<int> x(net.size(), 0);
  for (auto [var, state] : e) x[var] = state;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(net.cardinality(target));
  for (;;) {
    acc(x[target]) += joint_prob(net, x);
    int i = 0;
    for (; i < net.size(); ++i) {
      if (e.count(i)) continue;
      if (++x[i] < net.cardinality(i)) break;
      x[i] = 0;
    }
    if (i == net.size()) break;
  }
  const double z = acc.sum();
  if (!(z > 0.0)) throw ZeroProbabilityEvidence("evidence " + evidence_text(net, e) + " has probability zero");
  return acc / z;
}

Evidence parse_evidence(const Network& net, const std::string& text) {
  Evidence e;
  std::stringstream ss(text);
  std::string item;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto en = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string{} : s.substr(b, en - b + 1);
  };
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw LookupError("evidence item '" + item + "' is not VAR=state");
    const int var = net.index_of(trim(item.substr(0, eq)));
    const int state = net.state_index(var, trim(item.substr(eq + 1)));
    if (!e.emplace(var, state).second)
      throw LookupError("variable '" + net.variable(var).id + "' appears twice in the evidence");
  }
  return e;
}

}  // namespace bnsens
