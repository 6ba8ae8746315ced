#include "bnsens/model.hpp"

#include <limits>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "bnsens/errors.hpp"

namespace bnsens {

std::optional<int> Variable::find_state(std::string_view name) const {
  for (int i = 0; i < cardinality(); ++i)
    if (states[i] == name) return i;
  return std::nullopt;
}

int Network::add_variable(Variable v) {
  const int id = size();
  by_id_.emplace(v.id, id);  // first declaration wins; duplicates are reported by validation
  variables_.push_back(std::move(v));
  parents_.emplace_back();
  params_.emplace_back(TableParams{});
  return id;
}

void Network::set_parents(int node, std::vector<int> parents) { parents_.at(node) = std::move(parents); }

void Network::set_params(int node, Parameterization p) { params_.at(node) = std::move(p); }

std::optional<int> Network::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

int Network::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw LookupError("unknown variable '" + std::string(id) + "'");
}

int Network::state_index(int node, std::string_view state) const {
  if (auto s = variable(node).find_state(state)) return *s;
  throw LookupError("variable '" + variable(node).id + "' has no state '" + std::string(state) + "'");
}

std::vector<int> Network::children(int node) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (std::find(parents_[i].begin(), parents_[i].end(), node) != parents_[i].end()) out.push_back(i);
  return out;
}

int Network::config_count(int node) const {
  int n = 1;
  for (int p : parents(node)) n *= cardinality(p);
  return n;
}

int Network::config_index(int node, std::span<const int> parent_states) const {
  const auto& pa = parents(node);
  if (parent_states.size() != pa.size())
    throw LookupError("parent configuration for '" + variable(node).id + "' needs " +
                      std::to_string(pa.size()) + " states");
  int row = 0;
  for (std::size_t j = 0; j < pa.size(); ++j) {
    const int card = cardinality(pa[j]);
    if (parent_states[j] < 0 || parent_states[j] >= card)
      throw LookupError("state index out of range for parent '" + variable(pa[j]).id + "'");
    row = row * card + parent_states[j];
  }
  return row;
}

std::vector<int> Network::config_of(int node, int row) const {
  const auto& pa = parents(node);
  std::vector<int> out(pa.size());
  for (std::size_t j = pa.size(); j-- > 0;) {
    const int card = cardinality(pa[j]);
    out[j] = row % card;
    row /= card;
  }
  return out;
}

int Network::row_of(int node, std::span<const int> assignment) const {
  int row = 0;
  for (int p : parents(node)) row = row * cardinality(p) + assignment[p];
  return row;
}

int Network::param_count(int node) const {
  const auto& p = params(node);
  if (const auto* t = std::get_if<TableParams>(&p)) return static_cast<int>(t->theta.size());
  return 1 + static_cast<int>(std::get<NoisyOrParams>(p).inhibitors.size());
}

int Network::param_offset(int node) const {
  int off = 0;
  for (int i = 0; i < node; ++i) off += param_count(i);
  return off;
}

int Network::total_params() const { return param_offset(size()); }

ParamIndex Network::unflat(int i) const {
  for (int node = 0; node < size(); ++node) {
    const int n = param_count(node);
    if (i < n) return {node, i};
    i -= n;
  }
  throw LookupError("flat parameter index out of range");
}

namespace {

void check_param(const Network& net, ParamIndex p) {
  if (p.node < 0 || p.node >= net.size()) throw LookupError("parameter refers to an unknown node");
  if (p.k < 0 || p.k >= net.param_count(p.node))
    throw LookupError("parameter index out of range for node '" + net.variable(p.node).id + "'");
}

}  // namespace

double Network::parameter(ParamIndex p) const {
  check_param(*this, p);
  const auto& prm = params(p.node);
  if (const auto* t = std::get_if<TableParams>(&prm)) {
    const int states = cardinality(p.node);
    return t->theta(p.k / states, p.k % states);
  }
  const auto& nor = std::get<NoisyOrParams>(prm);
  return p.k == 0 ? nor.base : nor.inhibitors(p.k - 1);
}

Eigen::VectorXd Network::parameter_vector() const {
  Eigen::VectorXd out(total_params());
  int i = 0;
  for (int node = 0; node < size(); ++node)
    for (int k = 0; k < param_count(node); ++k) out(i++) = parameter({node, k});
  return out;
}

Network Network::with_parameter(ParamIndex p, double value) const {
  check_param(*this, p);
  Network out = *this;
  auto& prm = out.params_[p.node];
  if (auto* t = std::get_if<TableParams>(&prm)) {
    const int states = cardinality(p.node);
    t->theta(p.k / states, p.k % states) = value;
  } else {
    auto& nor = std::get<NoisyOrParams>(prm);
    (p.k == 0 ? nor.base : nor.inhibitors(p.k - 1)) = value;
  }
  return out;
}

Network Network::with_parameters(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (theta.size() != total_params()) throw Error("parameter vector has the wrong length");
  Network out = *this;
  int i = 0;
  for (int node = 0; node < size(); ++node) {
    auto& prm = out.params_[node];
    if (auto* t = std::get_if<TableParams>(&prm)) {
      const int states = cardinality(node);
      for (int k = 0; k < t->theta.size(); ++k) t->theta(k / states, k % states) = theta(i++);
    } else {
      auto& nor = std::get<NoisyOrParams>(prm);
      nor.base = theta(i++);
      for (Eigen::Index j = 0; j < nor.inhibitors.size(); ++j) nor.inhibitors(j) = theta(i++);
    }
  }
  return out;
}

std::vector<int> Network::topological_order() const {
  const int n = size();
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<int>> kids(n);
  for (int i = 0; i < n; ++i)
    for (int p : parents_[i]) {
      if (p < 0 || p >= n) continue;
      ++indegree[i];
      kids[p].push_back(i);
    }
  std::vector<int> order;
  std::vector<int> ready;
  for (int i = n - 1; i >= 0; --i)
    if (indegree[i] == 0) ready.push_back(i);
  while (!ready.empty()) {
    const int v = ready.back();
    ready.pop_back();
    order.push_back(v);
    for (auto it = kids[v].rbegin(); it != kids[v].rend(); ++it)
      if (--indegree[*it] == 0) ready.push_back(*it);
  }
  if (static_cast<int>(order.size()) != n) {
    std::string cyc;
    for (int i = 0; i < n; ++i)
      if (indegree[i] > 0) cyc += (cyc.empty() ? "" : ", ") + variables_[i].id;
    throw InvalidNetwork({"cycle among variables: " + cyc});
  }
  return order;
}

ValidationResult validate_network(const Network& net) {
  ValidationResult r;
  auto& v = r.violations;
  const int n = net.size();
  std::set<std::string> ids;
  bool structure_ok = true;

  for (int i = 0; i < n; ++i) {
    const auto& var = net.variable(i);
    if (!ids.insert(var.id).second) v.push_back("duplicate variable '" + var.id + "'");
    if (var.cardinality() < 2) v.push_back("variable '" + var.id + "' needs at least two states");
    std::set<std::string> st(var.states.begin(), var.states.end());
    if (st.size() != var.states.size()) v.push_back("variable '" + var.id + "' has duplicate state names");
    std::set<int> seen;
    for (int p : net.parents(i)) {
      if (p < 0 || p >= n) {
        v.push_back("variable '" + var.id + "' has an unresolved parent");
        structure_ok = false;
      } else if (p == i) {
        v.push_back("variable '" + var.id + "' is its own parent");
        structure_ok = false;
      } else if (!seen.insert(p).second) {
        v.push_back("variable '" + var.id + "' lists parent '" + net.variable(p).id + "' twice");
        structure_ok = false;
      }
    }
  }
  if (structure_ok) {
    try {
      (void)net.topological_order();
    } catch (const InvalidNetwork& e) {
      v.insert(v.end(), e.violations().begin(), e.violations().end());
    }
  }
  if (!structure_ok) return r;

  for (int i = 0; i < n; ++i) {
    const auto& id = net.variable(i).id;
    const auto& prm = net.params(i);
    if (const auto* t = std::get_if<TableParams>(&prm)) {
      const int rows = net.config_count(i);
      if (t->theta.rows() != rows || t->theta.cols() != net.cardinality(i)) {
        std::ostringstream os;
        os << "table of '" << id << "' is " << t->theta.rows() << "x" << t->theta.cols() << ", expected " << rows
           << "x" << net.cardinality(i);
        v.push_back(os.str());
        continue;
      }
      for (int row = 0; row < rows; ++row) {
        auto label = [&] {
          std::string s = "'" + id + "' row (";
          auto cfg = net.config_of(i, row);
          for (std::size_t j = 0; j < cfg.size(); ++j)
            s += (j ? "," : "") + net.variable(net.parents(i)[j]).states[cfg[j]];
          return s + ")";
        };
        bool bad = false;
        for (int c = 0; c < t->theta.cols(); ++c)
          if (!std::isfinite(t->theta(row, c)) || t->theta(row, c) < 0) bad = true;
        if (bad)
          v.push_back("negative or non-finite entry in " + label());
        else if (t->theta.row(row).sum() <= 0)
          v.push_back("all-zero " + label());
      }
    } else {
      const auto& nor = std::get<NoisyOrParams>(prm);
      bool binary = net.cardinality(i) == 2;
      for (int p : net.parents(i)) binary = binary && net.cardinality(p) == 2;
      if (!binary) v.push_back("noisy-OR on non-binary family of '" + id + "'");
      if (nor.inhibitors.size() != static_cast<Eigen::Index>(net.parents(i).size()))
        v.push_back("noisy-OR '" + id + "' needs one inhibitor per parent");
      auto in_unit = [](double x) { return std::isfinite(x) && x >= 0 && x <= 1; };
      bool range = in_unit(nor.base);
      for (Eigen::Index j = 0; j < nor.inhibitors.size(); ++j) range = range && in_unit(nor.inhibitors(j));
      if (!range) v.push_back("noisy-OR '" + id + "' has a value outside [0,1]");
    }
  }
  return r;
}

void require_valid(const Network& net) {
  auto r = validate_network(net);
  if (!r.ok()) throw InvalidNetwork(std::move(r.violations));
}

ParamIndex table_param(const Network& net, int node, int state, std::span<const int> config) {
  if (!is_table(net.params(node))) throw LookupError("'" + net.variable(node).id + "' is not a table node");
  if (state < 0 || state >= net.cardinality(node)) throw LookupError("state out of range");
  return {node, net.config_index(node, config) * net.cardinality(node) + state};
}

ParamIndex noisy_or_base(const Network& net, int node) {
  if (is_table(net.params(node))) throw LookupError("'" + net.variable(node).id + "' is not a noisy-OR node");
  return {node, 0};
}

ParamIndex noisy_or_inhibitor(const Network& net, int node, int parent_position) {
  if (is_table(net.params(node))) throw LookupError("'" + net.variable(node).id + "' is not a noisy-OR node");
  if (parent_position < 0 || parent_position >= static_cast<int>(net.parents(node).size()))
    throw LookupError("parent position out of range");
  return {node, parent_position + 1};
}

std::string describe(const Network& net, ParamIndex p) {
  check_param(net, p);
  const auto& var = net.variable(p.node);
  if (is_table(net.params(p.node))) {
    const int states = var.cardinality();
    std::string s = var.id + "[" + var.states[p.k % states];
    const auto cfg = net.config_of(p.node, p.k / states);
    for (std::size_t j = 0; j < cfg.size(); ++j) {
      const auto& pv = net.variable(net.parents(p.node)[j]);
      s += (j ? ", " : " | ") + pv.id + "=" + pv.states[cfg[j]];
    }
    return s + "]";
  }
  if (p.k == 0) return var.id + "[base]";
  return var.id + "[inhibitor " + net.variable(net.parents(p.node)[p.k - 1]).id + "]";
}

std::vector<ParamIndex> node_parameters(const Network& net, int node) {
  std::vector<ParamIndex> out;
  for (int k = 0; k < net.param_count(node); ++k) out.push_back({node, k});
  return out;
}

namespace {

// Product of inhibitors of true parents (state 0) in a noisy-OR row.
double active_inhibition(const Network& net, const NoisyOrParams& nor, int node, int row, int skip = -1) {
  const auto cfg = net.config_of(node, row);
  double prod = 1.0;
  for (std::size_t j = 0; j < cfg.size(); ++j)
    if (cfg[j] == 0 && static_cast<int>(j) != skip) prod *= nor.inhibitors(j);
  return prod;
}

}  // namespace

double local_prob_row(const Network& net, int node, int state, int row) {
  const auto& prm = net.params(node);
  if (state < 0 || state >= net.cardinality(node))
    throw LookupError("state out of range for '" + net.variable(node).id + "'");
  if (row < 0 || row >= net.config_count(node))
    throw LookupError("parent configuration out of range for '" + net.variable(node).id + "'");
  if (const auto* t = std::get_if<TableParams>(&prm)) return t->theta(row, state) / t->theta.row(row).sum();
  const auto& nor = std::get<NoisyOrParams>(prm);
  const double off = nor.base * active_inhibition(net, nor, node, row);
  return state == 0 ? 1.0 - off : off;
}

double local_prob(const Network& net, int node, int state, std::span<const int> config) {
  return local_prob_row(net, node, state, net.config_index(node, config));
}

Eigen::MatrixXd local_distribution(const Network& net, int node) {
  const auto& prm = net.params(node);
  if (const auto* t = std::get_if<TableParams>(&prm))
    return t->theta.array().colwise() / t->theta.rowwise().sum().array();
  const int rows = net.config_count(node);
  Eigen::MatrixXd out(rows, 2);
  for (int r = 0; r < rows; ++r) {
    out(r, 0) = local_prob_row(net, node, 0, r);
    out(r, 1) = local_prob_row(net, node, 1, r);
  }
  return out;
}

double joint_prob(const Network& net, std::span<const int> assignment) {
  if (static_cast<int>(assignment.size()) != net.size())
    throw LookupError("assignment must give a state for every variable");
  double p = 1.0;
  for (int i = 0; i < net.size(); ++i) p *= local_prob_row(net, i, assignment[i], net.row_of(i, assignment));
  return p;
}

bool is_frozen(const Network& net, ParamIndex p) {
  check_param(net, p);
  const auto& prm = net.params(p.node);
  if (const auto* t = std::get_if<TableParams>(&prm)) {
    const int states = net.cardinality(p.node);
    const int row = p.k / states;
    const double v = t->theta(row, p.k % states);
    return v == 0.0 || v == t->theta.row(row).sum();
  }
  const double v = net.parameter(p);
  return v == 0.0 || v == 1.0;
}

double u_value(const Network& net, ParamIndex p, int state, int row) {
  if (is_frozen(net, p)) throw FrozenParameter("parameter " + describe(net, p) + " is frozen at the boundary");
  const auto& prm = net.params(p.node);
  if (const auto* t = std::get_if<TableParams>(&prm)) {
    const int states = net.cardinality(p.node);
    if (p.k / states != row) return 0.0;
    const double total = t->theta.row(row).sum();
    if (p.k % states != state) return -1.0 / total;
    const double prob = t->theta(row, state) / total;
    return (1.0 - prob) / (prob * total);
  }
  const auto& nor = std::get<NoisyOrParams>(prm);
  const double off = nor.base * active_inhibition(net, nor, p.node, row);
  double d_off;  // d/dtheta of base * prod(active inhibitors)
  if (p.k == 0) {
    d_off = active_inhibition(net, nor, p.node, row);
  } else {
    const int j = p.k - 1;
    if (net.config_of(p.node, row)[j] != 0) return 0.0;
    d_off = nor.base * active_inhibition(net, nor, p.node, row, j);
  }
  return state == 0 ? -d_off / (1.0 - off) : d_off / off;
}

Network scale_to_unit(const Network& net) {
  Network out = net;
  for (int i = 0; i < net.size(); ++i) {
    if (const auto* t = std::get_if<TableParams>(&net.params(i))) {
      TableParams scaled = *t;
      for (Eigen::Index r = 0; r < scaled.theta.rows(); ++r) {
        const double sum = scaled.theta.row(r).sum();
        // Rows already at unit sum up to rounding stay bit-identical.
        if (std::abs(sum - 1.0) > 4 * std::numeric_limits<double>::epsilon() * static_cast<double>(scaled.theta.cols()))
          scaled.theta.row(r) /= sum;
      }
      out.set_params(i, std::move(scaled));
    }
  }
  return out;
}

}  // namespace bnsens
