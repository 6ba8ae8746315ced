#include "bnsens/formats.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bnsens/io.hpp"

namespace bnsens {

using nlohmann::json;

namespace {

std::string describe_diags(const std::vector<Diagnostic>& diags) {
  std::string s;
  for (const auto& d : diags) {
    if (!s.empty()) s += "\n";
    if (d.line > 0) s += "line " + std::to_string(d.line) + ", column " + std::to_string(d.column) + ": ";
    if (!d.path.empty()) s += d.path + ": ";
    s += d.message;
  }
  return s;
}

class Reader {
 public:
  std::vector<Diagnostic> diags;

  void fail(const std::string& path, const std::string& msg) { diags.push_back({0, 0, path, msg}); }

  const json* field(const json& obj, const std::string& key, const std::string& path, bool required = true) {
    if (!obj.is_object()) {
      fail(path, "expected an object");
      return nullptr;
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) fail(path, "missing field '" + key + "'");
      return nullptr;
    }
    return &*it;
  }

  std::optional<std::string> string(const json& obj, const std::string& key, const std::string& path) {
    const json* v = field(obj, key, path);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      fail(path + "/" + key, "expected a string");
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  std::optional<double> number(const json& v, const std::string& path) {
    if (!v.is_number()) {
      fail(path, "expected a number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  std::optional<std::vector<std::string>> strings(const json& obj, const std::string& key, const std::string& path) {
    const json* v = field(obj, key, path);
    if (!v) return std::nullopt;
    if (!v->is_array()) {
      fail(path + "/" + key, "expected an array of strings");
      return std::nullopt;
    }
    std::vector<std::string> out;
    for (const auto& s : *v) {
      if (!s.is_string()) {
        fail(path + "/" + key, "expected an array of strings");
        return std::nullopt;
      }
      out.push_back(s.get<std::string>());
    }
    return out;
  }
};

std::optional<Evidence> read_evidence(Reader& rd, const Network& net, const json& obj, const std::string& path) {
  const json* ev = rd.field(obj, "evidence", path, false);
  Evidence e;
  if (!ev) return e;
  if (!ev->is_object()) {
    rd.fail(path + "/evidence", "expected an object of VAR: state");
    return std::nullopt;
  }
  for (const auto& [name, state] : ev->items()) {
    auto var = net.find(name);
    if (!var) {
      rd.fail(path + "/evidence", "unknown variable '" + name + "'");
      return std::nullopt;
    }
    std::optional<int> s = state.is_string() ? net.variable(*var).find_state(state.get<std::string>()) : std::nullopt;
    if (!s) {
      rd.fail(path + "/evidence/" + name, "not a state of '" + name + "'");
      return std::nullopt;
    }
    e[*var] = *s;
  }
  return e;
}

std::optional<Scenario> read_scenario(Reader& rd, const Network& net, const json& obj, const std::string& path) {
  auto e = read_evidence(rd, net, obj, path);
  auto target = rd.string(obj, "target", path);
  if (!e || !target) return std::nullopt;
  auto t = net.find(*target);
  if (!t) {
    rd.fail(path + "/target", "unknown variable '" + *target + "'");
    return std::nullopt;
  }
  if (e->count(*t)) {
    rd.fail(path + "/target", "target '" + *target + "' is also an evidence variable");
    return std::nullopt;
  }
  return Scenario{*e, *t};
}

void read_network(Reader& rd, Network& net, const json& root) {
  const json* nw = rd.field(root, "network", "");
  if (!nw) return;
  const json* vars = rd.field(*nw, "variables", "/network");
  if (!vars) return;
  if (!vars->is_array()) {
    rd.fail("/network/variables", "expected an array");
    return;
  }
  const std::size_t before = rd.diags.size();
  for (std::size_t i = 0; i < vars->size(); ++i) {
    const std::string path = "/network/variables/" + std::to_string(i);
    const json& v = (*vars)[i];
    auto id = rd.string(v, "id", path);
    auto states = rd.strings(v, "states", path);
    if (!id || !states) continue;
    if (net.find(*id)) rd.fail(path, "duplicate variable '" + *id + "'");
    net.add_variable({*id, *states});
  }
  if (rd.diags.size() != before) return;

  for (std::size_t i = 0; i < vars->size(); ++i) {
    const std::string path = "/network/variables/" + std::to_string(i);
    const json& v = (*vars)[i];
    const int node = static_cast<int>(i);
    const std::string& id = net.variable(node).id;
    auto parent_names = rd.strings(v, "parents", path);
    if (!parent_names) continue;
    std::vector<int> parents;
    bool ok = true;
    for (const auto& pn : *parent_names) {
      auto p = net.find(pn);
      if (!p) {
        rd.fail(path + "/parents", "'" + id + "' refers to unknown parent '" + pn + "'");
        ok = false;
      } else {
        parents.push_back(*p);
      }
    }
    if (!ok) continue;
    net.set_parents(node, parents);
    const std::string kind = v.contains("kind") && v["kind"].is_string() ? v["kind"].get<std::string>() : "table";

    if (kind == "noisy-or") {
      NoisyOrParams nor;
      nor.inhibitors = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(parents.size()), 1.0);
      if (const json* b = rd.field(v, "base", path, false)) {
        if (auto x = rd.number(*b, path + "/base")) nor.base = *x;
      }
      const json* inh = rd.field(v, "inhibitor", path, !parents.empty());
      if (inh) {
        if (!inh->is_object()) {
          rd.fail(path + "/inhibitor", "expected an object keyed by parent");
          continue;
        }
        for (std::size_t j = 0; j < parents.size(); ++j) {
          const auto& pn = (*parent_names)[j];
          if (!inh->contains(pn)) {
            rd.fail(path + "/inhibitor", "noisy-OR '" + id + "' is missing the inhibitor for '" + pn + "'");
            continue;
          }
          if (auto x = rd.number((*inh)[pn], path + "/inhibitor/" + pn)) nor.inhibitors(static_cast<Eigen::Index>(j)) = *x;
        }
        for (const auto& [key, val] : inh->items())
          if (std::find(parent_names->begin(), parent_names->end(), key) == parent_names->end())
            rd.fail(path + "/inhibitor", "'" + key + "' is not a parent of '" + id + "'");
      }
      net.set_params(node, nor);
      continue;
    }
    if (kind != "table") {
      rd.fail(path + "/kind", "unknown kind '" + kind + "'");
      continue;
    }

    const int nrows = net.config_count(node);
    const int nstates = net.cardinality(node);
    Eigen::MatrixXd theta = Eigen::MatrixXd::Constant(nrows, nstates, std::nan(""));
    std::vector<bool> seen(static_cast<std::size_t>(nrows), false);
    const json* rows = rd.field(v, "rows", path);
    if (!rows) continue;
    if (!rows->is_array()) {
      rd.fail(path + "/rows", "expected an array");
      continue;
    }
    for (std::size_t r = 0; r < rows->size(); ++r) {
      const std::string rpath = path + "/rows/" + std::to_string(r);
      const json& row = (*rows)[r];
      auto given = rd.strings(row, "given", rpath);
      const json* th = rd.field(row, "theta", rpath);
      if (!given || !th) continue;
      if (given->size() != parents.size()) {
        rd.fail(rpath + "/given", "'" + id + "' row needs " + std::to_string(parents.size()) + " parent states");
        continue;
      }
      std::vector<int> cfg;
      bool good = true;
      for (std::size_t j = 0; j < parents.size(); ++j) {
        auto s = net.variable(parents[j]).find_state((*given)[j]);
        if (!s) {
          rd.fail(rpath + "/given", "'" + (*given)[j] + "' is not a state of '" + net.variable(parents[j]).id + "'");
          good = false;
          break;
        }
        cfg.push_back(*s);
      }
      if (!good) continue;
      const int idx = net.config_index(node, cfg);
      if (seen[static_cast<std::size_t>(idx)]) {
        rd.fail(rpath, "duplicate row for '" + id + "'");
        continue;
      }
      seen[static_cast<std::size_t>(idx)] = true;
      if (!th->is_object()) {
        rd.fail(rpath + "/theta", "expected an object keyed by state");
        continue;
      }
      for (const auto& [state, val] : th->items()) {
        auto s = net.variable(node).find_state(state);
        if (!s) {
          rd.fail(rpath + "/theta", "'" + state + "' is not a state of '" + id + "'");
          continue;
        }
        if (auto x = rd.number(val, rpath + "/theta/" + state)) theta(idx, *s) = *x;
      }
      for (int s = 0; s < nstates; ++s)
        if (std::isnan(theta(idx, s)))
          rd.fail(rpath + "/theta", "'" + id + "' row is missing state '" + net.variable(node).states[s] + "'");
    }
    for (int r = 0; r < nrows; ++r)
      if (!seen[static_cast<std::size_t>(r)]) {
        std::string label;
        for (const auto& s : [&] {
               std::vector<std::string> names;
               auto cfg = net.config_of(node, r);
               for (std::size_t j = 0; j < cfg.size(); ++j) names.push_back(net.variable(parents[j]).states[cfg[j]]);
               return names;
             }())
          label += (label.empty() ? "" : ",") + s;
        rd.fail(path + "/rows", "'" + id + "' is missing row (" + label + ")");
      }
    net.set_params(node, TableParams{theta});
  }
}

std::pair<int, int> line_column(std::string_view text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

void emit(const json& j, std::string& out, int indent, int depth) {
  auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (const auto& [key, val] : j.items()) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += json(key).dump();
        out += indent < 0 ? ":" : ": ";
        emit(val, out, indent, depth + 1);
      }
      newline(depth);
      out += '}';
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        newline(depth + 1);
        emit(j[i], out, indent, depth + 1);
      }
      newline(depth);
      out += ']';
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        return;
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

ParseError::ParseError(std::vector<Diagnostic> diags)
    : DomainError("parse-error", describe_diags(diags)), diags_(std::move(diags)) {}

Document document_from_json(const json& root) {
  Reader rd;
  Document doc;
  try {
    if (!root.is_object()) {
      rd.fail("", "document must be a JSON object");
      throw ParseError(rd.diags);
    }
    if (root.contains("format") && root["format"] != "bnsens") rd.fail("/format", "expected \"bnsens\"");
    if (const json* v = rd.field(root, "version", "")) {
      if (!v->is_number_integer() || v->get<int>() != kFormatVersion)
        rd.fail("/version", "unsupported format version (expected " + std::to_string(kFormatVersion) + ")");
    }
    Network net;
    read_network(rd, net, root);
    if (!rd.diags.empty()) throw ParseError(rd.diags);
    const auto validation = validate_network(net);
    for (const auto& msg : validation.violations) rd.fail("/network", msg);
    if (!rd.diags.empty()) throw ParseError(rd.diags);
    doc.network = scale_to_unit(net);

    if (const json* sc = rd.field(root, "scenarios", "", false)) {
      if (!sc->is_array()) rd.fail("/scenarios", "expected an array");
      for (std::size_t i = 0; sc->is_array() && i < sc->size(); ++i) {
        const std::string path = "/scenarios/" + std::to_string(i);
        const json& s = (*sc)[i];
        auto scenario = read_scenario(rd, doc.network, s, path);
        if (!scenario) continue;
        std::string name = s.contains("name") && s["name"].is_string() ? s["name"].get<std::string>() : "";
        doc.scenarios.push_back({name, *scenario});
      }
    }
    if (const json* as = rd.field(root, "assessments", "", false)) {
      if (!as->is_array()) rd.fail("/assessments", "expected an array");
      for (std::size_t i = 0; as->is_array() && i < as->size(); ++i) {
        const std::string path = "/assessments/" + std::to_string(i);
        const json& a = (*as)[i];
        auto scenario = read_scenario(rd, doc.network, a, path);
        const json* dist = rd.field(a, "assessed", path);
        if (!scenario || !dist) continue;
        Assessment out;
        out.scenario = *scenario;
        const auto& tv = doc.network.variable(scenario->target);
        out.assessed = Eigen::VectorXd::Zero(tv.cardinality());
        if (!dist->is_object()) {
          rd.fail(path + "/assessed", "expected an object keyed by target state");
          continue;
        }
        bool good = true;
        for (const auto& [state, val] : dist->items()) {
          auto s = tv.find_state(state);
          auto x = rd.number(val, path + "/assessed/" + state);
          if (!s) {
            rd.fail(path + "/assessed", "'" + state + "' is not a state of '" + tv.id + "'");
            good = false;
          } else if (x) {
            out.assessed(*s) = *x;
          } else {
            good = false;
          }
        }
        if (a.contains("weight")) {
          if (auto w = rd.number(a["weight"], path + "/weight"))
            out.weight = *w;
          else
            good = false;
        }
        if (a.contains("label") && a["label"].is_string()) out.label = a["label"].get<std::string>();
        if (a.contains("kind")) {
          const std::string k = a["kind"].is_string() ? a["kind"].get<std::string>() : "";
          if (k == "local")
            out.kind = AssessmentKind::Local;
          else if (k != "holistic") {
            rd.fail(path + "/kind", "expected \"holistic\" or \"local\"");
            good = false;
          }
        }
        if (!good) continue;
        try {
          check_assessment(doc.network, out);
        } catch (const DomainError& e) {
          rd.fail(path, e.what());
          continue;
        }
        doc.assessments.push_back(std::move(out));
      }
    }
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    rd.fail("", e.what());
  }
  if (!rd.diags.empty()) throw ParseError(rd.diags);
  return doc;
}

Document parse_document(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    std::string msg = e.what();
    if (auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
    throw ParseError({{line, col, "", msg}});
  }
  return document_from_json(root);
}

json document_json(const Document& doc) {
  const Network& net = doc.network;
  json vars = json::array();
  for (int i = 0; i < net.size(); ++i) {
    const auto& var = net.variable(i);
    json v;
    v["id"] = var.id;
    v["states"] = var.states;
    json parents = json::array();
    for (int p : net.parents(i)) parents.push_back(net.variable(p).id);
    v["parents"] = parents;
    if (const auto* t = std::get_if<TableParams>(&net.params(i))) {
      v["kind"] = "table";
      json rows = json::array();
      for (int r = 0; r < net.config_count(i); ++r) {
        json given = json::array();
        const auto cfg = net.config_of(i, r);
        for (std::size_t j = 0; j < cfg.size(); ++j) given.push_back(net.variable(net.parents(i)[j]).states[cfg[j]]);
        json theta = json::object();
        for (int s = 0; s < var.cardinality(); ++s) theta[var.states[s]] = t->theta(r, s);
        rows.push_back({{"given", given}, {"theta", theta}});
      }
      v["rows"] = rows;
    } else {
      const auto& nor = std::get<NoisyOrParams>(net.params(i));
      v["kind"] = "noisy-or";
      v["base"] = nor.base;
      json inh = json::object();
      for (std::size_t j = 0; j < net.parents(i).size(); ++j)
        inh[net.variable(net.parents(i)[j]).id] = nor.inhibitors(static_cast<Eigen::Index>(j));
      v["inhibitor"] = inh;
    }
    vars.push_back(v);
  }
  json out;
  out["format"] = "bnsens";
  out["version"] = doc.version;
  out["network"] = {{"variables", vars}};
  json scenarios = json::array();
  for (const auto& s : doc.scenarios) {
    json j = scenario_json(net, s.scenario);
    j["name"] = s.name;
    scenarios.push_back(j);
  }
  out["scenarios"] = scenarios;
  json assessments = json::array();
  for (const auto& a : doc.assessments) assessments.push_back(assessment_json(net, a));
  out["assessments"] = assessments;
  return out;
}

std::string serialize_document(const Document& doc) { return canonical_dump(document_json(doc)) + "\n"; }

std::string canonical_dump(const json& j, int indent) {
  std::string out;
  emit(j, out, indent, 0);
  return out;
}

Document dyspnea_document() { return parse_document(dyspnea_text()); }

Document load_document(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (path == "dyspnea" && !std::filesystem::exists(path)) return dyspnea_document();
    throw LookupError("cannot open '" + path + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_document(ss.str());
}

}  // namespace bnsens
