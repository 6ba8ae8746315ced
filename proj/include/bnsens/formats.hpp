#pragma once

// Versioned JSON documents holding a network, named scenarios and an
// assessment corpus.
//
//   {
//     "format": "bnsens", "version": 1,
//     "network": {"variables": [
//       {"id": "B", "states": ["t_B", "f_B"], "parents": ["A"], "kind": "table",
//        "rows": [{"given": ["t_A"], "theta": {"t_B": 0.05, "f_B": 0.95}}, ...]},
//       {"id": "X", "states": ["t", "f"], "parents": ["P", "Q"], "kind": "noisy-or",
//        "base": 0.9, "inhibitor": {"P": 0.5, "Q": 0.3}}]},
//     "scenarios": [{"name": "...", "evidence": {"A": "t_A"}, "target": "B"}],
//     "assessments": [{"label": "...", "evidence": {...}, "target": "B",
//                      "assessed": {"t_B": 0.15, "f_B": 0.85}, "weight": 1,
//                      "kind": "holistic"}]
//   }
//
// "given" lists parent states in declared parent order. Tables are rescaled
// to unit row sums on load. Serialization is canonical: sorted keys, numbers
// with 17 significant digits.

#include <string>
#include <string_view>
#include <vector>

#include "bnsens/errors.hpp"
#include "bnsens/fitting.hpp"
#include "bnsens/model.hpp"
#include "json.hpp"

namespace bnsens {

inline constexpr int kFormatVersion = 1;

struct NamedScenario {
  std::string name;
  Scenario scenario;
};

struct Document {
  int version = kFormatVersion;
  Network network;
  std::vector<NamedScenario> scenarios;
  std::vector<Assessment> assessments;
};

struct Diagnostic {
  int line = 0;  // 1-based; 0 when the problem is not tied to a text position
  int column = 0;
  std::string path;  // JSON pointer of the offending element
  std::string message;
};

class ParseError : public DomainError {
 public:
  explicit ParseError(std::vector<Diagnostic> diags);
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  std::vector<Diagnostic> diags_;
};

// Never throws anything but ParseError for bad input.
Document parse_document(std::string_view text);
std::string serialize_document(const Document& doc);
nlohmann::json document_json(const Document& doc);
Document document_from_json(const nlohmann::json& j);

// Canonical text: sorted keys, floats as %.17g, non-finite as null.
// indent < 0 gives a single line.
std::string canonical_dump(const nlohmann::json& j, int indent = 2);

// Bundled example network (eight binary variables, Asia/dyspnea).
std::string_view dyspnea_text();
Document dyspnea_document();

// Reads a file; the name "dyspnea" falls back to the bundled document when no
// such file exists.
Document load_document(const std::string& path);

}  // namespace bnsens
