#pragma once

// JSON forms of the engine's values. The CLI's --format json output and the
// HTTP service both use these, so the two surfaces agree byte for byte once
// passed through canonical_dump.

#include <map>

#include "bnsens/fitting.hpp"
#include "bnsens/montecarlo.hpp"
#include "bnsens/sensitivity.hpp"
#include "json.hpp"

namespace bnsens {

// {"node": "B", "state": "t_B", "given": ["t_A"]} for table entries,
// {"node": "H", "inhibitor": "C"} or {"node": "H", "base": true} for noisy-OR.
nlohmann::json param_json(const Network& net, ParamIndex p);
ParamIndex param_from_json(const Network& net, const nlohmann::json& j);

nlohmann::json evidence_json(const Network& net, const Evidence& e);
Evidence evidence_from_json(const Network& net, const nlohmann::json& j);

// {"evidence": {...}, "target": "B"}
nlohmann::json scenario_json(const Network& net, const Scenario& sc);
Scenario scenario_from_json(const Network& net, const nlohmann::json& j);

nlohmann::json distribution_json(const Network& net, int var, const Eigen::VectorXd& p);
Eigen::VectorXd distribution_from_json(const Network& net, int var, const nlohmann::json& j);

nlohmann::json assessment_json(const Network& net, const Assessment& a);
Assessment assessment_from_json(const Network& net, const nlohmann::json& j);

nlohmann::json sensitivity_json(const Network& net, const SensitivityReport& rep);
SensitivityReport sensitivity_from_json(const Network& net, const nlohmann::json& j);

nlohmann::json summary_json(const Network& net, int target, const std::map<int, NodeMax>& summary);
// Bodies shared by `bnsens query/sens` and the service's query endpoints.
nlohmann::json query_json(const Network& net, const Scenario& sc, const Eigen::VectorXd& dist);
nlohmann::json sensitivity_response_json(const Network& net, const SensitivityReport& rep, bool summary);

nlohmann::json monte_carlo_json(const Network& net, const MonteCarloReport& rep);
nlohmann::json fit_result_json(const std::vector<Assessment>& assessments, const FitResult& res);

}  // namespace bnsens
