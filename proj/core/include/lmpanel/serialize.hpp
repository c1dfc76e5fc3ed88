#pragma once

#include <json.hpp>
#include <string>
#include <variant>

#include "lmpanel/fit.hpp"
#include "lmpanel/inference.hpp"

namespace lmpanel {

using json = nlohmann::json;

// Parameter structs <-> JSON (tagged with "variant").
json params_to_json(const BasicParams& p);
json params_to_json(const CovLatentParams& p);
json params_to_json(const CovManifestParams& p);
json params_to_json(const MixedParams& p);

BasicParams basic_params_from_json(const json& j);
CovLatentParams cov_latent_params_from_json(const json& j);
CovManifestParams cov_manifest_params_from_json(const json& j);
MixedParams mixed_params_from_json(const json& j);

template <class Params>
json fit_result_to_json(const FitResult<Params>& fit) {
  json j;
  j["params"] = params_to_json(fit.params);
  j["loglik"] = fit.loglik;
  j["np"] = fit.np;
  j["aic"] = fit.aic;
  j["bic"] = fit.bic;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["seed"] = fit.seed;
  j["best_start"] = fit.best_start;
  j["trace"] = fit.trace;
  json diag;
  diag["warnings"] = fit.diag.warnings;
  diag["zero_count_resets"] = fit.diag.zero_count_resets;
  diag["newton_nonconverged"] = fit.diag.newton_nonconverged;
  diag["coef_cap_hits"] = fit.diag.coef_cap_hits;
  json viol = json::array();
  for (auto [it, delta] : fit.diag.monotonicity_violations) viol.push_back({it, delta});
  diag["monotonicity_violations"] = viol;
  j["diagnostics"] = diag;
  return j;
}

using LoadedFit = std::variant<FitResult<BasicParams>, FitResult<CovLatentParams>,
                               FitResult<CovManifestParams>, FitResult<MixedParams>>;

// Reads a params.json artifact (variant-dispatched).
LoadedFit load_fit_json(const json& j);
LoadedFit load_fit_file(const std::string& path);

// CSV / JSON serializations of the reporting types.
std::string selection_csv(const SelectionTable& table);
json selection_to_json(const SelectionTable& table);
std::string se_report_csv(const SEReport& rep);
json se_report_to_json(const SEReport& rep);
std::string loglik_trace_csv(const std::vector<double>& trace);
std::string state_matrix_csv(const Eigen::MatrixXi& states);

// Human-oriented summary mirroring the usual print/summary blocks
// (Convergence info with LogLik, np, AIC, BIC, then the coefficient blocks).
std::string summary_text(const FitResult<BasicParams>& fit, const std::string& call);
std::string summary_text(const FitResult<CovLatentParams>& fit, const std::string& call);
std::string summary_text(const FitResult<CovManifestParams>& fit, const std::string& call,
                         const SEReport* se = nullptr);
std::string summary_text(const FitResult<MixedParams>& fit, const std::string& call);

}  // namespace lmpanel
