#include "lmpanel/serialize.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "lmpanel/errors.hpp"
#include "lmpanel/prob.hpp"

namespace lmpanel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

json vec_to_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json mats_to_json(const std::vector<MatrixXd>& ms) {
  json a = json::array();
  for (const auto& m : ms) a.push_back(mat_to_json(m));
  return a;
}

VectorXd vec_from_json(const json& j) {
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

MatrixXd mat_from_json(const json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j[0].size() : 0;
  MatrixXd m(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw DataError("params json: ragged matrix");
    for (size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
  }
  return m;
}

std::vector<MatrixXd> mats_from_json(const json& j) {
  std::vector<MatrixXd> ms;
  for (const auto& e : j) ms.push_back(mat_from_json(e));
  return ms;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

void print_vector(std::ostringstream& out, const VectorXd& v, int digits = 4) {
  for (int i = 0; i < v.size(); ++i) out << (i ? " " : "") << fmt(v(i), digits);
  out << "\n";
}

void print_matrix(std::ostringstream& out, const MatrixXd& m, int digits = 4) {
  for (int i = 0; i < m.rows(); ++i) {
    out << "  ";
    for (int j = 0; j < m.cols(); ++j) out << (j ? " " : "") << fmt(m(i, j), digits);
    out << "\n";
  }
}

template <class Params>
std::string convergence_block(const FitResult<Params>& fit, const std::string& call) {
  std::ostringstream out;
  out << "Call:\n  " << call << "\n\n";
  out << "Convergence info:\n";
  out << "  LogLik " << fmt(fit.loglik, 2) << "  np " << fit.np << "  AIC "
      << fmt(fit.aic, 2) << "  BIC " << fmt(fit.bic, 2) << "\n";
  out << "  converged " << (fit.converged ? "yes" : "no") << " after " << fit.iterations
      << " iterations\n\n";
  return out.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Params <-> JSON
// ---------------------------------------------------------------------------

json params_to_json(const BasicParams& p) {
  json j;
  j["variant"] = "basic";
  j["initial"] = vec_to_json(p.initial);
  j["transition"] = mats_to_json(p.transition);
  j["emission"] = mats_to_json(p.emission);
  return j;
}

json params_to_json(const CovLatentParams& p) {
  json j;
  j["variant"] = "cov-latent";
  j["parameterization"] =
      p.mode == TransitionParam::Multilogit ? "multilogit" : "difflogit";
  j["init_coef"] = mat_to_json(p.init_coef);
  if (p.mode == TransitionParam::Multilogit) {
    j["trans_coef"] = mats_to_json(p.trans_coef);
  } else {
    j["diff_intercepts"] = mat_to_json(p.diff.intercepts);
    j["diff_slopes"] = mat_to_json(p.diff.slopes);
  }
  j["emission"] = mats_to_json(p.emission);
  return j;
}

json params_to_json(const CovManifestParams& p) {
  json j;
  j["variant"] = "cov-manifest";
  j["cutpoints"] = vec_to_json(p.cutpoints);
  j["support"] = vec_to_json(p.support);
  j["regression"] = vec_to_json(p.regression);
  j["transition"] = mat_to_json(p.transition);
  j["initial"] = vec_to_json(p.initial);
  return j;
}

json params_to_json(const MixedParams& p) {
  json j;
  j["variant"] = "mixed";
  j["class_mass"] = vec_to_json(p.class_mass);
  j["class_initial"] = mat_to_json(p.class_initial);
  j["class_transition"] = mats_to_json(p.class_transition);
  j["emission"] = mats_to_json(p.emission);
  return j;
}

namespace {
void expect_variant(const json& j, const std::string& name) {
  if (!j.contains("variant") || j["variant"] != name)
    throw DataError("params json: expected variant '" + name + "'");
}
}  // namespace

BasicParams basic_params_from_json(const json& j) {
  expect_variant(j, "basic");
  BasicParams p;
  p.initial = vec_from_json(j.at("initial"));
  p.transition = mats_from_json(j.at("transition"));
  p.emission = mats_from_json(j.at("emission"));
  return p;
}

CovLatentParams cov_latent_params_from_json(const json& j) {
  expect_variant(j, "cov-latent");
  CovLatentParams p;
  std::string mode = j.at("parameterization").get<std::string>();
  p.mode = mode == "difflogit" ? TransitionParam::Difflogit : TransitionParam::Multilogit;
  p.init_coef = mat_from_json(j.at("init_coef"));
  if (p.mode == TransitionParam::Multilogit) {
    p.trans_coef = mats_from_json(j.at("trans_coef"));
  } else {
    p.diff.intercepts = mat_from_json(j.at("diff_intercepts"));
    p.diff.slopes = mat_from_json(j.at("diff_slopes"));
  }
  p.emission = mats_from_json(j.at("emission"));
  return p;
}

CovManifestParams cov_manifest_params_from_json(const json& j) {
  expect_variant(j, "cov-manifest");
  CovManifestParams p;
  p.cutpoints = vec_from_json(j.at("cutpoints"));
  p.support = vec_from_json(j.at("support"));
  p.regression = vec_from_json(j.at("regression"));
  p.transition = mat_from_json(j.at("transition"));
  p.initial = vec_from_json(j.at("initial"));
  return p;
}

MixedParams mixed_params_from_json(const json& j) {
  expect_variant(j, "mixed");
  MixedParams p;
  p.class_mass = vec_from_json(j.at("class_mass"));
  p.class_initial = mat_from_json(j.at("class_initial"));
  p.class_transition = mats_from_json(j.at("class_transition"));
  p.emission = mats_from_json(j.at("emission"));
  return p;
}

namespace {

template <class Params>
FitResult<Params> fit_result_from_json(const json& j, Params params) {
  FitResult<Params> fit;
  fit.params = std::move(params);
  fit.loglik = j.at("loglik").get<double>();
  fit.np = j.at("np").get<int>();
  fit.aic = j.at("aic").get<double>();
  fit.bic = j.at("bic").get<double>();
  fit.converged = j.at("converged").get<bool>();
  fit.iterations = j.at("iterations").get<int>();
  fit.seed = j.at("seed").get<std::uint64_t>();
  fit.best_start = j.at("best_start").get<int>();
  fit.trace = j.at("trace").get<std::vector<double>>();
  return fit;
}

}  // namespace

LoadedFit load_fit_json(const json& j) {
  const json& pj = j.at("params");
  std::string variant = pj.at("variant").get<std::string>();
  if (variant == "basic") return fit_result_from_json(j, basic_params_from_json(pj));
  if (variant == "cov-latent") return fit_result_from_json(j, cov_latent_params_from_json(pj));
  if (variant == "cov-manifest")
    return fit_result_from_json(j, cov_manifest_params_from_json(pj));
  if (variant == "mixed") return fit_result_from_json(j, mixed_params_from_json(pj));
  throw DataError("params json: unknown variant '" + variant + "'");
}

LoadedFit load_fit_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fit artifact: " + path);
  json j;
  in >> j;
  return load_fit_json(j);
}

// ---------------------------------------------------------------------------
// Reporting types
// ---------------------------------------------------------------------------

std::string selection_csv(const SelectionTable& table) {
  std::ostringstream out;
  out << "k,k1,k2,loglik,np,aic,bic,converged,best_start,seed,failed,is_best_aic,is_best_bic,error\n";
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    out << r.k << "," << r.k1 << "," << r.k2 << ",";
    if (r.failed)
      out << ",,,,";
    else
      out << std::setprecision(12) << r.loglik << "," << r.np << "," << std::setprecision(12)
          << r.aic << "," << std::setprecision(12) << r.bic << ",";
    out << (r.converged ? 1 : 0) << "," << r.best_start << "," << r.seed << ","
        << (r.failed ? 1 : 0) << "," << (static_cast<int>(i) == table.best_aic ? 1 : 0) << ","
        << (static_cast<int>(i) == table.best_bic ? 1 : 0) << "," << r.error << "\n";
  }
  return out.str();
}

json selection_to_json(const SelectionTable& table) {
  json rows = json::array();
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    json row;
    row["k"] = r.k;
    row["k1"] = r.k1;
    row["k2"] = r.k2;
    row["loglik"] = r.loglik;
    row["np"] = r.np;
    row["aic"] = r.aic;
    row["bic"] = r.bic;
    row["converged"] = r.converged;
    row["best_start"] = r.best_start;
    row["seed"] = r.seed;
    row["failed"] = r.failed;
    row["error"] = r.error;
    row["is_best_aic"] = static_cast<int>(i) == table.best_aic;
    row["is_best_bic"] = static_cast<int>(i) == table.best_bic;
    rows.push_back(row);
  }
  json j;
  j["rows"] = rows;
  j["best_aic"] = table.best_aic;
  j["best_bic"] = table.best_bic;
  return j;
}

std::string se_report_csv(const SEReport& rep) {
  std::ostringstream out;
  out << "coordinate,se\n";
  for (int i = 0; i < rep.se.size(); ++i)
    out << rep.names[i] << "," << std::setprecision(12) << rep.se(i) << "\n";
  return out.str();
}

json se_report_to_json(const SEReport& rep) {
  json j;
  j["method"] = rep.method;
  j["names"] = rep.names;
  j["se"] = vec_to_json(rep.se);
  if (rep.method == "numerical") j["info"] = mat_to_json(rep.info);
  if (rep.method == "bootstrap") {
    j["B"] = rep.B;
    j["dropped"] = rep.dropped;
  }
  j["flagged"] = rep.flagged;
  j["notes"] = rep.notes;
  return j;
}

std::string loglik_trace_csv(const std::vector<double>& trace) {
  std::ostringstream out;
  out << "iteration,loglik\n";
  for (size_t i = 0; i < trace.size(); ++i)
    out << i << "," << std::setprecision(15) << trace[i] << "\n";
  return out.str();
}

std::string state_matrix_csv(const Eigen::MatrixXi& states) {
  std::ostringstream out;
  for (int i = 0; i < states.rows(); ++i) {
    for (int t = 0; t < states.cols(); ++t) out << (t ? "," : "") << states(i, t);
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

std::string summary_text(const FitResult<BasicParams>& fit, const std::string& call) {
  std::ostringstream out;
  out << convergence_block(fit, call);
  out << "Vector of initial probabilities:\n  ";
  print_vector(out, fit.params.initial);
  for (size_t m = 0; m < fit.params.transition.size(); ++m) {
    if (fit.params.homogeneous())
      out << "\nTransition matrix:\n";
    else
      out << "\nTransition matrix (t=" << m + 2 << "):\n";
    print_matrix(out, fit.params.transition[m]);
  }
  out << "\nConditional response probabilities (rows: categories, cols: states):\n";
  for (size_t j = 0; j < fit.params.emission.size(); ++j) {
    out << " variable " << j + 1 << ":\n";
    print_matrix(out, fit.params.emission[j]);
  }
  return out.str();
}

std::string summary_text(const FitResult<CovLatentParams>& fit, const std::string& call) {
  std::ostringstream out;
  out << convergence_block(fit, call);
  out << "Be - Parameters affecting the logit for the initial probabilities\n"
      << "(rows: intercept then covariates; columns: states 2..k):\n";
  print_matrix(out, fit.params.init_coef, 6);
  out << "\nGa - Parameters affecting the logit for the transition probabilities:\n";
  if (fit.params.mode == TransitionParam::Multilogit) {
    for (int ubar = 0; ubar < fit.params.k(); ++ubar) {
      out << " origin state " << ubar + 1 << " (columns: target states, diagonal omitted):\n";
      print_matrix(out, fit.params.trans_coef[ubar], 6);
    }
  } else {
    out << " intercepts (origin x target):\n";
    print_matrix(out, fit.params.diff.intercepts, 6);
    out << " shared slopes (rows: states, row 1 fixed at zero):\n";
    print_matrix(out, fit.params.diff.slopes, 6);
  }
  out << "\nPsi - Conditional response probabilities (rows: categories, cols: states):\n";
  for (size_t j = 0; j < fit.params.emission.size(); ++j) {
    out << " variable " << j + 1 << ":\n";
    print_matrix(out, fit.params.emission[j], 6);
  }
  return out.str();
}

std::string summary_text(const FitResult<CovManifestParams>& fit, const std::string& call,
                         const SEReport* se) {
  std::ostringstream out;
  out << convergence_block(fit, call);
  // Display convention: support points centered at zero mean, the level
  // absorbed into the cut-points (the linear predictor is unchanged).
  double mean = fit.params.support.mean();
  out << "Vector of cutpoints (display: support mean absorbed):\n  ";
  print_vector(out, fit.params.cutpoints.array() + mean, 3);
  out << "\nSupport points for the latent states (display: centered):\n  ";
  print_vector(out, fit.params.support.array() - mean, 3);
  out << "\nEstimate of the vector of regression parameters:\n  ";
  print_vector(out, fit.params.regression, 3);
  out << "\nVector of initial probabilities (stationary):\n  ";
  print_vector(out, fit.params.initial);
  out << "\nTransition matrix:\n";
  print_matrix(out, fit.params.transition);
  if (se) {
    const int c1 = fit.params.c() - 1, k1 = fit.params.k() - 1;
    out << "\nStandard errors for the regression parameters:\n  ";
    print_vector(out, se->se.segment(c1 + k1, fit.params.p()), 4);
  }
  return out.str();
}

std::string summary_text(const FitResult<MixedParams>& fit, const std::string& call) {
  std::ostringstream out;
  out << convergence_block(fit, call);
  out << "Mass probabilities:\n  ";
  print_vector(out, fit.params.class_mass);
  out << "\nInitial probabilities (rows: states, cols: classes):\n";
  print_matrix(out, fit.params.class_initial);
  for (int u = 0; u < fit.params.k1(); ++u) {
    out << "\nTransition probabilities, class " << u + 1 << ":\n";
    print_matrix(out, fit.params.class_transition[u]);
  }
  out << "\nConditional response probabilities (rows: categories, cols: states):\n";
  for (size_t j = 0; j < fit.params.emission.size(); ++j) {
    out << " variable " << j + 1 << ":\n";
    print_matrix(out, fit.params.emission[j]);
  }
  return out.str();
}

}  // namespace lmpanel
