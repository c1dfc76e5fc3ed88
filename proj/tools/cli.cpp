#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "lmpanel/data.hpp"
#include "lmpanel/decode.hpp"
#include "lmpanel/errors.hpp"
#include "lmpanel/inference.hpp"
#include "lmpanel/serialize.hpp"

namespace lmpanel::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int default_threads() {
  if (const char* env = std::getenv("LMPANEL_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// ---- dataset loading shared by the subcommands ----

struct DataFlags {
  std::string input;
  std::string format = "long";
  std::string id_col = "id";
  std::string time_col = "time";
  std::vector<std::string> y_cols;
  std::vector<std::string> x_cols;
  std::vector<std::string> time_constant;
  std::vector<int> categories;
  int code_base = 0;

  void attach(CLI::App* cmd, bool required = true) {
    auto* opt = cmd->add_option("--input", input, "input CSV file");
    if (required) opt->required();
    cmd->add_option("--format", format, "input layout: long or wide")
        ->check(CLI::IsMember({"long", "wide"}));
    cmd->add_option("--id-col", id_col, "unit id column (long format)");
    cmd->add_option("--time-col", time_col, "occasion column (long format)");
    cmd->add_option("--y-cols", y_cols, "response columns (long format)")->delimiter(',');
    cmd->add_option("--x-cols", x_cols, "covariate columns (long format)")->delimiter(',');
    cmd->add_option("--time-constant", time_constant,
                    "covariate columns that must not vary within a unit")
        ->delimiter(',');
    cmd->add_option("--categories", categories,
                    "category count per response variable (inferred when omitted)")
        ->delimiter(',');
    cmd->add_option("--code-base", code_base, "raw code of the first category (default 0)");
  }

  Dataset load() const {
    std::optional<CategorySpec> cats;
    if (!categories.empty()) {
      CategorySpec spec;
      spec.c = categories;
      spec.r = static_cast<int>(categories.size());
      cats = spec;
    }
    if (format == "wide") return read_wide_csv(input, cats);

    if (y_cols.empty()) throw UsageError("long format requires --y-cols");
    LongCsvSchema schema;
    schema.id_col = id_col;
    schema.time_col = time_col;
    schema.response_cols = y_cols;
    schema.covariate_cols = x_cols;
    schema.code_base = code_base;
    schema.categories = cats;
    auto records = read_long_csv(input, schema);
    if (records.empty()) throw DataError("no data rows in " + input);

    CategorySpec spec;
    if (cats) {
      spec = *cats;
    } else {
      spec.r = static_cast<int>(y_cols.size());
      spec.c.assign(spec.r, 2);
      for (const auto& rec : records)
        for (int j = 0; j < spec.r; ++j)
          spec.c[j] = std::max(spec.c[j], rec.responses[j] + 1);
    }
    std::vector<int> tc_idx;
    for (const auto& name : time_constant) {
      auto it = std::find(x_cols.begin(), x_cols.end(), name);
      if (it == x_cols.end())
        throw UsageError("--time-constant column '" + name + "' not among --x-cols");
      tc_idx.push_back(static_cast<int>(it - x_cols.begin()));
    }
    return long_to_wide(records, spec, tc_idx);
  }
};

struct FitFlags {
  int k = 2, k1 = 1, k2 = 2;
  double tol = 1e-8;
  int maxit = 1000;
  std::string start = "det";
  int n_starts = 0;
  std::uint64_t seed = 0;
  std::string param = "multilogit";
  bool fix_psi = false;
  bool homogeneous = false;
  int threads = default_threads();
  std::string init_params;

  void attach(CLI::App* cmd) {
    cmd->add_option("--k", k, "number of latent states");
    cmd->add_option("--k1", k1, "number of latent classes (mixed)");
    cmd->add_option("--k2", k2, "number of latent states (mixed)");
    cmd->add_option("--tol", tol, "relative log-likelihood tolerance (default 1e-8)");
    cmd->add_option("--maxit", maxit, "maximum EM iterations (default 1000)");
    cmd->add_option("--start", start, "starting rule: det, random, or input")
        ->check(CLI::IsMember({"det", "random", "input"}));
    cmd->add_option("--n-starts", n_starts, "random starts (default 2+k)");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--param", param, "transition parameterization (cov-latent)")
        ->check(CLI::IsMember({"multilogit", "difflogit"}));
    cmd->add_flag("--fix-psi", fix_psi, "hold the input emission probabilities fixed");
    cmd->add_flag("--homogeneous", homogeneous, "pool transitions over occasions (basic)");
    cmd->add_option("--threads", threads, "worker threads (default: all cores)");
    cmd->add_option("--init-params", init_params, "params.json with start=input values");
  }

  FitConfig config() const {
    FitConfig cfg;
    cfg.k = k;
    cfg.k1 = k1;
    cfg.k2 = k2;
    cfg.tol = tol;
    cfg.maxit = maxit;
    cfg.start = start == "det" ? StartRule::Deterministic
                : start == "random" ? StartRule::Random
                                    : StartRule::Input;
    cfg.n_starts = n_starts;
    cfg.seed = seed;
    cfg.param = param == "difflogit" ? TransitionParam::Difflogit : TransitionParam::Multilogit;
    cfg.fix_psi = fix_psi;
    cfg.homogeneous = homogeneous;
    cfg.threads = threads;
    return cfg;
  }
};

std::string join_args(const std::vector<std::string>& args) {
  std::string out = "lmpanel";
  for (const auto& a : args) out += " " + a;
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  std::cout << path.string() << "\n";
}

struct ManifestWriter {
  json j;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  std::vector<std::string> artifacts;

  ManifestWriter(const std::vector<std::string>& args, std::uint64_t seed, int threads) {
    j["command"] = join_args(args);
    j["version"] = kVersion;
    j["seed"] = seed;
    j["threads"] = threads;
  }
  void add(const fs::path& p) { artifacts.push_back(p.string()); }
  void finish(const fs::path& dir) {
    j["artifacts"] = artifacts;
    j["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file(dir / "manifest.json", j.dump(2) + "\n");
  }
};

template <class Params>
void write_fit_artifacts(const FitResult<Params>& fit, const std::string& call,
                         const fs::path& dir, ManifestWriter& manifest,
                         const SEReport* se = nullptr) {
  write_file(dir / "params.json", fit_result_to_json(fit).dump(2) + "\n");
  manifest.add(dir / "params.json");
  write_file(dir / "trace.csv", loglik_trace_csv(fit.trace));
  manifest.add(dir / "trace.csv");
  std::string summary;
  if constexpr (std::is_same_v<Params, CovManifestParams>)
    summary = summary_text(fit, call, se);
  else
    summary = summary_text(fit, call);
  write_file(dir / "summary.txt", summary);
  manifest.add(dir / "summary.txt");
  json conv;
  conv["loglik"] = fit.loglik;
  conv["np"] = fit.np;
  conv["aic"] = fit.aic;
  conv["bic"] = fit.bic;
  conv["converged"] = fit.converged;
  conv["iterations"] = fit.iterations;
  conv["warnings"] = fit.diag.warnings;
  manifest.j["convergence"] = conv;
}

void write_se_artifacts(const SEReport& rep, const fs::path& dir, ManifestWriter& manifest) {
  write_file(dir / "se.json", se_report_to_json(rep).dump(2) + "\n");
  manifest.add(dir / "se.json");
  write_file(dir / "se.csv", se_report_csv(rep));
  manifest.add(dir / "se.csv");
}

// ---- subcommand implementations ----

int cmd_fit(const std::vector<std::string>& raw_args, const std::string& variant,
            const DataFlags& data, const FitFlags& flags, const std::string& out_se, int B,
            const std::string& output_dir, const CLI::App* cmd) {
  if (variant != "cov-latent" && cmd->count("--param") > 0)
    throw UsageError("--param applies only to variant cov-latent");
  if (variant != "basic" && cmd->count("--homogeneous") > 0)
    throw UsageError("--homogeneous applies only to variant basic");
  if (variant != "mixed" && (cmd->count("--k1") > 0 || cmd->count("--k2") > 0))
    throw UsageError("--k1/--k2 apply only to variant mixed");
  if (variant == "mixed" && cmd->count("--k") > 0)
    throw UsageError("variant mixed takes --k1/--k2, not --k");
  if (flags.fix_psi && variant != "cov-latent")
    throw UsageError("--fix-psi applies only to variant cov-latent");
  if (out_se == "bootstrap" && variant != "basic" && variant != "cov-latent")
    throw UsageError("bootstrap standard errors are available for basic and cov-latent");

  Dataset ds = data.load();
  FitConfig cfg = flags.config();
  fs::path dir(output_dir);
  fs::create_directories(dir);
  ManifestWriter manifest(raw_args, cfg.seed, cfg.threads);
  std::string call = join_args(raw_args);

  std::optional<LoadedFit> init;
  if (cfg.start == StartRule::Input) {
    if (flags.init_params.empty())
      throw UsageError("--start input requires --init-params");
    init = load_fit_file(flags.init_params);
  }

  if (variant == "basic") {
    const BasicParams* start = nullptr;
    if (init) start = &std::get<FitResult<BasicParams>>(*init).params;
    auto fit = fit_basic(ds, cfg, start);
    std::optional<SEReport> se;
    if (out_se == "numerical") se = numerical_information(fit.params, ds);
    if (out_se == "bootstrap") se = bootstrap_se(fit, ds, B, cfg.seed, cfg);
    write_fit_artifacts(fit, call, dir, manifest);
    if (se) write_se_artifacts(*se, dir, manifest);
  } else if (variant == "cov-latent") {
    const CovLatentParams* start = nullptr;
    if (init) start = &std::get<FitResult<CovLatentParams>>(*init).params;
    auto fit = fit_cov_latent(ds, cfg, start);
    std::optional<SEReport> se;
    if (out_se == "numerical") se = numerical_information(fit.params, ds);
    if (out_se == "bootstrap") se = bootstrap_se(fit, ds, B, cfg.seed, cfg);
    write_fit_artifacts(fit, call, dir, manifest);
    if (se) write_se_artifacts(*se, dir, manifest);
  } else if (variant == "cov-manifest") {
    const CovManifestParams* start = nullptr;
    if (init) start = &std::get<FitResult<CovManifestParams>>(*init).params;
    auto fit = fit_cov_manifest(ds, cfg, start);
    std::optional<SEReport> se;
    if (out_se == "numerical") se = numerical_information(fit.params, ds);
    write_fit_artifacts(fit, call, dir, manifest, se ? &*se : nullptr);
    if (se) write_se_artifacts(*se, dir, manifest);
  } else if (variant == "mixed") {
    const MixedParams* start = nullptr;
    if (init) start = &std::get<FitResult<MixedParams>>(*init).params;
    auto fit = fit_mixed(ds, cfg, start);
    std::optional<SEReport> se;
    if (out_se == "numerical") se = numerical_information(fit.params, ds);
    write_fit_artifacts(fit, call, dir, manifest);
    if (se) write_se_artifacts(*se, dir, manifest);
  } else {
    throw UsageError("unknown variant: " + variant);
  }
  manifest.finish(dir);
  return 0;
}

int cmd_decode(const std::vector<std::string>& raw_args, const std::string& fit_path,
               const DataFlags& data, const std::string& output_dir, int threads) {
  Dataset ds = data.load();
  LoadedFit fit = load_fit_file(fit_path);
  fs::path dir(output_dir);
  fs::create_directories(dir);
  ManifestWriter manifest(raw_args, 0, threads);

  DecodingResult result = std::visit([&](const auto& f) { return decode(f.params, ds); }, fit);

  write_file(dir / "Ul.csv", state_matrix_csv(result.local));
  manifest.add(dir / "Ul.csv");
  write_file(dir / "Ug.csv", state_matrix_csv(result.global));
  manifest.add(dir / "Ug.csv");
  manifest.finish(dir);
  return 0;
}

int cmd_select(const std::vector<std::string>& raw_args, const std::string& variant,
               const DataFlags& data, const FitFlags& flags, int k_min, int k_max, int k1_min,
               int k1_max, int k2_min, int k2_max, const std::string& output_dir) {
  Dataset ds = data.load();
  FitConfig cfg = flags.config();
  fs::path dir(output_dir);
  fs::create_directories(dir);
  ManifestWriter manifest(raw_args, cfg.seed, cfg.threads);

  SelectionTable table;
  if (variant == "mixed") {
    std::vector<std::pair<int, int>> grid;
    for (int a = k1_min; a <= k1_max; ++a)
      for (int b = k2_min; b <= k2_max; ++b) grid.emplace_back(a, b);
    table = select_states_mixed(ds, grid, cfg);
  } else {
    Variant v = variant == "basic"          ? Variant::Basic
                : variant == "cov-latent"   ? Variant::CovLatent
                : variant == "cov-manifest" ? Variant::CovManifest
                                            : throw UsageError("unknown variant: " + variant);
    table = select_states(ds, v, k_min, k_max, cfg);
  }
  write_file(dir / "selection.csv", selection_csv(table));
  manifest.add(dir / "selection.csv");
  write_file(dir / "selection.json", selection_to_json(table).dump(2) + "\n");
  manifest.add(dir / "selection.json");
  manifest.finish(dir);
  return 0;
}

int cmd_bootstrap(const std::vector<std::string>& raw_args, const std::string& fit_path,
                  const DataFlags& data, int B, std::uint64_t seed, int threads, double tol,
                  int maxit, const std::string& output_dir) {
  Dataset ds = data.load();
  LoadedFit fit = load_fit_file(fit_path);
  fs::path dir(output_dir);
  fs::create_directories(dir);
  ManifestWriter manifest(raw_args, seed, threads);

  FitConfig cfg;
  cfg.tol = tol;
  cfg.maxit = maxit;
  cfg.threads = threads;
  cfg.seed = seed;

  SEReport rep;
  if (auto* basic = std::get_if<FitResult<BasicParams>>(&fit)) {
    cfg.k = basic->params.k();
    cfg.homogeneous = basic->params.homogeneous();
    rep = bootstrap_se(*basic, ds, B, seed, cfg);
  } else if (auto* latent = std::get_if<FitResult<CovLatentParams>>(&fit)) {
    cfg.k = latent->params.k();
    cfg.param = latent->params.mode;
    rep = bootstrap_se(*latent, ds, B, seed, cfg);
  } else {
    throw UsageError("bootstrap standard errors are available for basic and cov-latent fits");
  }
  write_se_artifacts(rep, dir, manifest);
  manifest.finish(dir);
  return 0;
}

int cmd_simulate(const std::vector<std::string>& raw_args, const std::string& params_path,
                 int n, int T, std::uint64_t seed, const DataFlags& covariates,
                 bool have_covariates, const std::string& output, const std::string& output_dir) {
  LoadedFit fit = load_fit_file(params_path);
  fs::path dir(output_dir);
  fs::create_directories(dir);
  ManifestWriter manifest(raw_args, seed, 1);

  Dataset sim;
  if (auto* basic = std::get_if<FitResult<BasicParams>>(&fit)) {
    if (n <= 0 || T <= 0) throw UsageError("simulate: basic params need --n and --T");
    sim = simulate_basic(basic->params, n, T, seed);
  } else if (auto* mixed = std::get_if<FitResult<MixedParams>>(&fit)) {
    if (n <= 0 || T <= 0) throw UsageError("simulate: mixed params need --n and --T");
    sim = simulate_mixed(mixed->params, n, T, seed);
  } else if (auto* latent = std::get_if<FitResult<CovLatentParams>>(&fit)) {
    if (!have_covariates)
      throw UsageError("simulate: cov-latent params need --covariates with a dataset");
    Dataset units = expand_units(covariates.load());
    sim = simulate_cov_latent(latent->params, units.X1, units.X2, seed);
  } else if (auto* manifest_fit = std::get_if<FitResult<CovManifestParams>>(&fit)) {
    if (!have_covariates)
      throw UsageError("simulate: cov-manifest params need --covariates with a dataset");
    Dataset units = expand_units(covariates.load());
    sim = simulate_cov_manifest(manifest_fit->params, units.X1, units.X2, seed);
  }

  fs::path out_path = dir / output;
  write_long_csv(out_path.string(), to_long_records(sim));
  std::cout << out_path.string() << "\n";
  manifest.add(out_path);
  manifest.finish(dir);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"latent Markov models for categorical longitudinal panel data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "estimate a model by EM");
  std::string fit_variant;
  fit_cmd->add_option("variant", fit_variant, "basic | cov-manifest | cov-latent | mixed")
      ->required()
      ->check(CLI::IsMember({"basic", "cov-manifest", "cov-latent", "mixed"}));
  DataFlags fit_data;
  fit_data.attach(fit_cmd);
  FitFlags fit_flags;
  fit_flags.attach(fit_cmd);
  std::string out_se = "none";
  fit_cmd->add_option("--out-se", out_se, "standard errors: none, numerical, or bootstrap")
      ->check(CLI::IsMember({"none", "numerical", "bootstrap"}));
  int fit_B = 200;
  fit_cmd->add_option("--B", fit_B, "bootstrap replicates (default 200)");
  std::string fit_outdir = ".";
  fit_cmd->add_option("--output-dir", fit_outdir, "artifact directory");

  // decode
  auto* decode_cmd = app.add_subcommand("decode", "local and global decoding of a fit");
  std::string decode_fit;
  decode_cmd->add_option("--fit", decode_fit, "params.json from a fit run")->required();
  DataFlags decode_data;
  decode_data.attach(decode_cmd);
  std::string decode_outdir = ".";
  decode_cmd->add_option("--output-dir", decode_outdir, "artifact directory");
  int decode_threads = default_threads();
  decode_cmd->add_option("--threads", decode_threads, "worker threads");

  // select
  auto* select_cmd = app.add_subcommand("select", "fit a range of sizes and tabulate AIC/BIC");
  std::string select_variant;
  select_cmd->add_option("variant", select_variant, "basic | cov-manifest | cov-latent | mixed")
      ->required()
      ->check(CLI::IsMember({"basic", "cov-manifest", "cov-latent", "mixed"}));
  DataFlags select_data;
  select_data.attach(select_cmd);
  FitFlags select_flags;
  select_flags.attach(select_cmd);
  int k_min = 1, k_max = 1, k1_min = 1, k1_max = 1, k2_min = 1, k2_max = 1;
  select_cmd->add_option("--k-min", k_min, "smallest number of states");
  select_cmd->add_option("--k-max", k_max, "largest number of states");
  select_cmd->add_option("--k1-min", k1_min, "mixed grid: smallest class count");
  select_cmd->add_option("--k1-max", k1_max, "mixed grid: largest class count");
  select_cmd->add_option("--k2-min", k2_min, "mixed grid: smallest state count");
  select_cmd->add_option("--k2-max", k2_max, "mixed grid: largest state count");
  std::string select_outdir = ".";
  select_cmd->add_option("--output-dir", select_outdir, "artifact directory");

  // bootstrap
  auto* boot_cmd = app.add_subcommand("bootstrap", "parametric-bootstrap standard errors");
  std::string boot_fit;
  boot_cmd->add_option("--fit", boot_fit, "params.json from a fit run")->required();
  DataFlags boot_data;
  boot_data.attach(boot_cmd);
  int boot_B = 200;
  boot_cmd->add_option("--B", boot_B, "bootstrap replicates (default 200)");
  std::uint64_t boot_seed = 0;
  boot_cmd->add_option("--seed", boot_seed, "random seed");
  double boot_tol = 1e-8;
  boot_cmd->add_option("--tol", boot_tol, "refit tolerance");
  int boot_maxit = 1000;
  boot_cmd->add_option("--maxit", boot_maxit, "refit iteration cap");
  int boot_threads = default_threads();
  boot_cmd->add_option("--threads", boot_threads, "worker threads");
  std::string boot_outdir = ".";
  boot_cmd->add_option("--output-dir", boot_outdir, "artifact directory");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "draw a dataset from fitted parameters");
  std::string sim_params;
  sim_cmd->add_option("--params", sim_params, "params.json with the generating values")
      ->required();
  int sim_n = 0, sim_T = 0;
  sim_cmd->add_option("--n", sim_n, "units to draw (covariate-free variants)");
  sim_cmd->add_option("--T", sim_T, "occasions to draw (covariate-free variants)");
  std::uint64_t sim_seed = 0;
  sim_cmd->add_option("--seed", sim_seed, "random seed");
  DataFlags sim_cov;
  std::string sim_cov_input;
  auto* cov_opt = sim_cmd->add_option("--covariates", sim_cov_input,
                                      "dataset whose covariates are held fixed");
  sim_cov.attach(sim_cmd, /*required=*/false);
  std::string sim_output = "simulated.csv";
  sim_cmd->add_option("--output", sim_output, "output CSV name (long format)");
  std::string sim_outdir = ".";
  sim_cmd->add_option("--output-dir", sim_outdir, "artifact directory");

  std::vector<std::string> mutable_args(args);
  try {
    std::vector<const char*> argv;
    argv.push_back("lmpanel");
    for (const auto& a : mutable_args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());

    if (fit_cmd->parsed())
      return cmd_fit(args, fit_variant, fit_data, fit_flags, out_se, fit_B, fit_outdir, fit_cmd);
    if (decode_cmd->parsed())
      return cmd_decode(args, decode_fit, decode_data, decode_outdir, decode_threads);
    if (select_cmd->parsed())
      return cmd_select(args, select_variant, select_data, select_flags, k_min, k_max, k1_min,
                        k1_max, k2_min, k2_max, select_outdir);
    if (boot_cmd->parsed())
      return cmd_bootstrap(args, boot_fit, boot_data, boot_B, boot_seed, boot_threads, boot_tol,
                           boot_maxit, boot_outdir);
    if (sim_cmd->parsed()) {
      sim_cov.input = sim_cov_input;
      return cmd_simulate(args, sim_params, sim_n, sim_T, sim_seed, sim_cov,
                          cov_opt->count() > 0, sim_output, sim_outdir);
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace lmpanel::cli
