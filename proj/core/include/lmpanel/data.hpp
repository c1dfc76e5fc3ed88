#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace lmpanel {

// Numbers of response variables and categories per variable (codes 0..c[j]-1).
struct CategorySpec {
  int r = 0;
  std::vector<int> c;

  int total_free_categories() const {  // sum_j (c_j - 1)
    int s = 0;
    for (int cj : c) s += cj - 1;
    return s;
  }
};

// One unit-occasion row of a long-format panel.
struct LongRecord {
  std::string unit_id;
  int occasion = 0;  // 1..T after normalization
  std::vector<double> covariates;
  std::vector<int> responses;  // 0-based category codes
};

// Column roles for long-format CSV ingestion.
struct LongCsvSchema {
  std::string id_col = "id";
  std::string time_col = "time";
  std::vector<std::string> covariate_cols;
  std::vector<std::string> response_cols;
  int code_base = 0;  // subtracted from raw response codes
  std::optional<CategorySpec> categories;  // inferred from the data when absent
};

// Wide-format panel collapsed to distinct (response, covariate) configurations.
// X1 holds occasion-1 covariates, X2 the occasion-2..T covariates (possibly a
// different set in principle; here both come from the same covariate columns).
struct Dataset {
  std::vector<Eigen::MatrixXi> S;   // per config: T x r response codes
  Eigen::VectorXd yv;               // configuration frequencies
  Eigen::MatrixXd X1;               // n_config x p1
  std::vector<Eigen::MatrixXd> X2;  // per config: (T-1) x p2
  CategorySpec categories;

  int n_config() const { return static_cast<int>(S.size()); }
  int T() const { return S.empty() ? 0 : static_cast<int>(S[0].rows()); }
  int r() const { return categories.r; }
  int p1() const { return static_cast<int>(X1.cols()); }
  int p2() const { return X2.empty() ? 0 : static_cast<int>(X2[0].cols()); }
  double n_total() const { return yv.size() ? yv.sum() : 0.0; }
};

// Parses a long-format CSV (header row, one row per unit-occasion).
// Malformed rows raise DataError with the line number; response codes outside
// the declared range raise DataError. Missing cells are rejected.
std::vector<LongRecord> read_long_csv(const std::string& path, const LongCsvSchema& schema);

// Reshapes a balanced long panel into a collapsed wide Dataset. Every unit
// must cover the same occasion set; occasions are renumbered 1..T. Covariates
// listed in time_constant_cov (0-based indices) must not vary within a unit.
// Collapsed configurations are ordered lexicographically.
Dataset long_to_wide(const std::vector<LongRecord>& records, const CategorySpec& categories,
                     const std::vector<int>& time_constant_cov = {});

// Returns the list of invariant violations (empty when the Dataset is valid).
std::vector<std::string> validate(const Dataset& ds);

// One row per unit (yv all ones), configurations repeated yv times.
Dataset expand_units(const Dataset& ds);

// Merges duplicate (response, covariate) configurations, lexicographic order.
Dataset collapse(const Dataset& ds);

// Wide-format CSV: one row per unit, columns id, y{j}_t{t}, x{m}_t{t}.
Dataset read_wide_csv(const std::string& path, const std::optional<CategorySpec>& categories = {});
void write_wide_csv(const std::string& path, const Dataset& ds);

// Long-format CSV with columns id, time, x{m}, y{j}.
void write_long_csv(const std::string& path, const std::vector<LongRecord>& records);

// Unit-level rows of a Dataset in long form (helper for write_long_csv).
std::vector<LongRecord> to_long_records(const Dataset& ds);

}  // namespace lmpanel
