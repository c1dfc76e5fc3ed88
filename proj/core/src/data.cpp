#include "lmpanel/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "lmpanel/errors.hpp"

namespace lmpanel {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, int line_no, const std::string& col) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": cannot parse '" + s +
                    "' in column " + col);
  }
}

int parse_int(const std::string& s, int line_no, const std::string& col) {
  double v = parse_double(s, line_no, col);
  double rounded = std::round(v);
  if (std::abs(v - rounded) > 1e-9)
    throw DataError("line " + std::to_string(line_no) + ": expected integer in column " + col);
  return static_cast<int>(rounded);
}

// Lexicographic key of one configuration: responses then covariates.
struct ConfigKey {
  std::vector<int> resp;
  std::vector<double> cov;
  bool operator<(const ConfigKey& o) const {
    if (resp != o.resp) return resp < o.resp;
    return cov < o.cov;
  }
  bool operator==(const ConfigKey& o) const { return resp == o.resp && cov == o.cov; }
};

ConfigKey make_key(const Eigen::MatrixXi& s, const Eigen::VectorXd& x1,
                   const Eigen::MatrixXd& x2) {
  ConfigKey key;
  key.resp.reserve(s.size());
  for (Eigen::Index t = 0; t < s.rows(); ++t)
    for (Eigen::Index j = 0; j < s.cols(); ++j) key.resp.push_back(s(t, j));
  key.cov.reserve(x1.size() + x2.size());
  for (Eigen::Index m = 0; m < x1.size(); ++m) key.cov.push_back(x1(m));
  for (Eigen::Index t = 0; t < x2.rows(); ++t)
    for (Eigen::Index m = 0; m < x2.cols(); ++m) key.cov.push_back(x2(t, m));
  return key;
}

}  // namespace

std::vector<LongRecord> read_long_csv(const std::string& path, const LongCsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) return {};  // empty file -> empty sequence
  auto header = split_csv_line(line);
  auto col_index = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column '" + name + "' in " + path);
    return static_cast<int>(it - header.begin());
  };

  const int id_idx = col_index(schema.id_col);
  const int time_idx = col_index(schema.time_col);
  std::vector<int> cov_idx, resp_idx;
  for (const auto& c : schema.covariate_cols) cov_idx.push_back(col_index(c));
  for (const auto& c : schema.response_cols) resp_idx.push_back(col_index(c));
  if (resp_idx.empty()) throw DataError("schema declares no response columns");

  const int r = static_cast<int>(resp_idx.size());
  if (schema.categories) {
    if (schema.categories->r != r)
      throw DataError("declared categories do not match the response column count");
  }

  std::vector<LongRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != static_cast<int>(header.size()))
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    LongRecord rec;
    rec.unit_id = cells[id_idx];
    if (rec.unit_id.empty())
      throw DataError("line " + std::to_string(line_no) + ": empty unit id");
    rec.occasion = parse_int(cells[time_idx], line_no, schema.time_col);
    for (size_t m = 0; m < cov_idx.size(); ++m)
      rec.covariates.push_back(parse_double(cells[cov_idx[m]], line_no, schema.covariate_cols[m]));
    for (int j = 0; j < r; ++j) {
      int code = parse_int(cells[resp_idx[j]], line_no, schema.response_cols[j]) - schema.code_base;
      if (code < 0)
        throw DataError("line " + std::to_string(line_no) + ": response code below " +
                        std::to_string(schema.code_base) + " in column " +
                        schema.response_cols[j]);
      if (schema.categories && code >= schema.categories->c[j])
        throw DataError("line " + std::to_string(line_no) + ": response code " +
                        std::to_string(code + schema.code_base) + " outside declared range in column " +
                        schema.response_cols[j]);
      rec.responses.push_back(code);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

Dataset long_to_wide(const std::vector<LongRecord>& records, const CategorySpec& categories,
                     const std::vector<int>& time_constant_cov) {
  if (categories.r <= 0) throw DataError("long_to_wide: categories.r must be positive");
  for (int cj : categories.c)
    if (cj < 2) throw DataError("long_to_wide: every response needs at least 2 categories");

  // Group rows by unit in first-appearance order.
  std::vector<std::string> unit_order;
  std::map<std::string, std::vector<const LongRecord*>> by_unit;
  std::set<int> occasion_set;
  for (const auto& rec : records) {
    if (static_cast<int>(rec.responses.size()) != categories.r)
      throw DataError("long_to_wide: unit " + rec.unit_id + " has " +
                      std::to_string(rec.responses.size()) + " responses, expected " +
                      std::to_string(categories.r));
    auto [it, inserted] = by_unit.try_emplace(rec.unit_id);
    if (inserted) unit_order.push_back(rec.unit_id);
    it->second.push_back(&rec);
    occasion_set.insert(rec.occasion);
  }
  if (unit_order.empty()) throw DataError("long_to_wide: no records");

  std::vector<int> occasions(occasion_set.begin(), occasion_set.end());
  const int T = static_cast<int>(occasions.size());
  std::map<int, int> occ_pos;
  for (int t = 0; t < T; ++t) occ_pos[occasions[t]] = t;

  const int p = static_cast<int>(records.front().covariates.size());
  for (int m : time_constant_cov)
    if (m < 0 || m >= p) throw DataError("long_to_wide: time-constant covariate index out of range");

  Dataset unit_level;
  unit_level.categories = categories;
  unit_level.X1.resize(static_cast<Eigen::Index>(unit_order.size()), p);

  for (size_t i = 0; i < unit_order.size(); ++i) {
    const auto& unit = unit_order[i];
    const auto& rows = by_unit[unit];
    if (static_cast<int>(rows.size()) != T)
      throw DataError("long_to_wide: unbalanced panel, unit " + unit + " has " +
                      std::to_string(rows.size()) + " occasions, expected " + std::to_string(T));

    std::vector<const LongRecord*> ordered(T, nullptr);
    for (const auto* rec : rows) {
      int t = occ_pos.at(rec->occasion);
      if (ordered[t]) throw DataError("long_to_wide: duplicate occasion for unit " + unit);
      if (static_cast<int>(rec->covariates.size()) != p)
        throw DataError("long_to_wide: covariate count varies within unit " + unit);
      ordered[t] = rec;
    }
    for (int t = 0; t < T; ++t)
      if (!ordered[t])
        throw DataError("long_to_wide: unit " + unit + " is missing occasion " +
                        std::to_string(occasions[t]));

    for (int m : time_constant_cov) {
      for (int t = 1; t < T; ++t) {
        if (ordered[t]->covariates[m] != ordered[0]->covariates[m])
          throw DataError("long_to_wide: covariate " + std::to_string(m + 1) +
                          " declared time-constant but varies within unit " + unit);
      }
    }

    Eigen::MatrixXi s(T, categories.r);
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < categories.r; ++j) {
        int code = ordered[t]->responses[j];
        if (code < 0 || code >= categories.c[j])
          throw DataError("long_to_wide: response code out of range for unit " + unit +
                          ", occasion " + std::to_string(occasions[t]) + ", variable " +
                          std::to_string(j + 1));
        s(t, j) = code;
      }
    }
    unit_level.S.push_back(std::move(s));

    for (int m = 0; m < p; ++m) unit_level.X1(static_cast<Eigen::Index>(i), m) = ordered[0]->covariates[m];
    Eigen::MatrixXd x2(T - 1, p);
    for (int t = 1; t < T; ++t) {
      for (int m = 0; m < p; ++m) {
        bool constant = std::find(time_constant_cov.begin(), time_constant_cov.end(), m) !=
                        time_constant_cov.end();
        x2(t - 1, m) = constant ? ordered[0]->covariates[m] : ordered[t]->covariates[m];
      }
    }
    unit_level.X2.push_back(std::move(x2));
  }
  unit_level.yv = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(unit_order.size()));
  return collapse(unit_level);
}

Dataset collapse(const Dataset& ds) {
  const int n = ds.n_config();
  std::vector<ConfigKey> keys(n);
  for (int i = 0; i < n; ++i)
    keys[i] = make_key(ds.S[i], ds.X1.row(i).transpose(),
                       ds.X2.empty() ? Eigen::MatrixXd(0, 0) : ds.X2[i]);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] < keys[b]; });

  Dataset out;
  out.categories = ds.categories;
  std::vector<double> freqs;
  std::vector<int> reps;
  for (int idx : order) {
    if (!reps.empty() && keys[idx] == keys[reps.back()]) {
      freqs.back() += ds.yv(idx);
    } else {
      reps.push_back(idx);
      freqs.push_back(ds.yv(idx));
    }
  }
  const int m = static_cast<int>(reps.size());
  out.yv = Eigen::Map<Eigen::VectorXd>(freqs.data(), m);
  out.X1.resize(m, ds.X1.cols());
  for (int i = 0; i < m; ++i) {
    out.S.push_back(ds.S[reps[i]]);
    out.X1.row(i) = ds.X1.row(reps[i]);
    if (!ds.X2.empty()) out.X2.push_back(ds.X2[reps[i]]);
  }
  return out;
}

Dataset expand_units(const Dataset& ds) {
  Dataset out;
  out.categories = ds.categories;
  std::vector<int> reps;
  for (int i = 0; i < ds.n_config(); ++i) {
    long long f = std::llround(ds.yv(i));
    for (long long q = 0; q < f; ++q) reps.push_back(i);
  }
  const int n = static_cast<int>(reps.size());
  out.yv = Eigen::VectorXd::Ones(n);
  out.X1.resize(n, ds.X1.cols());
  for (int i = 0; i < n; ++i) {
    out.S.push_back(ds.S[reps[i]]);
    out.X1.row(i) = ds.X1.row(reps[i]);
    if (!ds.X2.empty()) out.X2.push_back(ds.X2[reps[i]]);
  }
  return out;
}

std::vector<std::string> validate(const Dataset& ds) {
  std::vector<std::string> violations;
  const int n = ds.n_config();
  if (n == 0) {
    violations.push_back("empty dataset");
    return violations;
  }
  if (ds.categories.r != static_cast<int>(ds.S[0].cols()))
    violations.push_back("categories.r does not match response array");
  for (int j = 0; j < ds.categories.r; ++j)
    if (ds.categories.c[j] < 2)
      violations.push_back("variable " + std::to_string(j + 1) + " has fewer than 2 categories");
  if (ds.yv.size() != n) violations.push_back("yv length does not match configuration count");

  const int T = ds.T();
  for (int i = 0; i < n; ++i) {
    if (i < ds.yv.size() && ds.yv(i) <= 0.0)
      violations.push_back("nonpositive frequency at configuration " + std::to_string(i + 1));
    if (ds.S[i].rows() != T || ds.S[i].cols() != ds.categories.r) {
      violations.push_back("ragged response array at configuration " + std::to_string(i + 1));
      continue;
    }
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < ds.categories.r; ++j)
        if (ds.S[i](t, j) < 0 || ds.S[i](t, j) >= ds.categories.c[j])
          violations.push_back("category out of range at configuration " + std::to_string(i + 1) +
                               ", occasion " + std::to_string(t + 1) + ", variable " +
                               std::to_string(j + 1));
  }
  if (ds.X1.rows() != n) violations.push_back("X1 row count does not match configuration count");
  if (!ds.X2.empty()) {
    if (static_cast<int>(ds.X2.size()) != n)
      violations.push_back("X2 length does not match configuration count");
    else
      for (int i = 0; i < n; ++i)
        if (ds.X2[i].rows() != T - 1)
          violations.push_back("X2 occasion count mismatch at configuration " + std::to_string(i + 1));
  }

  // Pairwise-distinct configurations after collapsing.
  std::set<ConfigKey> seen;
  for (int i = 0; i < n && ds.X1.rows() == n; ++i) {
    auto key = make_key(ds.S[i], ds.X1.row(i).transpose(),
                        ds.X2.empty() ? Eigen::MatrixXd(0, 0) : ds.X2[i]);
    if (!seen.insert(key).second)
      violations.push_back("duplicate configuration at row " + std::to_string(i + 1));
  }
  return violations;
}

std::vector<LongRecord> to_long_records(const Dataset& ds) {
  if (ds.p1() != ds.p2() && !(ds.p2() == 0 && ds.X2.empty()))
    throw DataError("to_long_records: occasion-1 and later covariates differ in count");
  Dataset units = expand_units(ds);
  std::vector<LongRecord> out;
  const int T = units.T();
  const int p = units.p1();
  for (int i = 0; i < units.n_config(); ++i) {
    for (int t = 0; t < T; ++t) {
      LongRecord rec;
      rec.unit_id = std::to_string(i + 1);
      rec.occasion = t + 1;
      for (int m = 0; m < p; ++m)
        rec.covariates.push_back(t == 0 ? units.X1(i, m) : units.X2[i](t - 1, m));
      for (int j = 0; j < units.r(); ++j) rec.responses.push_back(units.S[i](t, j));
      out.push_back(std::move(rec));
    }
  }
  return out;
}

void write_long_csv(const std::string& path, const std::vector<LongRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  const int p = records.empty() ? 0 : static_cast<int>(records.front().covariates.size());
  const int r = records.empty() ? 0 : static_cast<int>(records.front().responses.size());
  out << "id,time";
  for (int m = 1; m <= p; ++m) out << ",x" << m;
  for (int j = 1; j <= r; ++j) out << ",y" << j;
  out << "\n";
  for (const auto& rec : records) {
    out << rec.unit_id << "," << rec.occasion;
    for (double v : rec.covariates) out << "," << v;
    for (int code : rec.responses) out << "," << code;
    out << "\n";
  }
}

Dataset read_wide_csv(const std::string& path, const std::optional<CategorySpec>& categories) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty wide-format file: " + path);
  auto header = split_csv_line(line);

  // Discover y{j}_t{t} and x{m}_t{t} columns.
  int r = 0, T = 0, p = 0;
  std::map<std::pair<int, int>, int> ycol, xcol;  // (j,t) or (m,t) -> column
  int id_idx = -1;
  for (size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name == "id") {
      id_idx = static_cast<int>(c);
      continue;
    }
    char kind = name.empty() ? '?' : name[0];
    size_t sep = name.find("_t");
    if ((kind != 'y' && kind != 'x') || sep == std::string::npos)
      throw DataError("wide format: unrecognized column '" + name + "'");
    int idx1 = parse_int(name.substr(1, sep - 1), 1, name);
    int tt = parse_int(name.substr(sep + 2), 1, name);
    if (kind == 'y') {
      ycol[{idx1, tt}] = static_cast<int>(c);
      r = std::max(r, idx1);
    } else {
      xcol[{idx1, tt}] = static_cast<int>(c);
      p = std::max(p, idx1);
    }
    T = std::max(T, tt);
  }
  if (r == 0 || T == 0) throw DataError("wide format: no y{j}_t{t} columns found");
  for (int j = 1; j <= r; ++j)
    for (int t = 1; t <= T; ++t)
      if (!ycol.count({j, t}))
        throw DataError("wide format: missing column y" + std::to_string(j) + "_t" +
                        std::to_string(t));
  for (int m = 1; m <= p; ++m)
    for (int t = 1; t <= T; ++t)
      if (!xcol.count({m, t}))
        throw DataError("wide format: missing column x" + std::to_string(m) + "_t" +
                        std::to_string(t));

  Dataset units;
  std::vector<Eigen::VectorXd> x1_rows;
  int line_no = 1;
  std::vector<std::vector<int>> raw_resp;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": cell count mismatch");
    Eigen::MatrixXi s(T, r);
    for (int j = 1; j <= r; ++j)
      for (int t = 1; t <= T; ++t)
        s(t - 1, j - 1) = parse_int(cells[ycol[{j, t}]], line_no, header[ycol[{j, t}]]);
    units.S.push_back(std::move(s));
    Eigen::VectorXd x1(p);
    Eigen::MatrixXd x2(T - 1, p);
    for (int m = 1; m <= p; ++m) {
      x1(m - 1) = parse_double(cells[xcol[{m, 1}]], line_no, header[xcol[{m, 1}]]);
      for (int t = 2; t <= T; ++t)
        x2(t - 2, m - 1) = parse_double(cells[xcol[{m, t}]], line_no, header[xcol[{m, t}]]);
    }
    x1_rows.push_back(x1);
    units.X2.push_back(std::move(x2));
  }
  (void)id_idx;

  const int n = static_cast<int>(units.S.size());
  if (n == 0) throw DataError("wide format: no data rows");
  units.X1.resize(n, p);
  for (int i = 0; i < n; ++i) units.X1.row(i) = x1_rows[i].transpose();
  units.yv = Eigen::VectorXd::Ones(n);

  if (categories) {
    units.categories = *categories;
    if (units.categories.r != r)
      throw DataError("wide format: declared categories do not match y columns");
  } else {
    units.categories.r = r;
    units.categories.c.assign(r, 2);
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < r; ++j)
          units.categories.c[j] = std::max(units.categories.c[j], units.S[i](t, j) + 1);
  }
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < r; ++j)
        if (units.S[i](t, j) < 0 || units.S[i](t, j) >= units.categories.c[j])
          throw DataError("wide format: response code out of range at row " + std::to_string(i + 1));
  return collapse(units);
}

void write_wide_csv(const std::string& path, const Dataset& ds) {
  if (ds.p1() != ds.p2() && ds.p2() != 0)
    throw DataError("write_wide_csv: occasion-1 and later covariates differ in count");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  Dataset units = expand_units(ds);
  const int T = units.T(), r = units.r(), p = units.p1();
  out << "id";
  for (int j = 1; j <= r; ++j)
    for (int t = 1; t <= T; ++t) out << ",y" << j << "_t" << t;
  for (int m = 1; m <= p; ++m)
    for (int t = 1; t <= T; ++t) out << ",x" << m << "_t" << t;
  out << "\n";
  for (int i = 0; i < units.n_config(); ++i) {
    out << (i + 1);
    for (int j = 0; j < r; ++j)
      for (int t = 0; t < T; ++t) out << "," << units.S[i](t, j);
    for (int m = 0; m < p; ++m) {
      out << "," << units.X1(i, m);
      for (int t = 1; t < T; ++t) out << "," << units.X2[i](t - 1, m);
    }
    out << "\n";
  }
}

}  // namespace lmpanel
