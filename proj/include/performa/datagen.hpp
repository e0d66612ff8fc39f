#pragma once

// Synthetic tasks (2D logistic, 7D quadratic, pricing) and the Housing CSV
// ingest with a simulated performative shift on selected coordinates.

#include "performa/losses.hpp"
#include "performa/pushforward.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace performa {

/// Missing or malformed input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Task {
  PerformativeModel model;
  Loss loss;
};

/// Class 1 fixed, class 0 moving with mean class0_mean + gamma diag(0.1, 0.9) theta.
inline Task build_gauss2d(double gamma, double sigma = 0.5,
                          const Vector& class0_mean = Vector::Constant(2, -1.0),
                          const Vector& class1_mean = Vector::Zero(2)) {
  if (gamma < 0.0) throw std::invalid_argument("build_gauss2d: gamma must be >= 0");
  if (!(sigma > 0.0)) throw std::invalid_argument("build_gauss2d: sigma must be > 0");
  require_dim(class0_mean.size(), 2, "build_gauss2d class0_mean");
  require_dim(class1_mean.size(), 2, "build_gauss2d class1_mean");
  GaussianClassModel g{class0_mean, class1_mean, sigma, {}, {}, 0.5};
  Vector diag(2);
  diag << 0.1, 0.9;
  return {PerformativeModel(g, ShiftOperator::diagonal(gamma * diag)),
          Loss::classification(SurrogateKind::logistic)};
}

inline Vector gauss7d_class0_mean() {
  Vector m(7);
  m << 1.0, 2.0, 0.5, 0.5, 0.0, 0.0, 0.0;
  return m;
}

inline Vector gauss7d_pi_diag() {
  Vector p(7);
  p << 0.1, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0;
  return p;
}

/// Seven dimensions, two of them performative; quadratic surrogate.
inline Task build_gauss7d(double sigma, const Vector& class1_mean = Vector::Zero(7)) {
  if (!(sigma > 0.0)) throw std::invalid_argument("build_gauss7d: sigma must be > 0");
  require_dim(class1_mean.size(), 7, "build_gauss7d class1_mean");
  GaussianClassModel g{gauss7d_class0_mean(), class1_mean, sigma, {}, {}, 0.5};
  return {PerformativeModel(g, ShiftOperator::diagonal(gauss7d_pi_diag())),
          Loss::classification(SurrogateKind::quadratic)};
}

/// Demand Z = U - Pi theta with U ~ N(mu, sigma^2 I); loss -z^T theta.
inline Task build_pricing(const Vector& mu, const Vector& pi_diag, double sigma = 1.0,
                          bool allow_nonconvex = false) {
  require_dim(pi_diag.size(), mu.size(), "build_pricing");
  if (!allow_nonconvex && (pi_diag.array() <= 0.0).any())
    throw std::invalid_argument("build_pricing: elasticities must be positive (set allow_nonconvex)");
  return {PerformativeModel::unlabeled(GaussianLaw::isotropic(mu, sigma),
                                       ShiftOperator::diagonal(-pi_diag)),
          Loss::pricing()};
}

/// theta*_i = mu_i / (2 Pi_ii).
inline Vector pricing_optimum(const Vector& mu, const Vector& pi_diag) {
  return mu.cwiseQuotient(2.0 * pi_diag);
}

// --- Housing -----------------------------------------------------------------

struct HousingTable {
  std::vector<std::string> feature_names;
  std::string label_name = "binaryClass";
  Matrix features;
  std::vector<std::uint8_t> labels;
};

struct HousingTaskSpec {
  std::string csv_path;
  double lambda_shift = 0.0;
  std::vector<Eigen::Index> shifted_coords{0, 4, 6};
  bool standardize = true;
  bool intercept = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"'");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"'");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline HousingTable parse_housing_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("housing data not found: " + path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) header = detail::split_csv(line);
  }
  if (header.size() < 2) throw DataError(path + ": missing header or no feature columns");

  std::size_t label_col = header.size() - 1;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == "binaryClass") label_col = c;

  HousingTable table;
  table.label_name = header[label_col];
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != label_col) table.feature_names.push_back(header[c]);

  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != header.size())
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_col) {
        const auto& v = cells[c];
        if (v == "1" || v == "P") table.labels.push_back(1);
        else if (v == "0" || v == "N") table.labels.push_back(0);
        else throw DataError(path + ":" + std::to_string(lineno) + ": non-binary label '" + v + "'");
        continue;
      }
      char* end = nullptr;
      const double x = std::strtod(cells[c].c_str(), &end);
      if (cells[c].empty() || *end != '\0' || !std::isfinite(x))
        throw DataError(path + ":" + std::to_string(lineno) + ": bad numeric value '" + cells[c] + "'");
      values.push_back(x);
    }
  }
  const auto rows = static_cast<Eigen::Index>(table.labels.size());
  const auto cols = static_cast<Eigen::Index>(table.feature_names.size());
  if (rows == 0) throw DataError(path + ": no data rows");
  table.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, cols);
  return table;
}

/// Writes the table with labels as 0/1 in the last column; values are
/// printed with 17 significant digits so a reload is bit-identical.
inline void write_housing_csv(const HousingTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& name : table.feature_names) out << name << ',';
  out << table.label_name << '\n';
  for (Eigen::Index i = 0; i < table.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.features.cols(); ++j)
      out << detail::format_double(table.features(i, j)) << ',';
    out << int(table.labels[static_cast<std::size_t>(i)]) << '\n';
  }
}

/// Z-scores every column (population standard deviation).
inline void standardize_columns(Matrix& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt(x.col(j).squaredNorm() / static_cast<double>(x.rows()));
    if (sd > 0.0) x.col(j) /= sd;
  }
}

/// Shift lambda * theta_i on the listed coordinates of class 0 only.
inline Matrix housing_shift_matrix(Eigen::Index d, double lambda,
                                   const std::vector<Eigen::Index>& coords) {
  Vector diag = Vector::Zero(d);
  for (auto c : coords) {
    if (c < 0 || c >= d) throw DataError("shifted coordinate " + std::to_string(c) + " out of range");
    diag[c] = lambda;
  }
  return Matrix(diag.asDiagonal());
}

inline Task housing_task(HousingTable table, const HousingTaskSpec& spec) {
  Matrix x = std::move(table.features);
  if (spec.standardize) standardize_columns(x);
  if (spec.intercept) {
    x.conservativeResize(Eigen::NoChange, x.cols() + 1);
    x.col(x.cols() - 1).setOnes();
  }
  const auto d = x.cols();
  const auto n1 = static_cast<Eigen::Index>(std::count(table.labels.begin(), table.labels.end(), 1));
  const auto n0 = x.rows() - n1;
  if (n0 == 0 || n1 == 0) throw DataError("housing data must contain both classes");
  EmpiricalPool pool0{Matrix(n0, d)}, pool1{Matrix(n1, d)};
  Eigen::Index i0 = 0, i1 = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (table.labels[static_cast<std::size_t>(i)]) pool1.rows.row(i1++) = x.row(i);
    else pool0.rows.row(i0++) = x.row(i);
  }
  const double rho = static_cast<double>(n1) / static_cast<double>(x.rows());
  return {PerformativeModel(std::move(pool0), std::move(pool1), rho,
                            ShiftOperator(housing_shift_matrix(d, spec.lambda_shift, spec.shifted_coords))),
          Loss::classification(SurrogateKind::logistic)};
}

inline Task load_housing(const HousingTaskSpec& spec) {
  return housing_task(parse_housing_csv(spec.csv_path), spec);
}

/// Stand-in with the Housing schema (8 numeric features, binaryClass P/N)
/// for runs without the real dataset.
inline HousingTable synthetic_housing(std::size_t n, std::uint64_t seed) {
  static const char* names[] = {"median_income", "housing_median_age", "total_rooms",
                                "total_bedrooms", "population",         "households",
                                "latitude",      "longitude"};
  HousingTable t;
  t.feature_names.assign(std::begin(names), std::end(names));
  t.features.resize(static_cast<Eigen::Index>(n), 8);
  t.labels.resize(n);
  Rng rng(seed);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    const bool high = coin(rng);
    const auto r = static_cast<Eigen::Index>(i);
    const double income = (high ? 5.0 : 3.0) + 1.5 * z(rng);
    const double households = std::max(1.0, 450.0 + 200.0 * z(rng));
    t.features(r, 0) = std::max(0.5, income);
    t.features(r, 1) = std::round(std::clamp(28.0 + (high ? 3.0 : -3.0) + 12.0 * z(rng), 1.0, 52.0));
    t.features(r, 2) = std::round(households * (5.0 + (high ? 0.8 : 0.0) + 0.7 * z(rng)));
    t.features(r, 3) = std::round(households * (1.05 + 0.1 * z(rng)));
    t.features(r, 4) = std::round(households * (2.9 + 0.6 * z(rng)));
    t.features(r, 5) = std::round(households);
    t.features(r, 6) = 35.6 + (high ? -0.6 : 0.4) + 2.1 * z(rng);
    t.features(r, 7) = -119.6 + (high ? -0.5 : 0.3) + 2.0 * z(rng);
    t.labels[i] = high ? 1 : 0;
  }
  return t;
}

}  // namespace performa
