#include "mbf/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mbf {

BatchOutputMatrix BatchOutputMatrix::from(std::size_t b, std::size_t k,
                                          std::vector<double> values) {
  if (values.size() != b * k) {
    throw ShapeError("BatchOutputMatrix: " + std::to_string(values.size()) +
                     " values for a " + std::to_string(b) + "x" + std::to_string(k) +
                     " matrix");
  }
  return BatchOutputMatrix{b, k, std::move(values)};
}

bool validate_output_matrix(const BatchOutputMatrix& m, double tol) {
  if (m.b == 0 || m.k == 0) {
    throw ShapeError("validate_output_matrix: empty matrix (" + std::to_string(m.b) +
                     "x" + std::to_string(m.k) + ")");
  }
  for (std::size_t i = 0; i < m.b; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m.k; ++j) {
      const double v = m.at(i, j);
      if (v < -tol) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

namespace {

constexpr double kValidationTol = 1e-9;

void require_valid(const BatchOutputMatrix& m, const char* who) {
  if (!validate_output_matrix(m, kValidationTol)) {
    throw ConstraintError(std::string(who) +
                          ": matrix rows must be probability vectors (sum 1, entries >= 0)");
  }
}

}  // namespace

double batch_entropy(const BatchOutputMatrix& m) {
  require_valid(m, "batch_entropy");
  double s = 0.0;
  for (double v : m.a) {
    if (v > 0.0) s -= v * std::log(v);  // 0 log 0 = 0; tiny negatives count as 0
  }
  return s / static_cast<double>(m.b);
}

double batch_frobenius(const BatchOutputMatrix& m) {
  require_valid(m, "batch_frobenius");
  double sq = 0.0;
  for (double v : m.a) sq += v * v;
  return std::sqrt(sq);
}

std::vector<double> RowProbe::perturbed() const {
  const std::size_t k = row.size();
  if (j < 1 || j >= k) {
    throw IndexError("RowProbe: free coordinate " + std::to_string(j) +
                     " outside [1, " + std::to_string(k) + ")");
  }
  std::vector<double> out = row;
  out[j - 1] += delta;
  out[k - 1] -= delta;
  if (out[j - 1] < 0.0 || out[j - 1] > 1.0 || out[k - 1] < 0.0 || out[k - 1] > 1.0) {
    throw DomainError("RowProbe: perturbation " + std::to_string(delta) +
                      " leaves the simplex");
  }
  return out;
}

RowPartials row_partials(const RowProbe& probe) {
  const std::size_t k = probe.row.size();
  if (k < 2) throw ShapeError("row_partials: row needs at least 2 coordinates");
  if (probe.j < 1 || probe.j >= k) {
    throw IndexError("row_partials: free coordinate " + std::to_string(probe.j) +
                     " outside [1, " + std::to_string(k) +
                     ") (the last coordinate is dependent)");
  }
  for (double v : probe.row) {
    if (v <= 0.0) {
      throw DomainError("row_partials: entry " + std::to_string(v) +
                        " is not strictly positive, entropy partial undefined");
    }
  }
  const double a = probe.row[probe.j - 1];
  const double b = probe.row[k - 1];
  return RowPartials{2.0 * a - 2.0 * b, std::log(b) - std::log(a)};
}

SignClass sign_class(double df, double dh) {
  const bool f_zero = std::abs(df) < 1e-12;
  const bool h_zero = std::abs(dh) < 1e-9;
  if (f_zero && h_zero) return SignClass::both_zero;
  if (f_zero || h_zero) return SignClass::mismatch;  // must vanish together
  return (df > 0.0) != (dh > 0.0) ? SignClass::opposite : SignClass::mismatch;
}

std::vector<double> sample_interior_row(std::size_t k, RngStream& rng, double min_coord) {
  if (k < 2) throw ConfigError("sample_interior_row: need at least 2 coordinates");
  if (min_coord <= 0.0 || min_coord * static_cast<double>(k) >= 1.0) {
    throw ConfigError("sample_interior_row: floor " + std::to_string(min_coord) +
                      " infeasible for k = " + std::to_string(k));
  }
  std::vector<double> w(k);
  double sum = 0.0;
  while (sum <= 0.0) {
    for (double& v : w) {
      v = -std::log(1.0 - rng.uniform01());  // exponential draw
      sum += v;
    }
  }
  // Affine floor keeps the sum at 1 while guaranteeing every coordinate
  // is at least min_coord.
  const double span = 1.0 - min_coord * static_cast<double>(k);
  for (double& v : w) v = min_coord + span * (v / sum);
  return w;
}

namespace {

// f and h restricted to the (j, K) path: only coordinates j and K change, so
// the other terms cancel exactly in a central difference and are omitted to
// keep rounding noise out of the quotient.
double path_f(double a, double b) { return a * a + b * b; }
double path_h(double a, double b) { return -a * std::log(a) - b * std::log(b); }

bool fd_matches(double analytic, double fd, double tol) {
  const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-3});
  return std::abs(analytic - fd) / denom <= tol;
}

}  // namespace

MonotonicityReport verify_opposite_monotonicity(std::size_t trials, std::size_t k,
                                                std::uint64_t rng_seed) {
  if (trials == 0) throw ConfigError("verify_opposite_monotonicity: trials must be > 0");
  if (k < 2) throw ConfigError("verify_opposite_monotonicity: k must be >= 2");

  RngStream rng(rng_seed);
  MonotonicityReport report;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::vector<double> row = sample_interior_row(k, rng);
    const std::size_t j = 1 + rng.index(k - 1);
    const RowPartials d = row_partials(RowProbe{row, j, 0.0});

    ++report.checked;
    switch (sign_class(d.df, d.dh)) {
      case SignClass::opposite:
        break;
      case SignClass::both_zero:
        ++report.both_zero;
        break;
      case SignClass::mismatch:
        ++report.sign_failures;
        break;
    }

    const double a = row[j - 1];
    const double b = row[k - 1];
    const double m = std::min(a, b);
    // f is quadratic along the path, so its central difference is exact for
    // any step; a large one just dilutes rounding.
    const double step_f = 0.25 * m;
    const double fd_f =
        (path_f(a + step_f, b - step_f) - path_f(a - step_f, b + step_f)) / (2.0 * step_f);
    // h has third derivative ~ 1/m^2 near the boundary; a step of 5e-4 * m
    // keeps the truncation error a few orders below the 1e-6 budget while
    // leaving the quotient enough bits to stand on.
    const double step_h = 5e-4 * m;
    const double fd_h =
        (path_h(a + step_h, b - step_h) - path_h(a - step_h, b + step_h)) / (2.0 * step_h);
    if (!fd_matches(d.df, fd_f, 1e-6) || !fd_matches(d.dh, fd_h, 1e-6)) {
      ++report.fd_failures;
    }
  }
  return report;
}

}  // namespace mbf
