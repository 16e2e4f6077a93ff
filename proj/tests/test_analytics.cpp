#include <doctest.h>

#include <cmath>
#include <vector>

#include "mbf/analytics.hpp"

using namespace mbf;

namespace {

// Independent full-row evaluations used to cross-check the closed forms.
double row_square_sum(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

double row_entropy(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) {
    if (v > 0.0) s -= v * std::log(v);
  }
  return s;
}

}  // namespace

TEST_SUITE("analytics") {

TEST_CASE("validate_output_matrix") {
  // one-hot rows of the identity are valid
  CHECK(validate_output_matrix(BatchOutputMatrix::from(2, 2, {1, 0, 0, 1}), 1e-9));
  // row sums to 1.1
  CHECK_FALSE(validate_output_matrix(BatchOutputMatrix::from(1, 2, {0.6, 0.5}), 1e-9));
  CHECK(validate_output_matrix(BatchOutputMatrix::from(1, 3, {0.5, 0.3, 0.2}), 1e-9));
  // negative entry beyond tolerance
  CHECK_FALSE(validate_output_matrix(BatchOutputMatrix::from(1, 2, {1.5, -0.5}), 1e-9));
  CHECK_THROWS_AS(validate_output_matrix(BatchOutputMatrix{0, 2, {}}, 1e-9), ShapeError);
  CHECK_THROWS_AS(BatchOutputMatrix::from(2, 2, {1, 0, 0}), ShapeError);
}

TEST_CASE("batch_entropy oracle values") {
  // one-hot rows: minimum entropy 0
  CHECK(batch_entropy(BatchOutputMatrix::from(3, 2, {1, 0, 0, 1, 1, 0})) == 0.0);
  // uniform 1x4 row: maximum entropy log 4
  CHECK(batch_entropy(BatchOutputMatrix::from(1, 4, {0.25, 0.25, 0.25, 0.25})) ==
        doctest::Approx(1.3862943611198906).epsilon(1e-14));
  // hand-summed row
  CHECK(batch_entropy(BatchOutputMatrix::from(1, 3, {0.5, 0.3, 0.2})) ==
        doctest::Approx(1.0296530140645735).epsilon(1e-13));
  // entropy averages over rows
  CHECK(batch_entropy(BatchOutputMatrix::from(2, 2, {0.5, 0.5, 1.0, 0.0})) ==
        doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-13));
  CHECK_THROWS_AS(batch_entropy(BatchOutputMatrix::from(1, 2, {0.6, 0.5})), ConstraintError);
}

TEST_CASE("batch_frobenius oracle values") {
  CHECK(batch_frobenius(BatchOutputMatrix::from(2, 2, {1, 0, 0, 1})) ==
        doctest::Approx(1.4142135623730951).epsilon(1e-14));  // sqrt(B), one-hot
  CHECK(batch_frobenius(BatchOutputMatrix::from(1, 4, {0.25, 0.25, 0.25, 0.25})) ==
        0.5);  // sqrt(B/K), uniform; exact in floating point
  CHECK(batch_frobenius(BatchOutputMatrix::from(1, 3, {0.5, 0.3, 0.2})) ==
        doctest::Approx(0.6164414002969432).epsilon(1e-12));
  CHECK_THROWS_AS(batch_frobenius(BatchOutputMatrix::from(1, 2, {2.0, -1.0})),
                  ConstraintError);
}

TEST_CASE("entropy and frobenius bounds on random matrices") {
  RngStream rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 1 + rng.index(6);
    const std::size_t k = 2 + rng.index(5);
    std::vector<double> vals;
    vals.reserve(b * k);
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<double> row = sample_interior_row(k, rng);
      vals.insert(vals.end(), row.begin(), row.end());
    }
    BatchOutputMatrix m{b, k, vals};
    REQUIRE(validate_output_matrix(m, 1e-9));
    const double h = batch_entropy(m);
    const double f = batch_frobenius(m);
    const double bd = static_cast<double>(b);
    const double kd = static_cast<double>(k);
    CHECK(h >= -1e-9);
    CHECK(h <= std::log(kd) + 1e-9);
    CHECK(f >= std::sqrt(bd / kd) - 1e-9);
    CHECK(f <= std::sqrt(bd) + 1e-9);
  }
}

TEST_CASE("row probe perturbation stays on the simplex") {
  RowProbe p{{0.6, 0.4}, 1, 0.2};
  std::vector<double> r = p.perturbed();
  CHECK(r[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(r[0] + r[1] == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS((RowProbe{{0.6, 0.4}, 1, 0.5}.perturbed()), DomainError);
  CHECK_THROWS_AS((RowProbe{{0.6, 0.4}, 1, -0.7}.perturbed()), DomainError);
  CHECK_THROWS_AS((RowProbe{{0.6, 0.4}, 2, 0.1}.perturbed()), IndexError);
}

TEST_CASE("row_partials oracle values") {
  // stationary point: free and dependent coordinates equal
  RowPartials d = row_partials(RowProbe{{0.5, 0.5}, 1, 0.0});
  CHECK(d.df == 0.0);
  CHECK(d.dh == 0.0);

  d = row_partials(RowProbe{{0.6, 0.4}, 1, 0.0});
  CHECK(d.df == doctest::Approx(0.4).epsilon(1e-13));
  CHECK(d.dh == doctest::Approx(-0.4054651081081645).epsilon(1e-13));  // log(2/3)

  d = row_partials(RowProbe{{0.2, 0.3, 0.5}, 1, 0.0});
  CHECK(d.df == doctest::Approx(-0.6).epsilon(1e-13));
  CHECK(d.dh == doctest::Approx(0.9162907318741551).epsilon(1e-13));  // log(2.5)

  // middle coordinate of a 3-row as the free one
  d = row_partials(RowProbe{{0.2, 0.3, 0.5}, 2, 0.0});
  CHECK(d.df == doctest::Approx(-0.4).epsilon(1e-13));
  CHECK(d.dh == doctest::Approx(std::log(0.5 / 0.3)).epsilon(1e-13));

  CHECK_THROWS_AS(row_partials(RowProbe{{1.0, 0.0}, 1, 0.0}), DomainError);
  CHECK_THROWS_AS(row_partials(RowProbe{{0.5, 0.5}, 2, 0.0}), IndexError);
  CHECK_THROWS_AS(row_partials(RowProbe{{0.5, 0.5}, 0, 0.0}), IndexError);
}

TEST_CASE("sign_class") {
  CHECK(sign_class(0.4, -0.405) == SignClass::opposite);
  CHECK(sign_class(-0.6, 0.916) == SignClass::opposite);
  CHECK(sign_class(0.0, 0.0) == SignClass::both_zero);
  CHECK(sign_class(0.4, 0.405) == SignClass::mismatch);
  CHECK(sign_class(-0.4, -0.405) == SignClass::mismatch);
  // vanishing alone is a mismatch: the partials must share their zero
  CHECK(sign_class(0.0, 0.5) == SignClass::mismatch);
  CHECK(sign_class(0.5, 0.0) == SignClass::mismatch);
}

TEST_CASE("sample_interior_row honors the floor and the simplex") {
  RngStream rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.index(9);
    std::vector<double> row = sample_interior_row(k, rng);
    double sum = 0.0;
    for (double v : row) {
      CHECK(v >= 1e-6);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(sample_interior_row(1, rng), ConfigError);
  CHECK_THROWS_AS(sample_interior_row(4, rng, 0.25), ConfigError);
  CHECK_THROWS_AS(sample_interior_row(4, rng, 0.0), ConfigError);
}

TEST_CASE("verify_opposite_monotonicity finds no failures") {
  MonotonicityReport r = verify_opposite_monotonicity(1000, 2, 7);
  CHECK(r.checked == 1000);
  CHECK(r.sign_failures == 0);
  CHECK(r.fd_failures == 0);

  r = verify_opposite_monotonicity(1000, 5, 7);
  CHECK(r.checked == 1000);
  CHECK(r.sign_failures == 0);
  CHECK(r.fd_failures == 0);

  CHECK_THROWS_AS(verify_opposite_monotonicity(0, 2, 7), ConfigError);
  CHECK_THROWS_AS(verify_opposite_monotonicity(10, 1, 7), ConfigError);
}

TEST_CASE("partials match fixed-step differences on interior rows") {
  // With every coordinate at least 1e-2 a plain 1e-6 central difference of
  // f and h along the (j, K) path reproduces the analytic partials to 1e-6
  // relative.
  RngStream rng(77);
  const double step = 1e-6;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + rng.index(5);
    std::vector<double> row = sample_interior_row(k, rng, 1e-2);
    const std::size_t j = 1 + rng.index(k - 1);
    const RowPartials d = row_partials(RowProbe{row, j, 0.0});

    const double a = row[j - 1];
    const double b = row[k - 1];
    // Only coordinates j and K vary along the path, so differencing their
    // contribution alone is the same quotient with the constant terms of
    // the full-row sums cancelled exactly.
    const double fd_f = ((a + step) * (a + step) + (b - step) * (b - step) -
                         (a - step) * (a - step) - (b + step) * (b + step)) /
                        (2 * step);
    auto ent = [](double x) { return -x * std::log(x); };
    const double fd_h = (ent(a + step) + ent(b - step) - ent(a - step) - ent(b + step)) /
                        (2 * step);

    const double err_f =
        std::abs(d.df - fd_f) / std::max({std::abs(d.df), std::abs(fd_f), 1e-3});
    const double err_h =
        std::abs(d.dh - fd_h) / std::max({std::abs(d.dh), std::abs(fd_h), 1e-3});
    CHECK(err_f <= 1e-6);
    CHECK(err_h <= 1e-6);
  }
}

TEST_CASE("partials are derivatives of the full-row functions") {
  // Coarser direct check against full-row evaluations of f and h: no
  // path-local cancellation trick, plain central difference.
  RngStream rng(78);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.index(5);
    std::vector<double> row = sample_interior_row(k, rng, 5e-2);
    const std::size_t j = 1 + rng.index(k - 1);
    const RowPartials d = row_partials(RowProbe{row, j, 0.0});
    const double step = 1e-5;
    auto eval = [&](double t, double (*fn)(const std::vector<double>&)) {
      std::vector<double> r = row;
      r[j - 1] += t;
      r[k - 1] -= t;
      return fn(r);
    };
    const double fd_f =
        (eval(step, row_square_sum) - eval(-step, row_square_sum)) / (2 * step);
    const double fd_h = (eval(step, row_entropy) - eval(-step, row_entropy)) / (2 * step);
    CHECK(std::abs(d.df - fd_f) < 1e-6);
    CHECK(std::abs(d.dh - fd_h) < 1e-6);
  }
}

}  // TEST_SUITE
