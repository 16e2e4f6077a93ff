#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mbf/errors.hpp"
#include "mbf/rng.hpp"

namespace mbf {

/// B x K matrix of per-sample class probabilities: every row is a point on
/// the probability simplex (entries >= 0, row sum 1). Kept independent of the
/// autodiff tensor so these routines can serve as an oracle for it.
struct BatchOutputMatrix {
  std::size_t b = 0;  // rows: samples in the batch
  std::size_t k = 0;  // cols: classes
  std::vector<double> a;  // row-major values

  static BatchOutputMatrix from(std::size_t b, std::size_t k, std::vector<double> values);
  double at(std::size_t i, std::size_t j) const { return a[i * k + j]; }
};

/// True iff every row sums to 1 within tol and every entry is >= -tol.
/// Throws ShapeError on an empty matrix.
bool validate_output_matrix(const BatchOutputMatrix& m, double tol);

/// -(1/B) * sum_ij a_ij * log(a_ij), with 0 * log 0 = 0. Result lies in
/// [0, log K]: zero for one-hot rows, log K for uniform rows.
/// Throws ConstraintError if the matrix is not row-stochastic (tol 1e-9).
double batch_entropy(const BatchOutputMatrix& m);

/// sqrt(sum_ij a_ij^2). For a row-stochastic matrix the value lies in
/// [sqrt(B/K), sqrt(B)]: minimal for uniform rows, maximal for one-hot rows.
/// Throws ConstraintError if the matrix is not row-stochastic (tol 1e-9).
double batch_frobenius(const BatchOutputMatrix& m);

/// One probability row with a distinguished free coordinate j. Coordinates
/// are numbered 1..K as in the derivative formulas; the K-th coordinate is
/// dependent: perturbing coordinate j by delta subtracts delta from
/// coordinate K so the row stays on the simplex.
struct RowProbe {
  std::vector<double> row;
  std::size_t j = 1;   // free coordinate, 1 <= j < K
  double delta = 0.0;  // signed perturbation magnitude

  /// The perturbed row (row[j] += delta, row[K] -= delta). Throws
  /// DomainError if either changed coordinate leaves [0, 1].
  std::vector<double> perturbed() const;
};

/// Partial derivatives along the dependent-coordinate path of the row
/// square-sum f(A_i) = sum_j A_ij^2 and the row entropy
/// h(A_i) = -sum_j A_ij log A_ij, taken with respect to the free
/// coordinate j while coordinate K compensates:
///   df = 2 A_ij - 2 A_iK
///   dh = -log A_ij + log A_iK
struct RowPartials {
  double df = 0.0;
  double dh = 0.0;
};

/// Throws DomainError if any row entry is <= 0 (the entropy partial needs
/// logs) and IndexError if j is outside [1, K-1] (coordinate K is the
/// dependent one, not a free variable).
RowPartials row_partials(const RowProbe& probe);

/// Sign relationship of one (df, dh) pair. The two partials always pull in
/// opposite directions: whenever one is positive the other is negative, and
/// they vanish together exactly at A_ij = A_iK.
enum class SignClass {
  opposite,   // strictly opposite signs
  both_zero,  // |df| < 1e-12 and |dh| < 1e-9 (the shared stationary point)
  mismatch,   // anything else: same sign, or only one vanishing
};

SignClass sign_class(double df, double dh);

/// Random strict-interior simplex row: normalized exponential draws, floored
/// so every coordinate is at least min_coord.
std::vector<double> sample_interior_row(std::size_t k, RngStream& rng,
                                        double min_coord = 1e-6);

struct MonotonicityReport {
  std::size_t checked = 0;
  std::size_t sign_failures = 0;
  std::size_t fd_failures = 0;
  std::size_t both_zero = 0;
};

/// Samples `trials` random interior simplex rows (K coordinates, minimum
/// 1e-6) and free indices, and checks on each that (a) the analytic partials
/// of f and h have strictly opposite signs or vanish together, and (b) each
/// analytic partial matches a central finite difference along the (j, K)
/// path within 1e-6 relative. Differences are taken on the two changing
/// coordinates only (the remaining terms of f and h are constant along the
/// path and would only add cancellation noise), and the step shrinks with
/// the distance to the simplex boundary so the entropy difference stays in
/// its sub-1e-6 truncation regime.
/// Throws ConfigError if trials == 0 or k < 2.
MonotonicityReport verify_opposite_monotonicity(std::size_t trials, std::size_t k,
                                                std::uint64_t rng_seed);

}  // namespace mbf
