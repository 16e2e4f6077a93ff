#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mbf/errors.hpp"

namespace mbf {

namespace detail {
struct TensorData {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<double> grad;  // same size as data when requires_grad
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major 2-D array of doubles. A Tensor is a cheap shared handle;
/// values are written once at creation (or by the optimizer between tapes)
/// and gradients accumulate during a backward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  std::size_t rows() const { return d_->rows; }
  std::size_t cols() const { return d_->cols; }
  std::size_t size() const { return d_->data.size(); }
  bool requires_grad() const { return d_->requires_grad; }

  double at(std::size_t r, std::size_t c) const { return d_->data[r * d_->cols + c]; }
  double& at(std::size_t r, std::size_t c) { return d_->data[r * d_->cols + c]; }

  std::span<const double> data() const { return d_->data; }
  std::span<double> data() { return d_->data; }
  // Gradient accumulation runs through handles captured by value in backward
  // closures, so the buffer is writable through a const handle.
  std::span<double> grad() const { return d_->grad; }

  /// Value of a 1x1 tensor.
  double value() const;

  void zero_grad() const;
  bool all_finite() const;

  /// Deep copy of values (gradient buffer reset).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  std::shared_ptr<detail::TensorData> d_;
};

/// Ordered record of the primitive operations of one forward pass. Ops are
/// appended in creation order, so walking the record backward visits each op
/// exactly once in reverse topological order. A tape and its tensors belong
/// to one thread; independent tapes may run concurrently.
class Tape {
 public:
  /// Seeds root (a 1x1 tensor) with gradient 1 and replays the tape
  /// backward, accumulating into every grad-requiring tensor.
  void backward(const Tensor& root);

  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

 private:
  std::vector<std::function<void()>> ops_;
};

// Primitive operations. Each checks shapes, computes the forward value and,
// when any operand requires gradient, records its backward rule on the tape.

/// C = A * B. Backward: dA += dC * B^T, dB += A^T * dC.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// Elementwise max(0, x). Backward masks entries where x <= 0.
Tensor relu(Tape& tape, const Tensor& a);

/// Row-wise log-softmax with max subtraction.
Tensor log_softmax(Tape& tape, const Tensor& a);

/// Columns of a followed by columns of b; rows must match.
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);

/// Scalar sqrt(sum of squares). Backward is a / |a|_F and is undefined at
/// the zero matrix (throws SingularGradientError there).
Tensor frobenius_norm_op(Tape& tape, const Tensor& a);

/// Elementwise exp.
Tensor exp_elem(Tape& tape, const Tensor& a);

/// Elementwise sum of two same-shape tensors.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);

/// Adds a 1 x cols bias row to every row of a.
Tensor add_row(Tape& tape, const Tensor& a, const Tensor& bias);

/// Multiplication by a compile-time constant scalar.
Tensor scale(Tape& tape, const Tensor& a, double factor);

/// Elementwise product with a constant (non-differentiated) factor array.
Tensor elemwise_mul_const(Tape& tape, const Tensor& a, std::vector<double> factors);

/// 1x1 sum of all entries.
Tensor sum_all(Tape& tape, const Tensor& a);

/// 1x1 weighted negative log-likelihood: sum_j weights[j] * (-a[j, labels[j]]).
/// `a` holds log-probabilities; labels are 0-based column indices.
Tensor nll_weighted(Tape& tape, const Tensor& a, const std::vector<int>& labels,
                    const std::vector<double>& weights);

/// Finite-difference check of reverse-mode gradients. `build` constructs the
/// scalar objective on a fresh tape from the current parameter values.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
  std::string worst_param;
  std::size_t worst_index = 0;
};

/// Compares reverse-mode gradients of every parameter entry against central
/// differences (f(t+h) - f(t-h)) / 2h. Relative error uses a small floor in
/// the denominator so finite-difference noise on near-zero gradients does
/// not dominate: err = |g - fd| / max(|g|, |fd|, floor).
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& build,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double step, double tol, double denom_floor = 1e-4);

}  // namespace mbf
