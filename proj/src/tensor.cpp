#include "mbf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mbf {

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

std::shared_ptr<detail::TensorData> make_data(std::size_t rows, std::size_t cols,
                                              bool requires_grad) {
  auto d = std::make_shared<detail::TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->data.assign(rows * cols, 0.0);
  d->requires_grad = requires_grad;
  if (requires_grad) d->grad.assign(rows * cols, 0.0);
  return d;
}

bool want_grad(const Tensor& t) { return t.requires_grad(); }

}  // namespace

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  Tensor t;
  t.d_ = make_data(rows, cols, requires_grad);
  return t;
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
  Tensor t = zeros(rows, cols, requires_grad);
  std::fill(t.d_->data.begin(), t.d_->data.end(), value);
  return t;
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
  if (values.size() != rows * cols) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for a " +
                     std::to_string(rows) + "x" + std::to_string(cols) + " tensor");
  }
  Tensor t;
  t.d_ = make_data(rows, cols, requires_grad);
  t.d_->data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(1, 1, {value}, requires_grad);
}

double Tensor::value() const {
  if (d_->data.size() != 1) {
    throw ShapeError("Tensor::value: tensor is " + shape_str(*this) + ", not 1x1");
  }
  return d_->data[0];
}

void Tensor::zero_grad() const {
  if (d_->requires_grad) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : d_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.d_ = make_data(d_->rows, d_->cols, d_->requires_grad);
  t.d_->data = d_->data;
  return t;
}

void Tape::backward(const Tensor& root) {
  if (root.size() != 1) {
    throw ShapeError("Tape::backward: root must be 1x1, got " + shape_str(root));
  }
  if (!root.requires_grad()) return;  // constant objective: nothing to do
  root.grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    (*it)();
  }
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a) + " vs " +
                     shape_str(b));
  }
  const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  Tensor c = Tensor::zeros(m, p, want_grad(a) || want_grad(b));
  // Fixed i-k-j accumulation order keeps runs bit-reproducible.
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* cd = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = ad[i * n + k];
      if (aik == 0.0) continue;
      const double* brow = bd + k * p;
      double* crow = cd + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
  if (c.requires_grad()) {
    tape.record([a, b, c, m, n, p]() {
      const double* gc = c.grad().data();
      if (a.requires_grad()) {
        double* ga = a.grad().data();
        const double* bd = b.data().data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t k = 0; k < n; ++k) {
            double acc = 0.0;
            const double* gcrow = gc + i * p;
            const double* brow = bd + k * p;
            for (std::size_t j = 0; j < p; ++j) acc += gcrow[j] * brow[j];
            ga[i * n + k] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        double* gb = b.grad().data();
        const double* ad = a.data().data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* gcrow = gc + i * p;
          for (std::size_t k = 0; k < n; ++k) {
            const double aik = ad[i * n + k];
            if (aik == 0.0) continue;
            double* gbrow = gb + k * p;
            for (std::size_t j = 0; j < p; ++j) gbrow[j] += aik * gcrow[j];
          }
        }
      }
    });
  }
  return c;
}

Tensor relu(Tape& tape, const Tensor& a) {
  Tensor c = Tensor::zeros(a.rows(), a.cols(), want_grad(a));
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  }
  if (c.requires_grad()) {
    tape.record([a, c]() {
      double* ga = a.grad().data();
      const double* gc = c.grad().data();
      const double* ad = a.data().data();
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (ad[i] > 0.0) ga[i] += gc[i];
      }
    });
  }
  return c;
}

Tensor log_softmax(Tape& tape, const Tensor& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor c = Tensor::zeros(rows, cols, want_grad(a));
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = a.data().data() + i * cols;
    double* y = c.data().data() + i * cols;
    double m = x[0];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - m);
    const double logs = std::log(s);
    for (std::size_t j = 0; j < cols; ++j) y[j] = x[j] - m - logs;
  }
  if (c.requires_grad()) {
    // dX = dY - softmax(x) * rowsum(dY)
    tape.record([a, c, rows, cols]() {
      double* ga = a.grad().data();
      const double* gc = c.grad().data();
      const double* cd = c.data().data();
      for (std::size_t i = 0; i < rows; ++i) {
        double rowsum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) rowsum += gc[i * cols + j];
        for (std::size_t j = 0; j < cols; ++j) {
          ga[i * cols + j] += gc[i * cols + j] - std::exp(cd[i * cols + j]) * rowsum;
        }
      }
    });
  }
  return c;
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts differ, " + shape_str(a) + " vs " + shape_str(b));
  }
  const std::size_t rows = a.rows(), p = a.cols(), q = b.cols();
  Tensor c = Tensor::zeros(rows, p + q, want_grad(a) || want_grad(b));
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(a.data().data() + i * p, p, c.data().data() + i * (p + q));
    std::copy_n(b.data().data() + i * q, q, c.data().data() + i * (p + q) + p);
  }
  if (c.requires_grad()) {
    tape.record([a, b, c, rows, p, q]() {
      const double* gc = c.grad().data();
      if (a.requires_grad()) {
        double* ga = a.grad().data();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += gc[i * (p + q) + j];
        }
      }
      if (b.requires_grad()) {
        double* gb = b.grad().data();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += gc[i * (p + q) + p + j];
        }
      }
    });
  }
  return c;
}

Tensor frobenius_norm_op(Tape& tape, const Tensor& a) {
  double sq = 0.0;
  for (double v : a.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  Tensor c = Tensor::scalar(norm, want_grad(a));
  if (c.requires_grad()) {
    tape.record([a, c, norm]() {
      if (norm == 0.0) {
        throw SingularGradientError(
            "frobenius_norm_op: gradient undefined at the zero matrix");
      }
      double* ga = a.grad().data();
      const double g = c.grad()[0];
      const double* ad = a.data().data();
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g * ad[i] / norm;
    });
  }
  return c;
}

Tensor exp_elem(Tape& tape, const Tensor& a) {
  Tensor c = Tensor::zeros(a.rows(), a.cols(), want_grad(a));
  for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = std::exp(a.data()[i]);
  if (c.requires_grad()) {
    tape.record([a, c]() {
      double* ga = a.grad().data();
      const double* gc = c.grad().data();
      const double* cd = c.data().data();
      for (std::size_t i = 0; i < c.size(); ++i) ga[i] += gc[i] * cd[i];
    });
  }
  return c;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("add: shapes differ, " + shape_str(a) + " vs " + shape_str(b));
  }
  Tensor c = Tensor::zeros(a.rows(), a.cols(), want_grad(a) || want_grad(b));
  for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
  if (c.requires_grad()) {
    tape.record([a, b, c]() {
      const double* gc = c.grad().data();
      if (a.requires_grad()) {
        double* ga = a.grad().data();
        for (std::size_t i = 0; i < c.size(); ++i) ga[i] += gc[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad().data();
        for (std::size_t i = 0; i < c.size(); ++i) gb[i] += gc[i];
      }
    });
  }
  return c;
}

Tensor add_row(Tape& tape, const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row: bias must be 1x" + std::to_string(a.cols()) + ", got " +
                     shape_str(bias));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor c = Tensor::zeros(rows, cols, want_grad(a) || want_grad(bias));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      c.data()[i * cols + j] = a.data()[i * cols + j] + bias.data()[j];
    }
  }
  if (c.requires_grad()) {
    tape.record([a, bias, c, rows, cols]() {
      const double* gc = c.grad().data();
      if (a.requires_grad()) {
        double* ga = a.grad().data();
        for (std::size_t i = 0; i < rows * cols; ++i) ga[i] += gc[i];
      }
      if (bias.requires_grad()) {
        double* gb = bias.grad().data();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) gb[j] += gc[i * cols + j];
        }
      }
    });
  }
  return c;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor c = Tensor::zeros(a.rows(), a.cols(), want_grad(a));
  for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * factor;
  if (c.requires_grad()) {
    tape.record([a, c, factor]() {
      double* ga = a.grad().data();
      const double* gc = c.grad().data();
      for (std::size_t i = 0; i < c.size(); ++i) ga[i] += gc[i] * factor;
    });
  }
  return c;
}

Tensor elemwise_mul_const(Tape& tape, const Tensor& a, std::vector<double> factors) {
  if (factors.size() != a.size()) {
    throw ShapeError("elemwise_mul_const: " + std::to_string(factors.size()) +
                     " factors for a " + shape_str(a) + " tensor");
  }
  Tensor c = Tensor::zeros(a.rows(), a.cols(), want_grad(a));
  for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * factors[i];
  if (c.requires_grad()) {
    tape.record([a, c, f = std::move(factors)]() {
      double* ga = a.grad().data();
      const double* gc = c.grad().data();
      for (std::size_t i = 0; i < c.size(); ++i) ga[i] += gc[i] * f[i];
    });
  }
  return c;
}

Tensor sum_all(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor c = Tensor::scalar(s, want_grad(a));
  if (c.requires_grad()) {
    tape.record([a, c]() {
      double* ga = a.grad().data();
      const double g = c.grad()[0];
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g;
    });
  }
  return c;
}

Tensor nll_weighted(Tape& tape, const Tensor& a, const std::vector<int>& labels,
                    const std::vector<double>& weights) {
  if (labels.size() != a.rows() || weights.size() != a.rows()) {
    throw ShapeError("nll_weighted: need one label and one weight per row, got " +
                     std::to_string(labels.size()) + " labels, " +
                     std::to_string(weights.size()) + " weights for " + shape_str(a));
  }
  const std::size_t cols = a.cols();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= cols) {
      throw IndexError("nll_weighted: label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(cols) + ")");
    }
  }
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    s -= weights[i] * a.at(i, static_cast<std::size_t>(labels[i]));
  }
  Tensor c = Tensor::scalar(s, want_grad(a));
  if (c.requires_grad()) {
    tape.record([a, c, labels, weights, cols]() {
      double* ga = a.grad().data();
      const double g = c.grad()[0];
      for (std::size_t i = 0; i < labels.size(); ++i) {
        ga[i * cols + static_cast<std::size_t>(labels[i])] -= g * weights[i];
      }
    });
  }
  return c;
}

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& build,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double step, double tol, double denom_floor) {
  if (step <= 0.0) throw ConfigError("grad_check: step must be > 0");

  auto eval = [&build]() {
    Tape tape;
    Tensor out = build(tape);
    const double v = out.value();
    if (!std::isfinite(v)) throw EvalError("grad_check: objective is not finite");
    return v;
  };

  // One reverse pass from the unperturbed point.
  for (const auto& [name, p] : params) p.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor out = build(tape);
    if (!std::isfinite(out.value())) throw EvalError("grad_check: objective is not finite");
    tape.backward(out);
    for (const auto& [name, p] : params) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    }
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + step;
      const double fp = eval();
      p.data()[i] = saved - step;
      const double fm = eval();
      p.data()[i] = saved;
      const double fd = (fp - fm) / (2.0 * step);
      const double g = analytic[pi][i];
      const double denom = std::max({std::abs(g), std::abs(fd), denom_floor});
      const double err = std::abs(g - fd) / denom;
      ++report.entries_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = params[pi].first;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace mbf
