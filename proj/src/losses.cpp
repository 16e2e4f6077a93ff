#include "mbf/losses.hpp"

#include <string>

namespace mbf {

namespace {

// 1-based spec indices -> the 0-based columns nll_weighted wants.
std::vector<int> to_zero_based(const std::vector<int>& indices, std::size_t limit,
                               const char* what) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int v : indices) {
    if (v < 1 || static_cast<std::size_t>(v) > limit) {
      throw IndexError(std::string(what) + " " + std::to_string(v) + " outside [1, " +
                       std::to_string(limit) + "]");
    }
    out.push_back(v - 1);
  }
  return out;
}

}  // namespace

Tensor classification_loss(Tape& tape, const Tensor& class_log_probs,
                           const std::vector<int>& labels) {
  const std::size_t b = class_log_probs.rows();
  if (labels.size() != b) {
    throw ShapeError("classification_loss: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(b) + " rows");
  }
  if (b == 0) throw ShapeError("classification_loss: empty batch");
  const std::vector<int> cols = to_zero_based(labels, class_log_probs.cols(), "label");
  const std::vector<double> weights(b, 1.0 / static_cast<double>(b));
  return nll_weighted(tape, class_log_probs, cols, weights);
}

Tensor adversarial_loss(Tape& tape, const Tensor& domain_log_probs,
                        const std::vector<int>& true_domains) {
  const std::size_t b = domain_log_probs.rows();
  if (true_domains.size() != b) {
    throw ShapeError("adversarial_loss: " + std::to_string(true_domains.size()) +
                     " domain indices for " + std::to_string(b) + " rows");
  }
  if (b == 0) throw ShapeError("adversarial_loss: empty batch");
  const std::vector<int> cols =
      to_zero_based(true_domains, domain_log_probs.cols(), "domain");

  // Sum of per-domain means == one weighted NLL with weight 1/n_d per row,
  // where n_d counts that row's domain in this batch.
  std::vector<std::size_t> counts(domain_log_probs.cols(), 0);
  for (int c : cols) ++counts[static_cast<std::size_t>(c)];
  std::vector<double> weights(b);
  for (std::size_t r = 0; r < b; ++r) {
    weights[r] = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(cols[r])]);
  }
  return nll_weighted(tape, domain_log_probs, cols, weights);
}

Tensor batch_frobenius_loss(Tape& tape, const Tensor& class_log_probs) {
  const std::size_t b = class_log_probs.rows();
  if (b == 0) throw ShapeError("batch_frobenius_loss: empty batch");
  Tensor a = exp_elem(tape, class_log_probs);
  return scale(tape, frobenius_norm_op(tape, a), 1.0 / static_cast<double>(b));
}

LossBreakdown combined_objective(double l_c, double l_adv, double l_bf,
                                 double alpha, double beta) {
  LossBreakdown out;
  out.l_c = l_c;
  out.l_adv = l_adv;
  out.l_bf = l_bf;
  out.alpha = alpha;
  out.beta = beta;
  out.combined = l_c + alpha * l_adv - beta * l_bf;
  return out;
}

}  // namespace mbf
