#pragma once

#include <cstddef>
#include <vector>

#include "mbf/tensor.hpp"

namespace mbf {

/// One evaluation of the combined objective, all terms echoed. The combined
/// value is l_c + alpha * l_adv - beta * l_bf: the norm term enters with a
/// minus sign because higher confidence (larger norm) is rewarded.
struct LossBreakdown {
  double l_c = 0.0;
  double l_adv = 0.0;
  double l_bf = 0.0;
  double combined = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

/// Mean over the batch of -log P(label | x). `class_log_probs` is B x K
/// rows of log-probabilities; labels are 1-based class indices, one per row.
/// Differentiable through the tape. Throws ShapeError on a size mismatch
/// and IndexError on a label outside [1, K].
Tensor classification_loss(Tape& tape, const Tensor& class_log_probs,
                           const std::vector<int>& labels);

/// Discriminator loss over a (possibly mixed-domain) batch: rows are grouped
/// by their true domain, each group contributes the mean of
/// -log P(domain | x), and group means are summed over the domains present.
/// `true_domains` holds 1-based domain indices. Throws ShapeError on a size
/// mismatch and IndexError on a domain outside [1, M].
Tensor adversarial_loss(Tape& tape, const Tensor& domain_log_probs,
                        const std::vector<int>& true_domains);

/// Confidence term (1/B) * ||A||_F where A = exp(class_log_probs) is the
/// batch output matrix. For row-normalized inputs, B * loss lies in
/// [sqrt(B/K), sqrt(B)]: minimal at uniform rows, maximal at one-hot rows.
/// The norm is bounded away from zero, so the gradient is always defined.
Tensor batch_frobenius_loss(Tape& tape, const Tensor& class_log_probs);

/// combined = l_c + alpha * l_adv - beta * l_bf, inputs echoed.
LossBreakdown combined_objective(double l_c, double l_adv, double l_bf,
                                 double alpha, double beta);

}  // namespace mbf
