#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mbf/data.hpp"
#include "mbf/losses.hpp"
#include "mbf/model.hpp"
#include "mbf/rng.hpp"
#include "mbf/tensor.hpp"

namespace mbf {

enum class OptimizerKind { plain_sgd, momentum, adaptive_moment };

struct TrainConfig {
  double alpha = 0.5;
  double beta = 1.0;
  std::size_t batch_size = 16;  // per domain
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::adaptive_moment;
  std::size_t epochs = 10;
  std::uint64_t rng_seed = 0;
  std::size_t eval_every = 1;  // epochs between validation passes
  // Bitwise check that each step touched only its own parameter set.
  bool assert_update_partition = true;
};

/// Throws ConfigError on alpha/beta < 0, batch_size < 1, learning_rate <= 0
/// or eval_every < 1.
void validate(const TrainConfig& cfg);

/// One mini-batch from one domain: dense features, plus 1-based labels for
/// labeled batches (empty for unlabeled ones).
struct Batch {
  Tensor x;
  std::vector<int> labels;
};

/// One labeled and one unlabeled batch per domain, parallel to the dataset
/// list passed to sample_batches.
struct BatchSet {
  std::vector<Batch> labeled;
  std::vector<Batch> unlabeled;
};

/// Cycles through 0..n-1 without replacement, reshuffling at the start of
/// every pass, so a pool of exactly B samples yields the same B indices
/// each epoch in fresh order.
class ShuffledCycle {
 public:
  ShuffledCycle() = default;
  explicit ShuffledCycle(std::size_t n);
  std::size_t next(RngStream& rng);
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

/// Per-domain draw cursors; the epoch position lives here, not in the rng.
struct SamplerState {
  std::vector<ShuffledCycle> labeled;
  std::vector<ShuffledCycle> unlabeled;
};

/// Builds cursors for the datasets. Throws DataError, naming the domain, if
/// any domain is missing labeled or unlabeled samples.
SamplerState make_sampler_state(const std::vector<DomainDataset>& datasets);

/// Draws one labeled and one unlabeled batch of `batch_size` per domain,
/// without replacement within an epoch (short pools wrap around).
BatchSet sample_batches(const std::vector<DomainDataset>& datasets, std::size_t batch_size,
                        SamplerState& cursors, RngStream& rng);

/// First-order update rule with per-parameter state. Momentum uses decay
/// 0.9; the adaptive-moment method uses decays 0.9/0.999 with bias
/// correction and epsilon 1e-8.
struct Optimizer {
  OptimizerKind kind = OptimizerKind::adaptive_moment;
  double learning_rate = 1e-4;
  std::size_t steps = 0;
  std::vector<std::vector<double>> m1;  // momentum / first moment
  std::vector<std::vector<double>> m2;  // second moment

  /// Applies one update from the accumulated gradients. The slot list must
  /// be the same parameter sequence on every call.
  void step(std::vector<std::pair<std::string, Tensor>> params);
};

/// Everything that persists across steps. `iteration` counts completed
/// main-step/discriminator-step pairs (the train loop increments it after
/// each pair).
struct TrainState {
  MdtcModel model;
  Optimizer main_opt;
  Optimizer disc_opt;
  SamplerState cursors;
  RngStream rng;
  std::size_t iteration = 0;

  TrainState() : rng(0) {}
};

/// Initializes the model (seeded by cfg.rng_seed), both optimizers and the
/// batch cursors. Validates the config.
TrainState make_train_state(const MdtcArch& arch, std::size_t classes,
                            const std::vector<DomainDataset>& train_sets,
                            const TrainConfig& cfg);

/// One descent step on l_c - alpha * l_adv - beta * l_bf for the shared
/// extractor, the per-domain extractors and the classifier; discriminator
/// parameters receive gradients but no update (bitwise-asserted when
/// cfg.assert_update_partition). The classification term uses labeled
/// batches; the adversarial term (negated for the update so the shared
/// features learn to confuse the discriminator) uses labeled and unlabeled
/// rows; the confidence term uses unlabeled rows only. The returned
/// breakdown reports the combined objective as l_c + alpha * l_adv -
/// beta * l_bf. Throws TrainingError on a non-finite loss.
LossBreakdown main_step(TrainState& state, const BatchSet& batches, const TrainConfig& cfg);

/// One descent step for the discriminator on its domain-classification NLL,
/// pooled over every row of every batch; all other parameters unchanged
/// (bitwise-asserted). Returns the pooled NLL, which sits near log M when
/// the shared features carry no domain information. Throws TrainingError on
/// a non-finite loss.
double discriminator_step(TrainState& state, const BatchSet& batches, const TrainConfig& cfg);

/// Training and validation data for one domain.
struct DomainSplits {
  DomainDataset train;
  DomainDataset validation;
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double l_c = 0.0;       // means over the epoch's iterations
  double l_adv = 0.0;
  double l_bf = 0.0;
  double combined = 0.0;
  std::vector<double> val_accuracy;  // per domain, from the latest validation pass
  double val_accuracy_mean = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  MdtcModel model;  // parameters of the best validation checkpoint
  std::vector<EpochReport> reports;
};

struct EvalResult {
  std::vector<double> per_domain;
  double mean = 0.0;
};

/// Argmax accuracy of the classifier on each domain's labeled samples
/// (evaluation mode, ties to the lowest class index). Throws DataError,
/// naming the domain, if a split is empty; ConfigError if the list length
/// does not match the model's domain count.
EvalResult evaluate(const MdtcModel& model, const std::vector<DomainDataset>& datasets);

/// Runs cfg.epochs epochs of alternating main/discriminator steps. An epoch
/// makes ceil(max labeled pool / batch_size) iterations. Validation runs
/// every cfg.eval_every epochs and on the last epoch; earlier epochs repeat
/// the latest accuracies in their reports. The returned model carries the
/// parameters of the epoch with the best mean validation accuracy. When
/// `log` is given, each epoch writes one tab-separated line:
/// epoch  l_c  l_adv  l_bf  combined  acc_d1..acc_dM  acc_mean
/// If a step aborts with TrainingError and `divergence_snapshot` is
/// non-empty, the current (pre-step) parameters are checkpointed there
/// before the error propagates.
TrainResult train(const MdtcArch& arch, std::size_t classes,
                  const std::vector<DomainSplits>& domains, const TrainConfig& cfg,
                  std::ostream* log = nullptr, const std::string& divergence_snapshot = "");

}  // namespace mbf
