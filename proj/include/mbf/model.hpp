#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mbf/rng.hpp"
#include "mbf/tensor.hpp"

namespace mbf {

/// Fully connected rectifier network: relu after every hidden layer, linear
/// output layer. dropout_rate applies to this network's OUTPUT (extractors
/// only; heads keep 0).
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;
  double dropout_rate = 0.0;
};

struct Mlp {
  MlpSpec spec;
  std::vector<Tensor> weights;  // layer i: [dims[i] x dims[i+1]]
  std::vector<Tensor> biases;   // layer i: [1 x dims[i+1]]
};

/// x[B x input] -> y[B x output]; relu between layers, last layer linear.
Tensor mlp_forward(Tape& tape, const Mlp& mlp, const Tensor& x);

/// Shape of the whole feature-learning stack. The classifier and
/// discriminator heads each get one hidden layer as wide as their input,
/// then a linear projection to the class / domain logits.
struct MdtcArch {
  std::size_t input_dim = 5000;
  std::vector<std::size_t> hidden_dims = {1000, 500};
  std::size_t shared_out = 128;   // width of the shared extractor output
  std::size_t private_out = 64;   // width of each per-domain extractor output
  double dropout_rate = 0.4;      // on extractor outputs, training mode only
};

/// Shared extractor + M architecturally identical (independently
/// parameterized) per-domain extractors + classifier head over the
/// concatenated features + domain discriminator head over the shared
/// features alone.
struct MdtcModel {
  MdtcArch arch;
  std::size_t m = 0;  // domains
  std::size_t k = 0;  // classes
  Mlp shared;
  std::vector<Mlp> domain_specific;
  Mlp classifier;     // input: shared_out + private_out, logits: k
  Mlp discriminator;  // input: shared_out, logits: m

  /// All parameters as (name, tensor), declaration order: shared, each
  /// domain extractor, classifier, discriminator. Names look like
  /// "shared.w0", "private2.b1", "classifier.w0", "discriminator.b1".
  std::vector<std::pair<std::string, Tensor>> parameters() const;
  /// The subset updated by the main step: shared, domain extractors,
  /// classifier — everything except the discriminator.
  std::vector<std::pair<std::string, Tensor>> main_parameters() const;
  std::vector<std::pair<std::string, Tensor>> discriminator_parameters() const;
};

/// Weights uniform on (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero,
/// drawn in declaration order so a seed pins every parameter.
/// Throws ConfigError on any zero dimension or m < 2 or k < 2.
MdtcModel init_model(const MdtcArch& arch, std::size_t m, std::size_t k,
                     std::uint64_t rng_seed);

struct ForwardOutputs {
  Tensor class_log_probs;   // B x K
  Tensor domain_log_probs;  // B x M
  Tensor shared_features;   // B x shared_out, as consumed by the heads
  Tensor private_features;  // B x private_out
};

/// In training mode zeroes each entry independently with probability rate
/// and scales survivors by 1/(1-rate); identity in evaluation mode or at
/// rate 0. Throws ConfigError unless 0 <= rate < 1.
Tensor apply_dropout(Tape& tape, const Tensor& features, double rate, RngStream& rng,
                     bool training);

/// Full forward pass for one domain's batch: extract shared and private
/// features, apply dropout to both (training mode), classify the
/// concatenation, discriminate on the shared features. `domain` is the
/// 1-based extractor index i in [1, M].
ForwardOutputs forward_all(Tape& tape, const MdtcModel& model, const Tensor& x,
                           std::size_t domain, bool training, RngStream* rng);

/// log P(y | x, domain i): log-softmax over the classifier head, B x K.
/// Evaluation mode (no dropout). Throws IndexError unless 1 <= domain <= M.
Tensor forward_classify(Tape& tape, const MdtcModel& model, const Tensor& x,
                        std::size_t domain);

/// log P(domain | x) from the shared features alone, B x M. Evaluation mode.
Tensor forward_discriminate(Tape& tape, const MdtcModel& model, const Tensor& x);

/// Checkpoint container: text header (format line, m/k line, one
/// `param <name> <rows> <cols>` line per parameter in declaration order,
/// `end`), then the raw little-endian float64 values in the same order.
void save_checkpoint(const MdtcModel& model, const std::string& path);

/// Loads values into an already-constructed model of the same layout.
/// Throws CheckpointError naming the first parameter whose name or shape
/// disagrees, or on a malformed/truncated file.
void load_checkpoint(MdtcModel& model, const std::string& path);

}  // namespace mbf
