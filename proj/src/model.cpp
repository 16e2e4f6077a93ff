#include "mbf/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint io writes native doubles and documents them as little-endian");

namespace mbf {

Tensor mlp_forward(Tape& tape, const Mlp& mlp, const Tensor& x) {
  if (x.cols() != mlp.spec.input_dim) {
    throw ShapeError("mlp_forward: input has " + std::to_string(x.cols()) +
                     " features, expected " + std::to_string(mlp.spec.input_dim));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    h = add_row(tape, matmul(tape, h, mlp.weights[l]), mlp.biases[l]);
    if (l + 1 < mlp.weights.size()) h = relu(tape, h);
  }
  return h;
}

namespace {

Mlp init_mlp(const MlpSpec& spec, RngStream& rng) {
  if (spec.input_dim == 0 || spec.output_dim == 0) {
    throw ConfigError("init_model: zero layer dimension");
  }
  for (std::size_t d : spec.hidden_dims) {
    if (d == 0) throw ConfigError("init_model: zero hidden dimension");
  }
  std::vector<std::size_t> dims;
  dims.push_back(spec.input_dim);
  dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  dims.push_back(spec.output_dim);

  Mlp mlp;
  mlp.spec = spec;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
    Tensor w = Tensor::zeros(fan_in, fan_out, true);
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.data()) v = rng.uniform(-s, s);
    mlp.weights.push_back(w);
    mlp.biases.push_back(Tensor::zeros(1, fan_out, true));
  }
  return mlp;
}

void collect(const Mlp& mlp, const std::string& prefix,
             std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    out.emplace_back(prefix + ".w" + std::to_string(l), mlp.weights[l]);
    out.emplace_back(prefix + ".b" + std::to_string(l), mlp.biases[l]);
  }
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> MdtcModel::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out = main_parameters();
  collect(discriminator, "discriminator", out);
  return out;
}

std::vector<std::pair<std::string, Tensor>> MdtcModel::main_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  collect(shared, "shared", out);
  for (std::size_t d = 0; d < domain_specific.size(); ++d) {
    collect(domain_specific[d], "private" + std::to_string(d + 1), out);
  }
  collect(classifier, "classifier", out);
  return out;
}

std::vector<std::pair<std::string, Tensor>> MdtcModel::discriminator_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  collect(discriminator, "discriminator", out);
  return out;
}

MdtcModel init_model(const MdtcArch& arch, std::size_t m, std::size_t k,
                     std::uint64_t rng_seed) {
  if (m < 2) throw ConfigError("init_model: need at least 2 domains, got " + std::to_string(m));
  if (k < 2) throw ConfigError("init_model: need at least 2 classes, got " + std::to_string(k));
  if (arch.input_dim == 0 || arch.shared_out == 0 || arch.private_out == 0) {
    throw ConfigError("init_model: zero dimension in architecture");
  }
  if (arch.dropout_rate < 0.0 || arch.dropout_rate >= 1.0) {
    throw ConfigError("init_model: dropout rate must be in [0, 1)");
  }

  RngStream rng(rng_seed);
  MdtcModel model;
  model.arch = arch;
  model.m = m;
  model.k = k;

  MlpSpec shared_spec{arch.input_dim, arch.hidden_dims, arch.shared_out,
                      arch.dropout_rate};
  MlpSpec private_spec{arch.input_dim, arch.hidden_dims, arch.private_out,
                       arch.dropout_rate};
  const std::size_t cls_in = arch.shared_out + arch.private_out;
  MlpSpec classifier_spec{cls_in, {cls_in}, k, 0.0};
  MlpSpec discriminator_spec{arch.shared_out, {arch.shared_out}, m, 0.0};

  model.shared = init_mlp(shared_spec, rng);
  model.domain_specific.reserve(m);
  for (std::size_t d = 0; d < m; ++d) {
    model.domain_specific.push_back(init_mlp(private_spec, rng));
  }
  model.classifier = init_mlp(classifier_spec, rng);
  model.discriminator = init_mlp(discriminator_spec, rng);
  return model;
}

Tensor apply_dropout(Tape& tape, const Tensor& features, double rate, RngStream& rng,
                     bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("apply_dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return features;
  const double keep = 1.0 - rate;
  std::vector<double> mask(features.size());
  for (double& v : mask) v = rng.uniform01() < rate ? 0.0 : 1.0 / keep;
  return elemwise_mul_const(tape, features, std::move(mask));
}

ForwardOutputs forward_all(Tape& tape, const MdtcModel& model, const Tensor& x,
                           std::size_t domain, bool training, RngStream* rng) {
  if (domain < 1 || domain > model.m) {
    throw IndexError("forward_all: domain " + std::to_string(domain) + " outside [1, " +
                     std::to_string(model.m) + "]");
  }
  if (training && rng == nullptr) {
    throw ConfigError("forward_all: training mode needs an rng for dropout");
  }
  Tensor fs = mlp_forward(tape, model.shared, x);
  Tensor fd = mlp_forward(tape, model.domain_specific[domain - 1], x);
  if (training) {
    fs = apply_dropout(tape, fs, model.shared.spec.dropout_rate, *rng, true);
    fd = apply_dropout(tape, fd, model.domain_specific[domain - 1].spec.dropout_rate,
                       *rng, true);
  }
  ForwardOutputs out;
  out.shared_features = fs;
  out.private_features = fd;
  out.class_log_probs =
      log_softmax(tape, mlp_forward(tape, model.classifier, concat_cols(tape, fs, fd)));
  out.domain_log_probs = log_softmax(tape, mlp_forward(tape, model.discriminator, fs));
  return out;
}

Tensor forward_classify(Tape& tape, const MdtcModel& model, const Tensor& x,
                        std::size_t domain) {
  return forward_all(tape, model, x, domain, false, nullptr).class_log_probs;
}

Tensor forward_discriminate(Tape& tape, const MdtcModel& model, const Tensor& x) {
  Tensor fs = mlp_forward(tape, model.shared, x);
  return log_softmax(tape, mlp_forward(tape, model.discriminator, fs));
}

void save_checkpoint(const MdtcModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path + " for writing");
  out << "mbf-checkpoint 1\n";
  out << "m " << model.m << " k " << model.k << "\n";
  const auto params = model.parameters();
  for (const auto& [name, t] : params) {
    out << "param " << name << " " << t.rows() << " " << t.cols() << "\n";
  }
  out << "end\n";
  for (const auto& [name, t] : params) {
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw DataError("save_checkpoint: write to " + path + " failed");
}

void load_checkpoint(MdtcModel& model, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("load_checkpoint: cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || line != "mbf-checkpoint 1") {
    throw CheckpointError(path + ": not a checkpoint file (bad format line)");
  }
  if (!std::getline(in, line)) throw CheckpointError(path + ": truncated header");
  {
    std::istringstream ss(line);
    std::string mtag, ktag;
    std::size_t m = 0, k = 0;
    if (!(ss >> mtag >> m >> ktag >> k) || mtag != "m" || ktag != "k") {
      throw CheckpointError(path + ": malformed m/k line '" + line + "'");
    }
    if (m != model.m || k != model.k) {
      throw CheckpointError(path + ": checkpoint is for m=" + std::to_string(m) +
                            " k=" + std::to_string(k) + ", model has m=" +
                            std::to_string(model.m) + " k=" + std::to_string(model.k));
    }
  }

  auto params = model.parameters();
  std::size_t next = 0;
  while (std::getline(in, line)) {
    if (line == "end") break;
    std::istringstream ss(line);
    std::string tag, name;
    std::size_t rows = 0, cols = 0;
    if (!(ss >> tag >> name >> rows >> cols) || tag != "param") {
      throw CheckpointError(path + ": malformed header line '" + line + "'");
    }
    if (next >= params.size()) {
      throw CheckpointError(path + ": extra parameter " + name);
    }
    const auto& [expect_name, t] = params[next];
    if (name != expect_name) {
      throw CheckpointError(path + ": parameter " + std::to_string(next) + " is " + name +
                            ", model expects " + expect_name);
    }
    if (rows != t.rows() || cols != t.cols()) {
      throw CheckpointError(path + ": " + name + " is " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", model expects " +
                            std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    }
    ++next;
  }
  if (line != "end") throw CheckpointError(path + ": truncated header (no end line)");
  if (next != params.size()) {
    throw CheckpointError(path + ": missing parameter " + params[next].first);
  }

  for (auto& [name, t] : params) {
    in.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != t.size() * sizeof(double)) {
      throw CheckpointError(path + ": truncated values at " + name);
    }
  }
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0) {
    throw CheckpointError(path + ": trailing bytes after the last parameter");
  }
}

}  // namespace mbf
