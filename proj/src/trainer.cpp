#include "mbf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ostream>

namespace mbf {

void validate(const TrainConfig& cfg) {
  if (cfg.alpha < 0.0 || cfg.beta < 0.0) {
    throw ConfigError("train config: alpha and beta must be >= 0");
  }
  if (cfg.batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) {
    throw ConfigError("train config: learning_rate must be > 0");
  }
  if (cfg.eval_every < 1) throw ConfigError("train config: eval_every must be >= 1");
}

ShuffledCycle::ShuffledCycle(std::size_t n) : order_(n) {
  for (std::size_t i = 0; i < n; ++i) order_[i] = i;
}

std::size_t ShuffledCycle::next(RngStream& rng) {
  if (order_.empty()) throw DataError("ShuffledCycle: empty pool");
  if (pos_ == 0) rng.shuffle(order_);  // fresh pass: reshuffle
  const std::size_t v = order_[pos_++];
  if (pos_ == order_.size()) pos_ = 0;
  return v;
}

SamplerState make_sampler_state(const std::vector<DomainDataset>& datasets) {
  SamplerState s;
  for (const DomainDataset& ds : datasets) {
    if (ds.labeled.empty()) {
      throw DataError("domain '" + ds.name + "' has no labeled samples");
    }
    if (ds.unlabeled.empty()) {
      throw DataError("domain '" + ds.name + "' has no unlabeled samples");
    }
    s.labeled.emplace_back(ds.labeled.size());
    s.unlabeled.emplace_back(ds.unlabeled.size());
  }
  return s;
}

namespace {

Tensor densify_rows(const std::vector<const SparseVec*>& rows, std::size_t dim) {
  Tensor x = Tensor::zeros(rows.size(), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::vector<double> dense = densify(*rows[r], dim);
    for (std::size_t c = 0; c < dim; ++c) x.at(r, c) = dense[c];
  }
  return x;
}

}  // namespace

BatchSet sample_batches(const std::vector<DomainDataset>& datasets, std::size_t batch_size,
                        SamplerState& cursors, RngStream& rng) {
  if (batch_size < 1) throw ConfigError("sample_batches: batch_size must be >= 1");
  if (cursors.labeled.size() != datasets.size() ||
      cursors.unlabeled.size() != datasets.size()) {
    throw ConfigError("sample_batches: cursors were built for a different dataset list");
  }
  BatchSet out;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const DomainDataset& ds = datasets[d];
    if (ds.labeled.empty() || ds.unlabeled.empty()) {
      throw DataError("domain '" + ds.name + "' has an empty pool");
    }
    Batch lb;
    std::vector<const SparseVec*> rows;
    rows.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const LabeledSample& s = ds.labeled[cursors.labeled[d].next(rng)];
      rows.push_back(&s.x);
      lb.labels.push_back(s.label);
    }
    lb.x = densify_rows(rows, ds.feature_dim);
    out.labeled.push_back(std::move(lb));

    Batch ub;
    rows.clear();
    for (std::size_t i = 0; i < batch_size; ++i) {
      rows.push_back(&ds.unlabeled[cursors.unlabeled[d].next(rng)]);
    }
    ub.x = densify_rows(rows, ds.feature_dim);
    out.unlabeled.push_back(std::move(ub));
  }
  return out;
}

void Optimizer::step(std::vector<std::pair<std::string, Tensor>> params) {
  if (m1.size() != params.size()) {
    m1.assign(params.size(), {});
    m2.assign(params.size(), {});
  }
  ++steps;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].second;
    const std::span<const double> g = t.grad();
    const std::span<double> x = t.data();
    switch (kind) {
      case OptimizerKind::plain_sgd: {
        for (std::size_t e = 0; e < x.size(); ++e) x[e] -= learning_rate * g[e];
        break;
      }
      case OptimizerKind::momentum: {
        if (m1[i].size() != x.size()) m1[i].assign(x.size(), 0.0);
        for (std::size_t e = 0; e < x.size(); ++e) {
          m1[i][e] = 0.9 * m1[i][e] + g[e];
          x[e] -= learning_rate * m1[i][e];
        }
        break;
      }
      case OptimizerKind::adaptive_moment: {
        if (m1[i].size() != x.size()) {
          m1[i].assign(x.size(), 0.0);
          m2[i].assign(x.size(), 0.0);
        }
        const double c1 = 1.0 - std::pow(0.9, static_cast<double>(steps));
        const double c2 = 1.0 - std::pow(0.999, static_cast<double>(steps));
        for (std::size_t e = 0; e < x.size(); ++e) {
          m1[i][e] = 0.9 * m1[i][e] + 0.1 * g[e];
          m2[i][e] = 0.999 * m2[i][e] + 0.001 * g[e] * g[e];
          x[e] -= learning_rate * (m1[i][e] / c1) / (std::sqrt(m2[i][e] / c2) + 1e-8);
        }
        break;
      }
    }
  }
}

TrainState make_train_state(const MdtcArch& arch, std::size_t classes,
                            const std::vector<DomainDataset>& train_sets,
                            const TrainConfig& cfg) {
  validate(cfg);
  if (train_sets.empty()) throw ConfigError("make_train_state: no domains");
  TrainState state;
  state.model = init_model(arch, train_sets.size(), classes, cfg.rng_seed);
  state.main_opt = Optimizer{cfg.optimizer, cfg.learning_rate};
  state.disc_opt = Optimizer{cfg.optimizer, cfg.learning_rate};
  state.cursors = make_sampler_state(train_sets);
  state.rng = RngStream(cfg.rng_seed);
  return state;
}

namespace {

std::vector<std::vector<double>> snapshot(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) {
    out.emplace_back(t.data().begin(), t.data().end());
  }
  return out;
}

void assert_unchanged(const std::vector<std::pair<std::string, Tensor>>& params,
                      const std::vector<std::vector<double>>& before, const char* step) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::span<const double> now = params[i].second.data();
    // bitwise identity: a parameter that already held nan must not register
    // as modified, so value comparison (nan != nan) is the wrong test
    if (std::memcmp(now.data(), before[i].data(), now.size() * sizeof(double)) != 0) {
      throw TrainingError(std::string(step) + " modified " + params[i].first +
                          ", which belongs to the other update partition");
    }
  }
}

void zero_all(const MdtcModel& model) {
  for (const auto& [name, t] : model.parameters()) t.zero_grad();
}

Tensor accumulate(Tape& tape, Tensor acc, const Tensor& term) {
  return acc.defined() ? add(tape, acc, term) : term;
}

void check_shapes(const TrainState& state, const BatchSet& batches) {
  const std::size_t m = state.model.m;
  if (batches.labeled.size() != m || batches.unlabeled.size() != m) {
    throw ShapeError("batch set covers " + std::to_string(batches.labeled.size()) +
                     " domains, model has " + std::to_string(m));
  }
}

}  // namespace

LossBreakdown main_step(TrainState& state, const BatchSet& batches, const TrainConfig& cfg) {
  check_shapes(state, batches);
  MdtcModel& model = state.model;
  std::vector<std::vector<double>> disc_before;
  if (cfg.assert_update_partition) disc_before = snapshot(model.discriminator_parameters());

  zero_all(model);
  Tape tape;
  Tensor l_c, l_adv, l_bf;
  for (std::size_t d = 0; d < model.m; ++d) {
    const Batch& lb = batches.labeled[d];
    const Batch& ub = batches.unlabeled[d];
    ForwardOutputs lo = forward_all(tape, model, lb.x, d + 1, true, &state.rng);
    ForwardOutputs uo = forward_all(tape, model, ub.x, d + 1, true, &state.rng);

    l_c = accumulate(tape, l_c, classification_loss(tape, lo.class_log_probs, lb.labels));

    const std::vector<int> ldom(lb.x.rows(), static_cast<int>(d + 1));
    const std::vector<int> udom(ub.x.rows(), static_cast<int>(d + 1));
    Tensor adv = scale(tape,
                       add(tape, adversarial_loss(tape, lo.domain_log_probs, ldom),
                           adversarial_loss(tape, uo.domain_log_probs, udom)),
                       0.5);
    l_adv = accumulate(tape, l_adv, adv);
    l_bf = accumulate(tape, l_bf, batch_frobenius_loss(tape, uo.class_log_probs));
  }

  LossBreakdown report =
      combined_objective(l_c.value(), l_adv.value(), l_bf.value(), cfg.alpha, cfg.beta);
  if (!std::isfinite(report.l_c) || !std::isfinite(report.l_adv) ||
      !std::isfinite(report.l_bf)) {
    char msg[160];
    std::snprintf(msg, sizeof(msg),
                  "main step hit a non-finite loss at iteration %zu: l_c=%.6g l_adv=%.6g "
                  "l_bf=%.6g",
                  state.iteration, report.l_c, report.l_adv, report.l_bf);
    throw TrainingError(msg);
  }

  // The extractors maximize the adversarial NLL and the batch norm, so both
  // enter the descent objective with a minus sign.
  Tensor objective = l_c;
  if (cfg.alpha > 0.0) objective = add(tape, objective, scale(tape, l_adv, -cfg.alpha));
  if (cfg.beta > 0.0) objective = add(tape, objective, scale(tape, l_bf, -cfg.beta));
  tape.backward(objective);
  state.main_opt.step(model.main_parameters());

  if (cfg.assert_update_partition) {
    assert_unchanged(model.discriminator_parameters(), disc_before, "main step");
  }
  return report;
}

double discriminator_step(TrainState& state, const BatchSet& batches,
                          const TrainConfig& cfg) {
  check_shapes(state, batches);
  MdtcModel& model = state.model;
  std::vector<std::vector<double>> main_before;
  if (cfg.assert_update_partition) main_before = snapshot(model.main_parameters());

  zero_all(model);
  Tape tape;
  Tensor total;
  for (std::size_t d = 0; d < model.m; ++d) {
    for (const Batch* b : {&batches.labeled[d], &batches.unlabeled[d]}) {
      Tensor fs = mlp_forward(tape, model.shared, b->x);
      fs = apply_dropout(tape, fs, model.shared.spec.dropout_rate, state.rng, true);
      Tensor dp = log_softmax(tape, mlp_forward(tape, model.discriminator, fs));
      const std::vector<int> dom(b->x.rows(), static_cast<int>(d + 1));
      total = accumulate(tape, total, adversarial_loss(tape, dp, dom));
    }
  }
  Tensor pooled = scale(tape, total, 1.0 / static_cast<double>(2 * model.m));
  const double nll = pooled.value();
  if (!std::isfinite(nll)) {
    throw TrainingError("discriminator step hit a non-finite loss at iteration " +
                        std::to_string(state.iteration));
  }
  tape.backward(pooled);
  state.disc_opt.step(model.discriminator_parameters());

  if (cfg.assert_update_partition) {
    assert_unchanged(model.main_parameters(), main_before, "discriminator step");
  }
  return nll;
}

EvalResult evaluate(const MdtcModel& model, const std::vector<DomainDataset>& datasets) {
  if (datasets.size() != model.m) {
    throw ConfigError("evaluate: " + std::to_string(datasets.size()) +
                      " datasets for a model with " + std::to_string(model.m) + " domains");
  }
  EvalResult out;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const DomainDataset& ds = datasets[d];
    if (ds.labeled.empty()) {
      throw DataError("evaluate: domain '" + ds.name + "' has no labeled samples");
    }
    std::size_t correct = 0;
    const std::size_t chunk = 128;
    for (std::size_t start = 0; start < ds.labeled.size(); start += chunk) {
      const std::size_t stop = std::min(start + chunk, ds.labeled.size());
      std::vector<const SparseVec*> rows;
      for (std::size_t i = start; i < stop; ++i) rows.push_back(&ds.labeled[i].x);
      Tape tape;
      Tensor lp = forward_classify(tape, model, densify_rows(rows, ds.feature_dim), d + 1);
      for (std::size_t r = 0; r < lp.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < lp.cols(); ++j) {
          if (lp.at(r, j) > lp.at(r, best)) best = j;  // ties keep the lowest class
        }
        if (static_cast<int>(best) + 1 == ds.labeled[start + r].label) ++correct;
      }
    }
    out.per_domain.push_back(static_cast<double>(correct) /
                             static_cast<double>(ds.labeled.size()));
  }
  double sum = 0.0;
  for (double a : out.per_domain) sum += a;
  out.mean = sum / static_cast<double>(out.per_domain.size());
  return out;
}

namespace {

void write_log_line(std::ostream& log, const EpochReport& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%.6f", r.epoch, r.l_c, r.l_adv,
                r.l_bf, r.combined);
  log << buf;
  for (double a : r.val_accuracy) {
    std::snprintf(buf, sizeof buf, "\t%.4f", a);
    log << buf;
  }
  std::snprintf(buf, sizeof buf, "\t%.4f\n", r.val_accuracy_mean);
  log << buf;
}

}  // namespace

TrainResult train(const MdtcArch& arch, std::size_t classes,
                  const std::vector<DomainSplits>& domains, const TrainConfig& cfg,
                  std::ostream* log, const std::string& divergence_snapshot) {
  validate(cfg);
  if (domains.empty()) throw ConfigError("train: no domains");

  std::vector<DomainDataset> train_sets, val_sets;
  for (const DomainSplits& s : domains) {
    train_sets.push_back(s.train);
    val_sets.push_back(s.validation);
  }

  TrainState state = make_train_state(arch, classes, train_sets, cfg);
  TrainResult result;
  if (cfg.epochs == 0) {
    result.model = std::move(state.model);
    return result;
  }

  std::size_t max_labeled = 0;
  for (const DomainDataset& ds : train_sets) {
    max_labeled = std::max(max_labeled, ds.labeled.size());
  }
  const std::size_t iters_per_epoch = (max_labeled + cfg.batch_size - 1) / cfg.batch_size;

  std::vector<double> last_acc(domains.size(), 0.0);
  double last_acc_mean = 0.0;
  double best_acc = -1.0;
  std::vector<std::vector<double>> best_params;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double sum_c = 0.0, sum_adv = 0.0, sum_bf = 0.0, sum_combined = 0.0;
    for (std::size_t it = 0; it < iters_per_epoch; ++it) {
      BatchSet batches = sample_batches(train_sets, cfg.batch_size, state.cursors, state.rng);
      LossBreakdown b;
      try {
        b = main_step(state, batches, cfg);
        discriminator_step(state, batches, cfg);
      } catch (const TrainingError&) {
        if (!divergence_snapshot.empty()) save_checkpoint(state.model, divergence_snapshot);
        throw;
      }
      ++state.iteration;
      sum_c += b.l_c;
      sum_adv += b.l_adv;
      sum_bf += b.l_bf;
      sum_combined += b.combined;
    }

    EpochReport report;
    report.epoch = epoch;
    const double n = static_cast<double>(iters_per_epoch);
    report.l_c = sum_c / n;
    report.l_adv = sum_adv / n;
    report.l_bf = sum_bf / n;
    report.combined = sum_combined / n;

    const bool eval_now = (epoch % cfg.eval_every == 0) || epoch == cfg.epochs;
    if (eval_now) {
      EvalResult ev = evaluate(state.model, val_sets);
      last_acc = ev.per_domain;
      last_acc_mean = ev.mean;
      if (ev.mean > best_acc) {
        best_acc = ev.mean;
        best_params = snapshot(state.model.parameters());
      }
    }
    report.val_accuracy = last_acc;
    report.val_accuracy_mean = last_acc_mean;
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log) write_log_line(*log, report);
    result.reports.push_back(std::move(report));
  }

  if (!best_params.empty()) {
    auto params = state.model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::copy(best_params[i].begin(), best_params[i].end(), params[i].second.data().begin());
    }
  }
  result.model = std::move(state.model);
  return result;
}

}  // namespace mbf
