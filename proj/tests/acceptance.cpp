// Acceptance gate: end-to-end property checks on the built library, one
// summary line per check. Exits nonzero when a required check fails; the
// benchmark check is optional and reports SKIP when its dataset is absent.
//
// Tolerances and runtime limits are pinned here on purpose — when a check
// fails, fix the library or the task setup, not the numbers.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mbf/analytics.hpp"
#include "mbf/cli.hpp"
#include "mbf/data.hpp"
#include "mbf/losses.hpp"
#include "mbf/model.hpp"
#include "mbf/rng.hpp"
#include "mbf/tensor.hpp"
#include "mbf/trainer.hpp"

namespace {

struct check_skipped : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& detail) {
  if (!ok) throw std::runtime_error(detail);
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------- helpers

mbf::Tensor pack_rows(const std::vector<const mbf::SparseVec*>& rows,
                      std::size_t feature_dim) {
  std::vector<double> flat;
  flat.reserve(rows.size() * feature_dim);
  for (const mbf::SparseVec* r : rows) {
    const std::vector<double> dense = mbf::densify(*r, feature_dim);
    flat.insert(flat.end(), dense.begin(), dense.end());
  }
  return mbf::Tensor::from(rows.size(), feature_dim, flat, false);
}

std::vector<std::vector<double>> snapshot(
    const std::vector<std::pair<std::string, mbf::Tensor>>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params)
    out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

// Bitwise comparison: nan-valued entries still count as unchanged.
std::string first_changed(
    const std::vector<std::pair<std::string, mbf::Tensor>>& params,
    const std::vector<std::vector<double>>& before) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto now = params[i].second.data();
    if (std::memcmp(now.data(), before[i].data(),
                    now.size() * sizeof(double)) != 0)
      return params[i].first;
  }
  return "";
}

// Mean over all unlabeled rows of the highest class probability the
// classifier assigns, averaged across domains.
double mean_max_prob(const mbf::MdtcModel& model,
                     const std::vector<mbf::DomainDataset>& sets) {
  double total = 0.0;
  std::size_t rows = 0;
  for (std::size_t d = 0; d < sets.size(); ++d) {
    const auto& pool = sets[d].unlabeled;
    for (std::size_t from = 0; from < pool.size(); from += 256) {
      const std::size_t count = std::min<std::size_t>(256, pool.size() - from);
      std::vector<const mbf::SparseVec*> chunk(count);
      for (std::size_t i = 0; i < count; ++i) chunk[i] = &pool[from + i];
      mbf::Tape tape;
      const mbf::Tensor lp = mbf::forward_classify(
          tape, model, pack_rows(chunk, sets[d].feature_dim), d + 1);
      const auto v = lp.data();
      const std::size_t k = lp.cols();
      for (std::size_t i = 0; i < count; ++i) {
        double best = v[i * k];
        for (std::size_t j = 1; j < k; ++j) best = std::max(best, v[i * k + j]);
        total += std::exp(best);
      }
      rows += count;
    }
  }
  return total / static_cast<double>(rows);
}

// Discriminator NLL pooled over every row (labeled and unlabeled) of every
// domain, evaluation-mode forward.
double discriminator_nll(const mbf::MdtcModel& model,
                         const std::vector<mbf::DomainDataset>& sets) {
  double total = 0.0;
  std::size_t rows = 0;
  for (std::size_t d = 0; d < sets.size(); ++d) {
    std::vector<const mbf::SparseVec*> all;
    for (const auto& s : sets[d].labeled) all.push_back(&s.x);
    for (const auto& u : sets[d].unlabeled) all.push_back(&u);
    for (std::size_t from = 0; from < all.size(); from += 256) {
      const std::size_t count = std::min<std::size_t>(256, all.size() - from);
      std::vector<const mbf::SparseVec*> chunk(all.begin() + from,
                                               all.begin() + from + count);
      mbf::Tape tape;
      const mbf::Tensor lp = mbf::forward_discriminate(
          tape, model, pack_rows(chunk, sets[d].feature_dim));
      const auto v = lp.data();
      for (std::size_t i = 0; i < count; ++i) total -= v[i * lp.cols() + d];
      rows += count;
    }
  }
  return total / static_cast<double>(rows);
}

// ----------------------------------------------------------------- checks

// verify-theory at scale: four class counts, 10000 sampled paths each,
// no sign or finite-difference failures allowed.
std::string check_theory() {
  std::ostringstream out, err;
  const int rc = mbf::run_cli(
      {"verify-theory", "--trials", "10000", "--k", "2,3,5,10", "--seed", "2024"},
      out, err);
  require(rc == 0, fmt("exit code %d: %s", rc, err.str().c_str()));
  std::istringstream lines(out.str());
  std::string line;
  std::size_t seen = 0;
  while (std::getline(lines, line)) {
    require(line == "checked=10000 sign_failures=0 fd_failures=0",
            "unexpected report line: " + line);
    ++seen;
  }
  require(seen == 4, fmt("expected 4 report lines, saw %zu", seen));
  return "4 class counts x 10000 paths, zero failures";
}

// Entropy and Frobenius norm stay inside their closed-form bounds on random
// row-stochastic matrices and attain them at the one-hot / uniform extremes.
std::string check_bounds() {
  mbf::RngStream rng(404);
  const double tol = 1e-9;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t b = 1 + rng.index(16);
    const std::size_t k = 2 + rng.index(9);
    std::vector<double> vals(b * k);
    for (std::size_t i = 0; i < b; ++i) {
      double row_sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        vals[i * k + j] = -std::log(1.0 - rng.uniform01());
        row_sum += vals[i * k + j];
      }
      for (std::size_t j = 0; j < k; ++j) vals[i * k + j] /= row_sum;
    }
    const auto m = mbf::BatchOutputMatrix::from(b, k, vals);
    const double h = mbf::batch_entropy(m);
    const double f = mbf::batch_frobenius(m);
    const double bd = static_cast<double>(b);
    const double kd = static_cast<double>(k);
    require(h >= -tol && h <= std::log(kd) + tol,
            fmt("entropy %.12f outside [0, log %zu]", h, k));
    require(f >= std::sqrt(bd / kd) - tol && f <= std::sqrt(bd) + tol,
            fmt("frobenius %.12f outside [sqrt(%zu/%zu), sqrt(%zu)]", f, b, k, b));
  }
  std::size_t extremes = 0;
  for (const std::size_t k : {2, 3, 5, 10}) {
    for (const std::size_t b : {1, 4, 16}) {
      std::vector<double> hot(b * k, 0.0);
      for (std::size_t i = 0; i < b; ++i) hot[i * k + rng.index(k)] = 1.0;
      const auto mh = mbf::BatchOutputMatrix::from(b, k, hot);
      require(mbf::batch_entropy(mh) == 0.0, "one-hot entropy not exactly 0");
      require(mbf::batch_frobenius(mh) == std::sqrt(static_cast<double>(b)),
              "one-hot frobenius not exactly sqrt(B)");
      const auto mu = mbf::BatchOutputMatrix::from(
          b, k, std::vector<double>(b * k, 1.0 / static_cast<double>(k)));
      require(std::fabs(mbf::batch_entropy(mu) - std::log(static_cast<double>(k))) <=
                  1e-12,
              "uniform entropy not at log K");
      require(std::fabs(mbf::batch_frobenius(mu) -
                        std::sqrt(static_cast<double>(b) / static_cast<double>(k))) <=
                  1e-12,
              "uniform frobenius not at sqrt(B/K)");
      extremes += 2;
    }
  }
  return fmt("1000 random matrices in bounds, %zu extreme constructions attained",
             extremes);
}

// Finite differences against reverse mode on the full combined objective —
// classification + weighted adversarial − weighted confidence — through a
// small two-domain model, every parameter entry.
std::string check_gradients() {
  mbf::MdtcArch arch;
  arch.input_dim = 10;
  arch.hidden_dims = {8};
  arch.shared_out = 6;
  arch.private_out = 4;
  arch.dropout_rate = 0.0;
  const std::size_t domains = 2, classes = 2, batch = 4;
  mbf::MdtcModel model = mbf::init_model(arch, domains, classes, 77);

  mbf::RngStream rng(78);
  auto make_x = [&] {
    std::vector<double> vals(batch * arch.input_dim);
    for (double& v : vals) v = 3.0 * rng.uniform01();
    return mbf::Tensor::from(batch, arch.input_dim, vals, false);
  };
  std::vector<mbf::Tensor> xl, xu;
  std::vector<std::vector<int>> labels;
  for (std::size_t d = 0; d < domains; ++d) {
    xl.push_back(make_x());
    xu.push_back(make_x());
    std::vector<int> y(batch);
    for (std::size_t i = 0; i < batch; ++i)
      y[i] = 1 + static_cast<int>((i + d) % classes);
    labels.push_back(y);
  }

  const double alpha = 0.5, beta = 1.0;
  auto build = [&](mbf::Tape& tape) {
    mbf::Tensor l_c, l_adv, l_bf;
    auto acc = [&tape](mbf::Tensor& slot, const mbf::Tensor& term) {
      slot = slot.defined() ? mbf::add(tape, slot, term) : term;
    };
    for (std::size_t d = 0; d < domains; ++d) {
      const std::vector<int> dom(batch, static_cast<int>(d) + 1);
      const auto lab =
          mbf::forward_all(tape, model, xl[d], d + 1, false, nullptr);
      const auto unl =
          mbf::forward_all(tape, model, xu[d], d + 1, false, nullptr);
      acc(l_c, mbf::classification_loss(tape, lab.class_log_probs, labels[d]));
      acc(l_adv, mbf::adversarial_loss(tape, lab.domain_log_probs, dom));
      acc(l_adv, mbf::adversarial_loss(tape, unl.domain_log_probs, dom));
      acc(l_bf, mbf::batch_frobenius_loss(tape, unl.class_log_probs));
    }
    return mbf::add(tape, l_c,
                    mbf::add(tape, mbf::scale(tape, l_adv, alpha),
                             mbf::scale(tape, l_bf, -beta)));
  };

  const mbf::GradCheckReport rep =
      mbf::grad_check(build, model.parameters(), 1e-5, 1e-4);
  require(rep.passed, fmt("worst %s[%zu], rel err %.3e", rep.worst_param.c_str(),
                          rep.worst_index, rep.max_rel_error));
  return fmt("%zu entries within 1e-4 (worst rel err %.1e)", rep.entries_checked,
             rep.max_rel_error);
}

// 100 alternating steps; after every half-step the other side's parameters
// must be bitwise identical to their snapshot.
std::string check_partition() {
  mbf::MdtcArch arch;
  arch.input_dim = 40;
  arch.hidden_dims = {16};
  arch.shared_out = 8;
  arch.private_out = 4;
  arch.dropout_rate = 0.0;
  const auto sets = mbf::gen_synthetic(2, 2, 40, 32, 32, 2.0, 9);
  mbf::TrainConfig cfg;
  cfg.alpha = 0.5;
  cfg.beta = 1.0;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.rng_seed = 9;
  cfg.assert_update_partition = true;
  mbf::TrainState st = mbf::make_train_state(arch, 2, sets, cfg);

  std::size_t main_moves = 0, disc_moves = 0;
  for (int iter = 0; iter < 100; ++iter) {
    const auto batches =
        mbf::sample_batches(sets, cfg.batch_size, st.cursors, st.rng);

    auto disc_before = snapshot(st.model.discriminator_parameters());
    auto main_before = snapshot(st.model.main_parameters());
    mbf::main_step(st, batches, cfg);
    std::string touched =
        first_changed(st.model.discriminator_parameters(), disc_before);
    require(touched.empty(),
            fmt("main step touched %s at iteration %d", touched.c_str(), iter));
    if (!first_changed(st.model.main_parameters(), main_before).empty())
      ++main_moves;

    disc_before = snapshot(st.model.discriminator_parameters());
    main_before = snapshot(st.model.main_parameters());
    mbf::discriminator_step(st, batches, cfg);
    touched = first_changed(st.model.main_parameters(), main_before);
    require(touched.empty(), fmt("discriminator step touched %s at iteration %d",
                                 touched.c_str(), iter));
    if (!first_changed(st.model.discriminator_parameters(), disc_before).empty())
      ++disc_moves;
    ++st.iteration;
  }
  require(main_moves == 100 && disc_moves == 100,
          fmt("expected both sides to move every step, saw %zu/%zu", main_moves,
              disc_moves));
  return "100 alternating steps, cross-partition bytes identical";
}

// Low-label semi-supervised task: the confidence term must not cost test
// accuracy, and must raise the classifier's confidence on unlabeled data.
std::string check_mechanism() {
  mbf::MdtcArch arch;
  arch.input_dim = 60;
  arch.hidden_dims = {32};
  arch.shared_out = 16;
  arch.private_out = 8;
  arch.dropout_rate = 0.0;
  const std::size_t domains = 4, classes = 2;

  double acc_with = 0.0, acc_without = 0.0, conf_before = 0.0, conf_after = 0.0;
  const int seeds = 5;
  for (int seed = 1; seed <= seeds; ++seed) {
    const auto gen =
        mbf::gen_synthetic(domains, classes, arch.input_dim, 104, 2000, 1.0,
                           100 + static_cast<std::uint64_t>(seed));
    std::vector<mbf::DomainSplits> splits;
    std::vector<mbf::DomainDataset> tests, trains;
    for (const auto& ds : gen) {
      auto [rest, held] = mbf::split_holdout(ds, 40, 7);
      splits.push_back({rest, held});
      trains.push_back(std::move(rest));
      tests.push_back(std::move(held));
    }

    mbf::TrainConfig cfg;
    cfg.alpha = 0.5;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 30;
    cfg.eval_every = cfg.epochs;  // judge the final model, not a snapshot
    cfg.rng_seed = static_cast<std::uint64_t>(seed);

    cfg.beta = 1.0;
    conf_before += mean_max_prob(
        mbf::init_model(arch, domains, classes, cfg.rng_seed), trains);
    const auto with_term = mbf::train(arch, classes, splits, cfg);
    acc_with += mbf::evaluate(with_term.model, tests).mean;
    conf_after += mean_max_prob(with_term.model, trains);

    cfg.beta = 0.0;
    const auto without_term = mbf::train(arch, classes, splits, cfg);
    acc_without += mbf::evaluate(without_term.model, tests).mean;
  }
  acc_with /= seeds;
  acc_without /= seeds;
  conf_before /= seeds;
  conf_after /= seeds;

  require(acc_with >= acc_without,
          fmt("test accuracy %.4f with the confidence term vs %.4f without",
              acc_with, acc_without));
  require(conf_after > conf_before,
          fmt("mean max probability %.4f after training vs %.4f at init",
              conf_after, conf_before));
  return fmt("acc %.4f vs %.4f, confidence %.3f -> %.3f over %d seeds", acc_with,
             acc_without, conf_before, conf_after, seeds);
}

// Strong domain shift: after adversarial training the discriminator should
// be at chance on the shared features while the raw inputs stay trivially
// separable by a linear probe.
std::string check_confusion() {
  mbf::MdtcArch arch;
  arch.input_dim = 60;
  arch.hidden_dims = {32};
  arch.shared_out = 16;
  arch.private_out = 8;
  arch.dropout_rate = 0.0;
  const std::size_t domains = 4, classes = 2;
  const auto sets =
      mbf::gen_synthetic(domains, classes, arch.input_dim, 80, 200, 5.0, 31);

  mbf::TrainConfig cfg;
  cfg.alpha = 0.5;
  cfg.beta = 1.0;
  cfg.batch_size = 16;
  // Plain gradient steps keep the two-player game damped: near the
  // equilibrium the adversarial gradients shrink and so do the updates,
  // where the adaptive rule would rescale them and oscillate.
  cfg.optimizer = mbf::OptimizerKind::plain_sgd;
  cfg.learning_rate = 1e-2;
  cfg.rng_seed = 6;
  mbf::TrainState st = mbf::make_train_state(arch, classes, sets, cfg);
  const int steps = 2000;
  for (int iter = 0; iter < steps; ++iter) {
    const auto batches =
        mbf::sample_batches(sets, cfg.batch_size, st.cursors, st.rng);
    mbf::main_step(st, batches, cfg);
    mbf::discriminator_step(st, batches, cfg);
    ++st.iteration;
  }

  const double nll = discriminator_nll(st.model, sets);
  const double target = std::log(static_cast<double>(domains));
  require(std::fabs(nll - target) <= 0.1,
          fmt("discriminator NLL %.4f vs log M = %.4f", nll, target));

  // Linear softmax probe on the raw bag-of-words rows, trained and scored
  // in sample: domain identity must still be easy to read off the inputs.
  std::vector<const mbf::SparseVec*> rows;
  std::vector<int> dom_labels;
  for (std::size_t d = 0; d < domains; ++d) {
    for (const auto& s : sets[d].labeled) {
      rows.push_back(&s.x);
      dom_labels.push_back(static_cast<int>(d));
    }
    for (const auto& u : sets[d].unlabeled) {
      rows.push_back(&u);
      dom_labels.push_back(static_cast<int>(d));
    }
  }
  const mbf::Tensor x = pack_rows(rows, arch.input_dim);
  const std::vector<double> weights(rows.size(), 1.0 / rows.size());
  mbf::Tensor w = mbf::Tensor::zeros(arch.input_dim, domains, true);
  mbf::Tensor b = mbf::Tensor::zeros(1, domains, true);
  std::vector<std::pair<std::string, mbf::Tensor>> probe = {{"probe.w", w},
                                                            {"probe.b", b}};
  mbf::Optimizer opt;
  opt.learning_rate = 0.1;
  for (int step = 0; step < 300; ++step) {
    for (const auto& [name, t] : probe) t.zero_grad();
    mbf::Tape tape;
    const mbf::Tensor lp = mbf::log_softmax(
        tape, mbf::add_row(tape, mbf::matmul(tape, x, w), b));
    tape.backward(mbf::nll_weighted(tape, lp, dom_labels, weights));
    opt.step(probe);
  }
  mbf::Tape tape;
  const mbf::Tensor lp =
      mbf::log_softmax(tape, mbf::add_row(tape, mbf::matmul(tape, x, w), b));
  const auto v = lp.data();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < domains; ++j)
      if (v[i * domains + j] > v[i * domains + best]) best = j;
    if (static_cast<int>(best) == dom_labels[i]) ++hits;
  }
  const double probe_acc = static_cast<double>(hits) / rows.size();
  require(probe_acc > 0.9, fmt("raw-feature probe accuracy %.4f", probe_acc));
  return fmt("discriminator NLL %.3f (log M = %.3f), raw probe %.3f", nll,
             target, probe_acc);
}

// Optional benchmark on the four-domain review dataset in sparse format.
// Point MBF_AMAZON_DIR at a directory holding books.txt, dvd.txt,
// electronics.txt and kitchen.txt; skipped when absent.
std::string check_benchmark() {
  const char* env = std::getenv("MBF_AMAZON_DIR");
  const std::filesystem::path dir = env ? env : "data/amazon";
  const std::vector<std::string> names = {"books", "dvd", "electronics",
                                          "kitchen"};
  for (const auto& n : names)
    if (!std::filesystem::exists(dir / (n + ".txt")))
      throw check_skipped("dataset not found under " + dir.string() +
                          " (set MBF_AMAZON_DIR)");

  const std::filesystem::path work =
      std::filesystem::temp_directory_path() / "mbf_benchmark";
  std::filesystem::remove_all(work);
  std::filesystem::create_directories(work);
  std::ostringstream config;
  config << "{\n  \"alpha\": 0.5,\n  \"beta\": 1.0,\n  \"batch_size\": 16,\n"
         << "  \"learning_rate\": 1e-4,\n  \"epochs\": 10,\n  \"folds\": 5,\n"
         << "  \"seed\": 0,\n  \"data\": {";
  for (std::size_t i = 0; i < names.size(); ++i)
    config << (i ? ", " : "") << '"' << names[i] << "\": \""
           << (dir / (names[i] + ".txt")).string() << '"';
  config << "}\n}\n";
  const std::filesystem::path cfg_path = work / "config.json";
  std::ofstream(cfg_path) << config.str();

  std::ostringstream out, err;
  const int rc = mbf::run_cli({"train", "--config", cfg_path.string(), "--out",
                               (work / "run").string()},
                              out, err);
  require(rc == 0, fmt("exit code %d: %s", rc, err.str().c_str()));

  std::ifstream results(work / "run" / "results.tsv");
  std::string line, avg_line;
  while (std::getline(results, line))
    if (line.rfind("AVG\t", 0) == 0) avg_line = line;
  require(!avg_line.empty(), "no AVG row in results.tsv");
  const double acc = std::stod(avg_line.substr(4));
  require(std::fabs(acc - 87.71) <= 2.0,
          fmt("mean accuracy %.2f vs 87.71 +/- 2.0", acc));
  return fmt("5-fold mean accuracy %.2f within 87.71 +/- 2.0", acc);
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    double limit_seconds;  // 0 = no limit
    std::function<std::string()> run;
  };
  const std::vector<Entry> entries = {
      {"theory verification", 5.0, check_theory},
      {"entropy and frobenius bounds", 0.0, check_bounds},
      {"full-objective gradient check", 10.0, check_gradients},
      {"update partition", 0.0, check_partition},
      {"confidence mechanism", 300.0, check_mechanism},
      {"adversarial confusion", 300.0, check_confusion},
      {"review benchmark (optional)", 0.0, check_benchmark},
  };

  int failures = 0;
  for (const auto& entry : entries) {
    const auto start = std::chrono::steady_clock::now();
    std::string status = "PASS", detail;
    try {
      detail = entry.run();
    } catch (const check_skipped& e) {
      status = "SKIP";
      detail = e.what();
    } catch (const std::exception& e) {
      status = "FAIL";
      detail = e.what();
      ++failures;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (status == "PASS" && entry.limit_seconds > 0.0 &&
        seconds > entry.limit_seconds) {
      status = "FAIL";
      detail = fmt("finished in %.1fs, limit %.0fs", seconds, entry.limit_seconds);
      ++failures;
    }
    std::printf("%s  %-32s %7.2fs  %s\n", status.c_str(), entry.name, seconds,
                detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
