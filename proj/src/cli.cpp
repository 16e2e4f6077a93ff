#include "mbf/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "mbf/analytics.hpp"
#include "mbf/data.hpp"
#include "mbf/errors.hpp"

namespace mbf {
namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---- config parsing ----

void require_known_keys(const ordered_json& obj, const char* where,
                        std::initializer_list<const char*> known) {
  for (const auto& item : obj.items()) {
    bool found = false;
    for (const char* k : known) {
      if (item.key() == k) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw ConfigError(std::string("unknown config key '") + where + item.key() + "'");
    }
  }
}

double get_double(const ordered_json& obj, const char* where, const char* key,
                  double fallback) {
  if (!obj.contains(key)) return fallback;
  const ordered_json& v = obj.at(key);
  if (!v.is_number()) {
    throw ConfigError(std::string("config key '") + where + key + "' must be a number");
  }
  return v.get<double>();
}

std::size_t get_size(const ordered_json& obj, const char* where, const char* key,
                     std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const ordered_json& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
    throw ConfigError(std::string("config key '") + where + key +
                      "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

bool get_bool(const ordered_json& obj, const char* where, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const ordered_json& v = obj.at(key);
  if (!v.is_boolean()) {
    throw ConfigError(std::string("config key '") + where + key + "' must be a boolean");
  }
  return v.get<bool>();
}

std::string get_string(const ordered_json& obj, const char* where, const char* key,
                       const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const ordered_json& v = obj.at(key);
  if (!v.is_string()) {
    throw ConfigError(std::string("config key '") + where + key + "' must be a string");
  }
  return v.get<std::string>();
}

std::vector<std::size_t> get_size_array(const ordered_json& obj, const char* where,
                                        const char* key,
                                        const std::vector<std::size_t>& fallback) {
  if (!obj.contains(key)) return fallback;
  const ordered_json& v = obj.at(key);
  if (!v.is_array()) {
    throw ConfigError(std::string("config key '") + where + key +
                      "' must be an array of integers");
  }
  std::vector<std::size_t> out;
  for (const ordered_json& e : v) {
    if (!e.is_number_integer() || e.get<long long>() < 0) {
      throw ConfigError(std::string("config key '") + where + key +
                        "' must be an array of non-negative integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::plain_sgd;
  if (name == "momentum") return OptimizerKind::momentum;
  if (name == "adam") return OptimizerKind::adaptive_moment;
  throw ConfigError("config key 'optimizer' must be one of sgd, momentum, adam (got '" +
                    name + "')");
}

const char* optimizer_to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::plain_sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adaptive_moment: return "adam";
  }
  return "adam";
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  require_known_keys(j, "",
                     {"alpha", "beta", "batch_size", "learning_rate", "optimizer", "epochs",
                      "seed", "eval_every", "assert_update_partition", "classes", "folds",
                      "trials", "out", "data", "arch", "gen", "verify"});

  RunConfig rc;
  rc.train.alpha = get_double(j, "", "alpha", rc.train.alpha);
  rc.train.beta = get_double(j, "", "beta", rc.train.beta);
  rc.train.batch_size = get_size(j, "", "batch_size", rc.train.batch_size);
  rc.train.learning_rate = get_double(j, "", "learning_rate", rc.train.learning_rate);
  rc.train.optimizer =
      optimizer_from_string(get_string(j, "", "optimizer", optimizer_to_string(rc.train.optimizer)));
  rc.train.epochs = get_size(j, "", "epochs", rc.train.epochs);
  rc.train.rng_seed = get_size(j, "", "seed", rc.train.rng_seed);
  rc.train.eval_every = get_size(j, "", "eval_every", rc.train.eval_every);
  rc.train.assert_update_partition =
      get_bool(j, "", "assert_update_partition", rc.train.assert_update_partition);
  rc.classes = get_size(j, "", "classes", rc.classes);
  rc.folds = get_size(j, "", "folds", rc.folds);
  rc.trials = get_size(j, "", "trials", rc.trials);
  rc.out = get_string(j, "", "out", rc.out);

  if (j.contains("data")) {
    const ordered_json& d = j.at("data");
    if (!d.is_object()) {
      throw ConfigError("config key 'data' must be an object mapping domain name to path");
    }
    for (const auto& item : d.items()) {
      if (!item.value().is_string()) {
        throw ConfigError("config key 'data." + item.key() + "' must be a path string");
      }
      rc.data.emplace_back(item.key(), item.value().get<std::string>());
    }
  }

  if (j.contains("arch")) {
    const ordered_json& a = j.at("arch");
    if (!a.is_object()) throw ConfigError("config key 'arch' must be an object");
    require_known_keys(a, "arch.",
                       {"input_dim", "hidden_dims", "shared_out", "private_out", "dropout_rate"});
    rc.arch.input_dim = get_size(a, "arch.", "input_dim", rc.arch.input_dim);
    rc.arch.hidden_dims = get_size_array(a, "arch.", "hidden_dims", rc.arch.hidden_dims);
    rc.arch.shared_out = get_size(a, "arch.", "shared_out", rc.arch.shared_out);
    rc.arch.private_out = get_size(a, "arch.", "private_out", rc.arch.private_out);
    rc.arch.dropout_rate = get_double(a, "arch.", "dropout_rate", rc.arch.dropout_rate);
  }

  if (j.contains("gen")) {
    const ordered_json& g = j.at("gen");
    if (!g.is_object()) throw ConfigError("config key 'gen' must be an object");
    require_known_keys(g, "gen.",
                       {"domains", "classes", "feature_dim", "labeled", "unlabeled", "shift"});
    rc.gen.domains = get_size(g, "gen.", "domains", rc.gen.domains);
    rc.gen.classes = get_size(g, "gen.", "classes", rc.gen.classes);
    rc.gen.feature_dim = get_size(g, "gen.", "feature_dim", rc.gen.feature_dim);
    rc.gen.labeled = get_size(g, "gen.", "labeled", rc.gen.labeled);
    rc.gen.unlabeled = get_size(g, "gen.", "unlabeled", rc.gen.unlabeled);
    rc.gen.shift = get_double(g, "gen.", "shift", rc.gen.shift);
  }

  if (j.contains("verify")) {
    const ordered_json& v = j.at("verify");
    if (!v.is_object()) throw ConfigError("config key 'verify' must be an object");
    require_known_keys(v, "verify.", {"trials", "k"});
    rc.verify.trials = get_size(v, "verify.", "trials", rc.verify.trials);
    rc.verify.k = get_size_array(v, "verify.", "k", rc.verify.k);
  }

  return rc;
}

std::string dump_run_config(const RunConfig& rc) {
  ordered_json j;
  j["alpha"] = rc.train.alpha;
  j["beta"] = rc.train.beta;
  j["batch_size"] = rc.train.batch_size;
  j["learning_rate"] = rc.train.learning_rate;
  j["optimizer"] = optimizer_to_string(rc.train.optimizer);
  j["epochs"] = rc.train.epochs;
  j["seed"] = rc.train.rng_seed;
  j["eval_every"] = rc.train.eval_every;
  j["assert_update_partition"] = rc.train.assert_update_partition;
  j["classes"] = rc.classes;
  j["folds"] = rc.folds;
  j["trials"] = rc.trials;
  j["out"] = rc.out;
  ordered_json data = ordered_json::object();
  for (const auto& [name, path] : rc.data) data[name] = path;
  j["data"] = std::move(data);
  j["arch"] = {{"input_dim", rc.arch.input_dim},
               {"hidden_dims", rc.arch.hidden_dims},
               {"shared_out", rc.arch.shared_out},
               {"private_out", rc.arch.private_out},
               {"dropout_rate", rc.arch.dropout_rate}};
  j["gen"] = {{"domains", rc.gen.domains},
              {"classes", rc.gen.classes},
              {"feature_dim", rc.gen.feature_dim},
              {"labeled", rc.gen.labeled},
              {"unlabeled", rc.gen.unlabeled},
              {"shift", rc.gen.shift}};
  j["verify"] = {{"trials", rc.verify.trials}, {"k", rc.verify.k}};
  return j.dump(2) + "\n";
}

namespace {

// ---- shared plumbing ----

struct FlagValues {
  std::string config_path;
  std::optional<double> alpha, beta;
  std::optional<std::size_t> batch_size, epochs, trials;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string k_csv;
  std::string checkpoint;
};

RunConfig effective_config(const FlagValues& f, bool trials_mean_verify) {
  RunConfig rc;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw ConfigError("cannot read config file " + f.config_path);
    std::ostringstream text;
    text << in.rdbuf();
    rc = parse_run_config(text.str());
  }
  if (f.alpha) rc.train.alpha = *f.alpha;
  if (f.beta) rc.train.beta = *f.beta;
  if (f.batch_size) rc.train.batch_size = *f.batch_size;
  if (f.epochs) rc.train.epochs = *f.epochs;
  if (f.seed) rc.train.rng_seed = *f.seed;
  if (f.out) rc.out = *f.out;
  if (f.trials) {
    if (trials_mean_verify) {
      rc.verify.trials = *f.trials;
    } else {
      rc.trials = *f.trials;
    }
  }
  if (!f.k_csv.empty()) {
    rc.verify.k.clear();
    std::stringstream ss(f.k_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        const long v = std::stol(tok);
        if (v < 2) throw std::invalid_argument("");
        rc.verify.k.push_back(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
        throw ConfigError("--k expects a comma-separated list of class counts >= 2 (got '" +
                          tok + "')");
      }
    }
    if (rc.verify.k.empty()) throw ConfigError("--k got an empty list");
  }
  return rc;
}

std::vector<DomainDataset> load_configured_domains(const RunConfig& rc) {
  if (rc.data.empty()) {
    throw ConfigError("no data files configured (config key 'data' maps domain name to path)");
  }
  std::vector<DomainDataset> domains;
  for (const auto& [name, path] : rc.data) {
    DomainDataset ds = load_domain(path, rc.arch.input_dim);
    ds.name = name;
    domains.push_back(std::move(ds));
  }
  return domains;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DataError("write to " + path.string() + " failed");
}

// ---- subcommands ----

int cmd_verify_theory(const RunConfig& rc, std::ostream& out) {
  if (rc.verify.trials == 0) throw ConfigError("verify-theory needs trials >= 1");
  if (rc.verify.k.empty()) throw ConfigError("verify-theory needs at least one class count");
  std::size_t failures = 0;
  for (std::size_t k : rc.verify.k) {
    if (k < 2) throw ConfigError("verify-theory needs class counts >= 2");
  }
  for (std::size_t k : rc.verify.k) {
    MonotonicityReport r = verify_opposite_monotonicity(rc.verify.trials, k, rc.train.rng_seed);
    out << "checked=" << r.checked << " sign_failures=" << r.sign_failures
        << " fd_failures=" << r.fd_failures << "\n";
    failures += r.sign_failures + r.fd_failures;
  }
  return failures == 0 ? 0 : 1;
}

int cmd_gen_data(const RunConfig& rc, std::ostream& out) {
  if (rc.out.empty()) throw ConfigError("gen-data needs an output directory (--out)");
  fs::create_directories(rc.out);
  std::vector<DomainDataset> sets =
      gen_synthetic(rc.gen.domains, rc.gen.classes, rc.gen.feature_dim, rc.gen.labeled,
                    rc.gen.unlabeled, rc.gen.shift, rc.train.rng_seed);

  ordered_json manifest;
  manifest["domains"] = rc.gen.domains;
  manifest["classes"] = rc.gen.classes;
  manifest["feature_dim"] = rc.gen.feature_dim;
  manifest["labeled"] = rc.gen.labeled;
  manifest["unlabeled"] = rc.gen.unlabeled;
  manifest["shift"] = rc.gen.shift;
  manifest["seed"] = rc.train.rng_seed;
  ordered_json files = ordered_json::object();
  for (const DomainDataset& ds : sets) {
    const std::string file = ds.name + ".txt";
    save_domain(ds, (fs::path(rc.out) / file).string());
    files[ds.name] = file;
  }
  manifest["files"] = std::move(files);
  write_text_file(fs::path(rc.out) / "manifest.json", manifest.dump(2) + "\n");
  write_text_file(fs::path(rc.out) / "config.json", dump_run_config(rc));
  out << "wrote " << sets.size() << " domains to " << rc.out << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  if (rc.out.empty()) throw ConfigError("train needs an output directory (--out)");
  if (rc.folds < 2) throw ConfigError("train needs folds >= 2");
  if (rc.trials < 1) throw ConfigError("train needs trials >= 1");
  std::vector<DomainDataset> domains = load_configured_domains(rc);
  const std::size_t m = domains.size();

  fs::create_directories(rc.out);
  write_text_file(fs::path(rc.out) / "config.json", dump_run_config(rc));

  // acc_by_domain[d] and fold_means collect one value per (trial, fold)
  std::vector<std::vector<double>> acc_by_domain(m);
  std::vector<double> fold_means;

  for (std::size_t t = 0; t < rc.trials; ++t) {
    const std::uint64_t seed_t = rc.train.rng_seed + t;
    FoldPlan plan = make_folds(domains, rc.folds, seed_t);
    for (std::size_t f = 0; f < rc.folds; ++f) {
      std::vector<DomainSplits> splits;
      std::vector<DomainDataset> val_sets;
      for (std::size_t d = 0; d < m; ++d) {
        DomainSplits s;
        s.train.name = domains[d].name;
        s.train.feature_dim = domains[d].feature_dim;
        s.train.unlabeled = domains[d].unlabeled;
        for (std::size_t i : fold_indices(plan, d, f, false)) {
          s.train.labeled.push_back(domains[d].labeled[i]);
        }
        s.validation.name = domains[d].name;
        s.validation.feature_dim = domains[d].feature_dim;
        for (std::size_t i : fold_indices(plan, d, f, true)) {
          s.validation.labeled.push_back(domains[d].labeled[i]);
        }
        val_sets.push_back(s.validation);
        splits.push_back(std::move(s));
      }

      const fs::path fold_dir =
          fs::path(rc.out) / ("trial" + std::to_string(t)) / ("fold" + std::to_string(f));
      fs::create_directories(fold_dir);
      for (const DomainDataset& v : val_sets) {
        save_domain(v, (fold_dir / ("val_" + v.name + ".txt")).string());
      }

      TrainConfig tc = rc.train;
      tc.rng_seed = seed_t;
      std::ofstream log(fold_dir / "train.log");
      TrainResult r;
      const std::string diverged = (fold_dir / "diverged.ckpt").string();
      try {
        r = train(rc.arch, rc.classes, splits, tc, &log, diverged);
      } catch (const TrainingError&) {
        err << "saved divergence snapshot to " << diverged << "\n";
        throw;
      }
      save_checkpoint(r.model, (fold_dir / "model.ckpt").string());

      EvalResult ev = evaluate(r.model, val_sets);
      for (std::size_t d = 0; d < m; ++d) acc_by_domain[d].push_back(ev.per_domain[d]);
      fold_means.push_back(ev.mean);
    }
  }

  std::string table = "domain\tmean_acc\tstd_acc\n";
  for (std::size_t d = 0; d < m; ++d) {
    table += domains[d].name + "\t" + percent(mean_of(acc_by_domain[d])) + "\t" +
             percent(std_of(acc_by_domain[d])) + "\n";
  }
  table += "AVG\t" + percent(mean_of(fold_means)) + "\t" + percent(std_of(fold_means)) + "\n";
  write_text_file(fs::path(rc.out) / "results.tsv", table);
  out << table;
  return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& checkpoint, std::ostream& out) {
  std::vector<DomainDataset> domains = load_configured_domains(rc);
  MdtcModel model = init_model(rc.arch, domains.size(), rc.classes, 0);
  load_checkpoint(model, checkpoint);
  EvalResult ev = evaluate(model, domains);
  out << "domain\taccuracy\n";
  for (std::size_t d = 0; d < domains.size(); ++d) {
    out << domains[d].name << "\t" << percent(ev.per_domain[d]) << "\n";
  }
  out << "AVG\t" << percent(ev.mean) << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"multi-domain text classification with shared-private adversarial features "
               "and batch-Frobenius regularization"};
  app.require_subcommand(1);
  FlagValues f;

  CLI::App* tr = app.add_subcommand("train", "cross-validated adversarial training");
  tr->add_option("--config", f.config_path, "JSON config file");
  tr->add_option("--alpha", f.alpha, "domain-adversarial weight");
  tr->add_option("--beta", f.beta, "batch-Frobenius weight");
  tr->add_option("--batch-size", f.batch_size, "mini-batch rows per domain");
  tr->add_option("--seed", f.seed, "rng seed");
  tr->add_option("--epochs", f.epochs, "training epochs per fold");
  tr->add_option("--out", f.out, "output directory");
  tr->add_option("--trials", f.trials, "repeated cross-validation runs");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on configured data");
  ev->add_option("--config", f.config_path, "JSON config file");
  ev->add_option("checkpoint", f.checkpoint, "checkpoint file")->required();

  CLI::App* vt = app.add_subcommand("verify-theory",
                                    "numerically check that the batch Frobenius norm and "
                                    "batch entropy move in opposite directions");
  vt->add_option("--config", f.config_path, "JSON config file");
  vt->add_option("--trials", f.trials, "sampled rows per class count");
  vt->add_option("--k", f.k_csv, "comma-separated class counts");
  vt->add_option("--seed", f.seed, "rng seed");

  CLI::App* gd = app.add_subcommand("gen-data", "write a synthetic multi-domain corpus");
  gd->add_option("--config", f.config_path, "JSON config file");
  gd->add_option("--out", f.out, "output directory");
  gd->add_option("--seed", f.seed, "rng seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*vt) return cmd_verify_theory(effective_config(f, true), out);
    const RunConfig rc = effective_config(f, false);
    if (*tr) return cmd_train(rc, out, err);
    if (*ev) return cmd_eval(rc, f.checkpoint, out);
    if (*gd) return cmd_gen_data(rc, out);
    return 2;  // unreachable: require_subcommand(1)
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IndexError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mbf
