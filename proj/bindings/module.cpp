#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "mbf/analytics.hpp"
#include "mbf/data.hpp"
#include "mbf/model.hpp"
#include "mbf/trainer.hpp"

namespace py = pybind11;
using namespace mbf;

namespace {

BatchOutputMatrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ShapeError("matrix is empty");
  const std::size_t cols = rows[0].size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("matrix rows have unequal lengths");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return BatchOutputMatrix::from(rows.size(), cols, std::move(flat));
}

std::vector<DomainDataset> load_paths(const std::vector<std::string>& paths,
                                      std::size_t feature_dim) {
  std::vector<DomainDataset> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    DomainDataset ds = load_domain(p, feature_dim);
    ds.name = std::filesystem::path(p).stem().string();
    out.push_back(std::move(ds));
  }
  return out;
}

MdtcArch arch_from(std::size_t input_dim, std::vector<std::size_t> hidden_dims,
                   std::size_t shared_out, std::size_t private_out,
                   double dropout_rate) {
  MdtcArch arch;
  arch.input_dim = input_dim;
  arch.hidden_dims = std::move(hidden_dims);
  arch.shared_out = shared_out;
  arch.private_out = private_out;
  arch.dropout_rate = dropout_rate;
  return arch;
}

OptimizerKind optimizer_from(const std::string& name) {
  if (name == "sgd") return OptimizerKind::plain_sgd;
  if (name == "momentum") return OptimizerKind::momentum;
  if (name == "adam") return OptimizerKind::adaptive_moment;
  throw ConfigError("optimizer must be one of sgd, momentum, adam; got \"" +
                    name + "\"");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "batch-output analytics and multi-domain classifier core";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConstraintError>(m, "ConstraintError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<mbf::IndexError>(m, "RowIndexError", PyExc_IndexError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);

  m.def(
      "batch_entropy",
      [](const std::vector<std::vector<double>>& rows) {
        return batch_entropy(matrix_from_rows(rows));
      },
      py::arg("rows"),
      "Mean per-row Shannon entropy of a row-stochastic matrix.");

  m.def(
      "batch_frobenius",
      [](const std::vector<std::vector<double>>& rows) {
        return batch_frobenius(matrix_from_rows(rows));
      },
      py::arg("rows"), "Frobenius norm of a row-stochastic matrix.");

  m.def(
      "row_partials",
      [](const std::vector<double>& row, std::size_t j) {
        RowProbe probe;
        probe.row = row;
        probe.j = j;
        RowPartials p = row_partials(probe);
        return py::make_tuple(p.df, p.dh);
      },
      py::arg("row"), py::arg("j"),
      "Partial derivatives of the row square-sum and row entropy with "
      "respect to free coordinate j (1-based; the last coordinate "
      "compensates to keep the row on the simplex).");

  m.def(
      "verify_opposite_monotonicity",
      [](std::size_t trials, std::size_t k, std::uint64_t seed) {
        MonotonicityReport r = verify_opposite_monotonicity(trials, k, seed);
        py::dict out;
        out["checked"] = r.checked;
        out["sign_failures"] = r.sign_failures;
        out["fd_failures"] = r.fd_failures;
        return out;
      },
      py::arg("trials"), py::arg("k"), py::arg("seed"),
      "Samples interior stochastic rows and confirms the square-sum and "
      "entropy derivatives never share a sign; finite differences must "
      "match the closed forms.");

  m.def(
      "gen_synthetic",
      [](const std::string& out_dir, std::size_t domains, std::size_t classes,
         std::size_t feature_dim, std::size_t labeled, std::size_t unlabeled,
         double domain_shift, std::uint64_t seed) {
        auto datasets = gen_synthetic(domains, classes, feature_dim, labeled,
                                      unlabeled, domain_shift, seed);
        std::vector<std::string> paths;
        for (const auto& ds : datasets) {
          std::string path = out_dir + "/" + ds.name + ".txt";
          save_domain(ds, path);
          paths.push_back(path);
        }
        return paths;
      },
      py::arg("out_dir"), py::arg("domains"), py::arg("classes"),
      py::arg("feature_dim"), py::arg("labeled"), py::arg("unlabeled"),
      py::arg("domain_shift"), py::arg("seed"),
      "Writes one sparse bag-of-words file per synthetic domain; returns "
      "the paths.");

  m.def(
      "train",
      [](const std::vector<std::string>& train_paths,
         const std::vector<std::string>& val_paths, std::size_t classes,
         const std::string& checkpoint, std::size_t input_dim,
         std::vector<std::size_t> hidden_dims, std::size_t shared_out,
         std::size_t private_out, double dropout_rate, double alpha,
         double beta, std::size_t batch_size, double learning_rate,
         const std::string& optimizer, std::size_t epochs, std::uint64_t seed,
         std::size_t eval_every) {
        if (train_paths.empty()) throw ConfigError("train_paths is empty");
        if (val_paths.size() != train_paths.size())
          throw ConfigError("val_paths must pair up with train_paths");
        const auto trains = load_paths(train_paths, input_dim);
        const auto vals = load_paths(val_paths, input_dim);
        std::vector<DomainSplits> splits;
        for (std::size_t d = 0; d < trains.size(); ++d)
          splits.push_back({trains[d], vals[d]});
        const MdtcArch arch = arch_from(input_dim, std::move(hidden_dims),
                                        shared_out, private_out, dropout_rate);
        TrainConfig cfg;
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.batch_size = batch_size;
        cfg.learning_rate = learning_rate;
        cfg.optimizer = optimizer_from(optimizer);
        cfg.epochs = epochs;
        cfg.rng_seed = seed;
        cfg.eval_every = eval_every;
        TrainResult result = [&] {
          py::gil_scoped_release release;
          return mbf::train(arch, classes, splits, cfg);
        }();
        if (!checkpoint.empty()) save_checkpoint(result.model, checkpoint);
        const EvalResult best = evaluate(result.model, vals);
        py::list reports;
        for (const auto& ep : result.reports) {
          py::dict row;
          row["epoch"] = ep.epoch;
          row["l_c"] = ep.l_c;
          row["l_adv"] = ep.l_adv;
          row["l_bf"] = ep.l_bf;
          row["combined"] = ep.combined;
          row["val_accuracy"] = ep.val_accuracy;
          row["val_accuracy_mean"] = ep.val_accuracy_mean;
          reports.append(row);
        }
        py::dict out;
        out["epochs"] = reports;
        out["val_accuracy"] = best.per_domain;
        out["val_accuracy_mean"] = best.mean;
        return out;
      },
      py::arg("train_paths"), py::arg("val_paths"), py::arg("classes") = 2,
      py::arg("checkpoint") = "", py::arg("input_dim") = 5000,
      py::arg("hidden_dims") = std::vector<std::size_t>{1000, 500},
      py::arg("shared_out") = 128, py::arg("private_out") = 64,
      py::arg("dropout_rate") = 0.4, py::arg("alpha") = 0.5,
      py::arg("beta") = 1.0, py::arg("batch_size") = 16,
      py::arg("learning_rate") = 1e-4, py::arg("optimizer") = "adam",
      py::arg("epochs") = 10, py::arg("seed") = 0, py::arg("eval_every") = 1,
      "Alternating adversarial training over one domain file per entry; "
      "returns per-epoch losses plus the best validation accuracy and "
      "optionally writes that model as a checkpoint.");

  m.def(
      "evaluate",
      [](const std::string& checkpoint,
         const std::vector<std::string>& data_paths, std::size_t classes,
         std::size_t input_dim, std::vector<std::size_t> hidden_dims,
         std::size_t shared_out, std::size_t private_out,
         double dropout_rate) {
        if (data_paths.empty()) throw ConfigError("data_paths is empty");
        const auto sets = load_paths(data_paths, input_dim);
        const MdtcArch arch = arch_from(input_dim, std::move(hidden_dims),
                                        shared_out, private_out, dropout_rate);
        MdtcModel model = init_model(arch, sets.size(), classes, 0);
        load_checkpoint(model, checkpoint);
        const EvalResult ev = evaluate(model, sets);
        py::dict out;
        out["per_domain"] = ev.per_domain;
        out["mean"] = ev.mean;
        return out;
      },
      py::arg("checkpoint"), py::arg("data_paths"), py::arg("classes") = 2,
      py::arg("input_dim") = 5000,
      py::arg("hidden_dims") = std::vector<std::size_t>{1000, 500},
      py::arg("shared_out") = 128, py::arg("private_out") = 64,
      py::arg("dropout_rate") = 0.4,
      "Labeled accuracy per domain under a saved checkpoint; the domain "
      "order and count must match the one the checkpoint was trained "
      "with.");
}
