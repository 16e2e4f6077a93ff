#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mbf/model.hpp"
#include "mbf/trainer.hpp"

namespace mbf {

/// gen-data parameters (see gen_synthetic).
struct GenConfig {
  std::size_t domains = 4;
  std::size_t classes = 2;
  std::size_t feature_dim = 5000;
  std::size_t labeled = 2000;
  std::size_t unlabeled = 2000;
  double shift = 2.0;
};

/// verify-theory parameters: path samples per class count.
struct VerifyConfig {
  std::size_t trials = 10000;
  std::vector<std::size_t> k = {2, 3, 5, 10};
};

/// One run's full configuration: the training knobs plus data paths,
/// architecture, cross-validation shape, and the subcommand-specific
/// blocks. Parses from a single JSON document where unknown keys are
/// errors; command-line flags override file values.
struct RunConfig {
  TrainConfig train;
  MdtcArch arch;
  std::size_t classes = 2;
  std::size_t folds = 5;
  std::size_t trials = 1;  // repeated cross-validation runs, seeded seed+0..
  std::string out;
  // (domain name, data file path) in config-file order
  std::vector<std::pair<std::string, std::string>> data;
  GenConfig gen;
  VerifyConfig verify;
};

/// Parses a JSON document into a RunConfig. Any key not in the schema, at
/// any level, raises ConfigError naming it; so does a value of the wrong
/// type. Absent keys keep their defaults.
RunConfig parse_run_config(const std::string& json_text);

/// The effective configuration as a JSON document; parse_run_config reads
/// it back to an equivalent RunConfig.
std::string dump_run_config(const RunConfig& config);

/// Entry point behind the `mbf` binary: args exclude the program name.
/// Subcommands: train, eval, verify-theory, gen-data. Returns the process
/// exit code: 0 success, 1 internal error (including training divergence
/// and failed theory checks), 2 data/config error, 3 checkpoint mismatch.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mbf
