#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mbf/errors.hpp"
#include "mbf/rng.hpp"

namespace mbf {

/// Sparse non-negative feature vector: parallel arrays of strictly
/// increasing indices and their values (raw counts).
struct SparseVec {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  bool operator==(const SparseVec&) const = default;
};

struct LabeledSample {
  SparseVec x;
  int label = 0;  // 1..K

  bool operator==(const LabeledSample&) const = default;
};

/// One domain's corpus: a labeled pool and an unlabeled pool over a shared
/// feature space. The pools are disjoint by construction (each sample is
/// read or generated into exactly one of them).
struct DomainDataset {
  std::string name;
  std::vector<LabeledSample> labeled;
  std::vector<SparseVec> unlabeled;
  std::size_t feature_dim = 0;

  bool operator==(const DomainDataset&) const = default;
};

/// Reads the one-sample-per-line format `<label> <idx>:<val> ...` where
/// label is 1..K for labeled samples and -1 marks an unlabeled sample;
/// indices are 0-based and strictly increasing; values are non-negative.
/// Blank lines are skipped. Malformed content raises ParseError naming the
/// line; an index >= feature_dim raises IndexError naming the line.
DomainDataset load_domain(const std::string& path, std::size_t feature_dim);

/// Writes the same format back; integral values print without a decimal
/// point, so load/save round-trips a file modulo whitespace.
void save_domain(const DomainDataset& ds, const std::string& path);

/// Assignment of every labeled sample to exactly one of fold_count folds,
/// stratified by label: per domain, fold sizes differ by at most one and so
/// do any label's per-fold counts.
struct FoldPlan {
  std::size_t fold_count = 0;
  // fold_of[domain][sample] = fold index in [0, fold_count)
  std::vector<std::vector<std::size_t>> fold_of;
};

/// Deterministic stratified shuffle-split of each domain's labeled pool.
/// Throws DataError when a domain has fewer labeled samples than folds.
FoldPlan make_folds(const std::vector<DomainDataset>& ds, std::size_t k,
                    std::uint64_t rng_seed);

/// Indices of domain `domain`'s labeled samples inside fold `fold`
/// (members = true) or outside it (members = false), in sample order.
std::vector<std::size_t> fold_indices(const FoldPlan& plan, std::size_t domain,
                                      std::size_t fold, bool members);

/// Synthetic multi-domain corpus. Every document is a bag of tokens drawn
/// from a mixture profile 0.5*background + class_profile + domain_shift *
/// domain_profile (each profile normalized to unit mass): the class signal
/// is shared across domains while the domain nuisance scales with
/// domain_shift, so shift 0 leaves domains indistinguishable and large
/// shifts make them separable from raw features without touching the class
/// signal. Labeled samples cycle through the K labels (exact balance);
/// unlabeled samples draw a hidden label and discard it.
std::vector<DomainDataset> gen_synthetic(std::size_t m, std::size_t k,
                                         std::size_t feature_dim,
                                         std::size_t labeled_per_domain,
                                         std::size_t unlabeled_per_domain,
                                         double domain_shift, std::uint64_t rng_seed);

/// Moves `holdout_count` labeled samples (stratified by label, seeded
/// shuffle) out of the dataset: returns {remainder, holdout}. Unlabeled
/// samples all stay in the remainder.
std::pair<DomainDataset, DomainDataset> split_holdout(const DomainDataset& ds,
                                                      std::size_t holdout_count,
                                                      std::uint64_t rng_seed);

/// Dense row for model input. With log_counts the raw count x becomes
/// log(1 + x); off by default (raw counts).
std::vector<double> densify(const SparseVec& v, std::size_t feature_dim,
                            bool log_counts = false);

}  // namespace mbf
