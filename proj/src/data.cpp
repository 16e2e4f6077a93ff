#include "mbf/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mbf {

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no,
                             const std::string& what) {
  throw ParseError(path + " line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

DomainDataset load_domain(const std::string& path, std::size_t feature_dim) {
  std::ifstream in(path);
  if (!in) throw DataError("load_domain: cannot open " + path);

  DomainDataset ds;
  ds.name = path;
  ds.feature_dim = feature_dim;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;  // blank
    std::istringstream ss(line);
    long label;
    if (!(ss >> label)) {
      parse_fail(path, line_no, "expected an integer label");
    }
    if (label != -1 && label < 1) {
      parse_fail(path, line_no, "label must be 1..K or -1, got " + std::to_string(label));
    }

    SparseVec v;
    std::string tok;
    long long prev = -1;
    while (ss >> tok) {
      const std::size_t colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size()) {
        parse_fail(path, line_no, "expected <idx>:<val>, got '" + tok + "'");
      }
      long long idx;
      double val;
      std::size_t idx_end, val_end;
      try {
        idx = std::stoll(tok.substr(0, colon), &idx_end);
        val = std::stod(tok.substr(colon + 1), &val_end);
      } catch (const std::exception&) {
        parse_fail(path, line_no, "expected <idx>:<val>, got '" + tok + "'");
      }
      if (idx_end != colon || val_end != tok.size() - colon - 1) {
        parse_fail(path, line_no, "trailing characters in '" + tok + "'");
      }
      if (idx < 0) {
        parse_fail(path, line_no, "index must be >= 0, got " + std::to_string(idx));
      }
      if (idx <= prev) {
        parse_fail(path, line_no, "indices must be strictly increasing, " +
                                      std::to_string(idx) + " after " + std::to_string(prev));
      }
      if (idx >= static_cast<long long>(feature_dim)) {
        throw IndexError(path + " line " + std::to_string(line_no) + ": index " +
                         std::to_string(idx) + " outside feature space of " +
                         std::to_string(feature_dim));
      }
      if (!(val >= 0.0) || !std::isfinite(val)) {  // also rejects NaN/inf
        parse_fail(path, line_no, "feature values are counts and must be >= 0, got " +
                                      std::to_string(val));
      }
      prev = idx;
      v.indices.push_back(static_cast<std::uint32_t>(idx));
      v.values.push_back(val);
    }

    if (label == -1) {
      ds.unlabeled.push_back(std::move(v));
    } else {
      ds.labeled.push_back(LabeledSample{std::move(v), static_cast<int>(label)});
    }
  }
  return ds;
}

namespace {

std::string format_value(double v) {
  char buf[32];
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
  } else {
    std::snprintf(buf, sizeof buf, "%.17g", v);
  }
  return buf;
}

void write_line(std::ofstream& out, int label, const SparseVec& v) {
  out << label;
  for (std::size_t i = 0; i < v.indices.size(); ++i) {
    out << ' ' << v.indices[i] << ':' << format_value(v.values[i]);
  }
  out << '\n';
}

}  // namespace

void save_domain(const DomainDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_domain: cannot open " + path + " for writing");
  for (const LabeledSample& s : ds.labeled) write_line(out, s.label, s.x);
  for (const SparseVec& v : ds.unlabeled) write_line(out, -1, v);
  if (!out) throw DataError("save_domain: write to " + path + " failed");
}

FoldPlan make_folds(const std::vector<DomainDataset>& ds, std::size_t k,
                    std::uint64_t rng_seed) {
  if (k == 0) throw ConfigError("make_folds: fold count must be >= 1");
  FoldPlan plan;
  plan.fold_count = k;
  plan.fold_of.resize(ds.size());
  RngStream rng(rng_seed);
  for (std::size_t d = 0; d < ds.size(); ++d) {
    const std::size_t n = ds[d].labeled.size();
    if (n < k) {
      throw DataError("make_folds: domain " + ds[d].name + " has " + std::to_string(n) +
                      " labeled samples for " + std::to_string(k) + " folds");
    }
    // group sample indices by label, then deal each shuffled group onto a
    // cursor that runs on across groups: per-label and total fold sizes both
    // stay within one of each other
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[ds[d].labeled[i].label].push_back(i);
    plan.fold_of[d].assign(n, 0);
    std::size_t cursor = rng.index(k);
    for (auto& [label, group] : groups) {
      rng.shuffle(group);
      for (std::size_t i : group) plan.fold_of[d][i] = cursor++ % k;
    }
  }
  return plan;
}

std::vector<std::size_t> fold_indices(const FoldPlan& plan, std::size_t domain,
                                      std::size_t fold, bool members) {
  if (domain >= plan.fold_of.size()) {
    throw IndexError("fold_indices: domain " + std::to_string(domain) + " outside [0, " +
                     std::to_string(plan.fold_of.size()) + ")");
  }
  if (fold >= plan.fold_count) {
    throw IndexError("fold_indices: fold " + std::to_string(fold) + " outside [0, " +
                     std::to_string(plan.fold_count) + ")");
  }
  std::vector<std::size_t> out;
  const auto& assign = plan.fold_of[domain];
  for (std::size_t i = 0; i < assign.size(); ++i) {
    if ((assign[i] == fold) == members) out.push_back(i);
  }
  return out;
}

namespace {

// normalized random profile; keep_prob < 1 gives a sparse support
std::vector<double> random_profile(std::size_t dim, double keep_prob, RngStream& rng) {
  std::vector<double> p(dim, 0.0);
  double sum = 0.0;
  for (double& v : p) {
    if (rng.uniform01() < keep_prob) {
      v = rng.uniform(0.5, 1.5);
      sum += v;
    }
  }
  if (sum == 0.0) {  // tiny dims can miss every feature; force one
    p[rng.index(dim)] = 1.0;
    sum = 1.0;
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> cumulative(const std::vector<double>& p) {
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    cdf[i] = acc;
  }
  cdf.back() = 1.0;  // guard the binary search against rounding
  return cdf;
}

SparseVec draw_document(const std::vector<double>& cdf, std::size_t tokens,
                        RngStream& rng) {
  std::map<std::uint32_t, double> counts;
  for (std::size_t t = 0; t < tokens; ++t) {
    const double u = rng.uniform01();
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u,
                                     [](double c, double x) { return c <= x; });
    counts[static_cast<std::uint32_t>(it - cdf.begin())] += 1.0;
  }
  SparseVec v;
  v.indices.reserve(counts.size());
  v.values.reserve(counts.size());
  for (const auto& [idx, c] : counts) {
    v.indices.push_back(idx);
    v.values.push_back(c);
  }
  return v;
}

}  // namespace

std::vector<DomainDataset> gen_synthetic(std::size_t m, std::size_t k,
                                         std::size_t feature_dim,
                                         std::size_t labeled_per_domain,
                                         std::size_t unlabeled_per_domain,
                                         double domain_shift, std::uint64_t rng_seed) {
  if (m < 1 || k < 1 || feature_dim < 1 || labeled_per_domain < 1 ||
      unlabeled_per_domain < 1) {
    throw ConfigError("gen_synthetic: all counts must be >= 1");
  }
  if (domain_shift < 0.0) throw ConfigError("gen_synthetic: domain_shift must be >= 0");

  RngStream rng(rng_seed);
  const std::vector<double> background = random_profile(feature_dim, 1.0, rng);
  std::vector<std::vector<double>> class_profile(k);
  for (auto& p : class_profile) p = random_profile(feature_dim, 0.1, rng);
  std::vector<std::vector<double>> domain_profile(m);
  for (auto& p : domain_profile) p = random_profile(feature_dim, 0.1, rng);

  // one token distribution per (domain, class) pair
  std::vector<std::vector<double>> cdf(m * k);
  for (std::size_t d = 0; d < m; ++d) {
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> p(feature_dim);
      double sum = 0.0;
      for (std::size_t f = 0; f < feature_dim; ++f) {
        p[f] = 0.5 * background[f] + class_profile[c][f] +
               domain_shift * domain_profile[d][f];
        sum += p[f];
      }
      for (double& v : p) v /= sum;
      cdf[d * k + c] = cumulative(p);
    }
  }

  auto doc_length = [&rng]() { return 30 + rng.index(41); };  // 30..70 tokens

  std::vector<DomainDataset> out(m);
  for (std::size_t d = 0; d < m; ++d) {
    out[d].name = "d" + std::to_string(d + 1);
    out[d].feature_dim = feature_dim;
    out[d].labeled.reserve(labeled_per_domain);
    for (std::size_t i = 0; i < labeled_per_domain; ++i) {
      const std::size_t c = i % k;  // exact class balance
      out[d].labeled.push_back(LabeledSample{
          draw_document(cdf[d * k + c], doc_length(), rng), static_cast<int>(c) + 1});
    }
    out[d].unlabeled.reserve(unlabeled_per_domain);
    for (std::size_t i = 0; i < unlabeled_per_domain; ++i) {
      const std::size_t c = rng.index(k);  // hidden label, discarded
      out[d].unlabeled.push_back(draw_document(cdf[d * k + c], doc_length(), rng));
    }
  }
  return out;
}

std::pair<DomainDataset, DomainDataset> split_holdout(const DomainDataset& ds,
                                                      std::size_t holdout_count,
                                                      std::uint64_t rng_seed) {
  if (holdout_count > ds.labeled.size()) {
    throw DataError("split_holdout: asked for " + std::to_string(holdout_count) +
                    " of " + std::to_string(ds.labeled.size()) + " labeled samples");
  }
  RngStream rng(rng_seed);
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.labeled.size(); ++i) {
    groups[ds.labeled[i].label].push_back(i);
  }
  for (auto& [label, group] : groups) rng.shuffle(group);

  // cycle the label groups so the holdout stays stratified
  std::vector<bool> held(ds.labeled.size(), false);
  std::size_t taken = 0;
  while (taken < holdout_count) {
    bool any = false;
    for (auto& [label, group] : groups) {
      if (taken == holdout_count) break;
      if (group.empty()) continue;
      held[group.back()] = true;
      group.pop_back();
      ++taken;
      any = true;
    }
    if (!any) break;
  }

  DomainDataset rest, hold;
  rest.name = ds.name;
  hold.name = ds.name;
  rest.feature_dim = hold.feature_dim = ds.feature_dim;
  for (std::size_t i = 0; i < ds.labeled.size(); ++i) {
    (held[i] ? hold : rest).labeled.push_back(ds.labeled[i]);
  }
  rest.unlabeled = ds.unlabeled;
  return {std::move(rest), std::move(hold)};
}

std::vector<double> densify(const SparseVec& v, std::size_t feature_dim,
                            bool log_counts) {
  std::vector<double> out(feature_dim, 0.0);
  for (std::size_t i = 0; i < v.indices.size(); ++i) {
    if (v.indices[i] >= feature_dim) {
      throw IndexError("densify: index " + std::to_string(v.indices[i]) +
                       " outside feature space of " + std::to_string(feature_dim));
    }
    out[v.indices[i]] = log_counts ? std::log1p(v.values[i]) : v.values[i];
  }
  return out;
}

}  // namespace mbf
