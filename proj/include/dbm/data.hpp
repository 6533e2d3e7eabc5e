#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dbm/numerics.hpp"

namespace dbm {

struct LabeledDataset {
  Matrix features;  // N x D_in, one sample per row
  std::vector<int> labels;
  std::vector<long> class_counts;
  std::string provenance;

  int num_classes() const noexcept { return static_cast<int>(class_counts.size()); }
  Eigen::Index size() const noexcept { return features.rows(); }
  Eigen::Index input_dim() const noexcept { return features.cols(); }

  /// Labels in range, counts consistent with labels, N = sum of counts.
  void validate() const;
};

/// Counts per class recomputed from `labels`.
std::vector<long> count_labels(const std::vector<int>& labels, int num_classes);

struct GenConfig {
  int classes = 10;
  int input_dim = 32;
  long n_max = 500;
  double imbalance = 100.0;
  double intra_std = 0.3;
  double center_norm = 1.0;
  long test_per_class = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

/// n_i = round(n_max * rho^(-i / (C - 1))), half away from zero, floored at 1.
std::vector<long> exponential_counts(long n_max, int classes, double rho);

struct DatasetSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// Gaussian blobs around seeded random centers: long-tailed train split,
/// balanced test split. Deterministic per cfg.seed.
DatasetSplit generate(const GenConfig& cfg);

/// Centers only; pairwise cosine < 0.95, or CenterSamplingFailed.
Matrix sample_class_centers(int classes, int input_dim, double center_norm, std::uint64_t seed);

enum class DatasetFormat { Binary, Csv };

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path,
                  DatasetFormat format = DatasetFormat::Binary);

/// Reads either format (detected from the magic). Throws ParseError with a
/// line or byte offset, CountMismatch when header counts disagree with labels.
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace dbm
