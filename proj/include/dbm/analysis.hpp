#pragma once

// Evaluation instruments: shot-group accuracy, angular distance of features
// to their own class center, and pairwise Fisher-criterion separability.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dbm/numerics.hpp"

namespace dbm {

enum class ShotGroup { Many = 0, Medium = 1, Few = 2 };

const char* to_string(ShotGroup g) noexcept;

/// Many: count > many_min. Few: count < few_max. Medium otherwise.
struct GroupThresholds {
  long many_min = 100;
  long few_max = 20;

  void validate() const;
  ShotGroup group_of(long train_count) const noexcept;

  /// Thresholds that split the sorted counts into three near-equal buckets.
  static GroupThresholds terciles(const std::vector<long>& train_counts);
};

/// Accuracy per shot group; std::nullopt marks an empty group.
struct GroupAccuracy {
  std::optional<double> many, medium, few, all;
  std::array<long, 3> group_samples{};  // test samples per group
  std::vector<std::optional<double>> per_class;
};

GroupAccuracy group_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                             const std::vector<long>& train_counts, const GroupThresholds& thresholds);

struct DistributionSummary {
  double mean = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  long count = 0;
};

/// Quantile by linear interpolation between order statistics (position q * (n - 1)).
double quantile(std::vector<double> values, double q);
DistributionSummary summarize(const std::vector<double>& values);

/// theta_y in degrees, grouped by the train count of the label.
struct AngularStats {
  std::optional<DistributionSummary> many, medium, few, all;
  std::vector<std::optional<double>> per_class_mean;
};

/// Angle in degrees between each feature and its own class row of `head_weights`.
std::vector<double> positive_angles_deg(const MatrixRef& features, const std::vector<int>& labels,
                                        const MatrixRef& head_weights);

AngularStats angular_stats(const MatrixRef& features, const std::vector<int>& labels, const MatrixRef& head_weights,
                           const std::vector<long>& train_counts, const GroupThresholds& thresholds);

/// 1e-4 * trace(S_w) / D
double default_ridge(const MatrixRef& within_scatter);

/// (S_w + lambda I)^-1 (mu_i - mu_j), S_w = Sigma_i + Sigma_j (population
/// covariances). Uses default_ridge when lambda is empty. Rows are samples.
Vector lda_direction(const MatrixRef& class_i, const MatrixRef& class_j, std::optional<double> lambda = std::nullopt);

/// (mu_i - mu_j)^2 / (var_i + var_j) with population variances. Returns
/// +infinity when the variances vanish but the means differ.
double fisher_J(const std::vector<double>& proj_i, const std::vector<double>& proj_j);

struct SeparabilityReport {
  std::vector<double> per_class;
  std::optional<double> many, medium, few, all;
};

SeparabilityReport class_separability(const MatrixRef& features, const std::vector<int>& labels, int num_classes,
                                      const std::vector<long>& train_counts, const GroupThresholds& thresholds,
                                      std::optional<double> lambda = std::nullopt);

}  // namespace dbm
