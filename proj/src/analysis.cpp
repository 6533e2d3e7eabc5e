#include "dbm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "dbm/error.hpp"

namespace dbm {

const char* to_string(ShotGroup g) noexcept {
  switch (g) {
    case ShotGroup::Many: return "many";
    case ShotGroup::Medium: return "medium";
    case ShotGroup::Few: return "few";
  }
  return "many";
}

void GroupThresholds::validate() const {
  if (few_max > many_min) {
    throw Error(ErrorKind::InvalidConfig, "few_max (" + std::to_string(few_max) + ") must not exceed many_min (" +
                                              std::to_string(many_min) + ")");
  }
}

ShotGroup GroupThresholds::group_of(long train_count) const noexcept {
  if (train_count > many_min) return ShotGroup::Many;
  if (train_count < few_max) return ShotGroup::Few;
  return ShotGroup::Medium;
}

GroupThresholds GroupThresholds::terciles(const std::vector<long>& train_counts) {
  if (train_counts.size() < 3) return {};
  std::vector<long> sorted = train_counts;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto C = static_cast<double>(sorted.size());
  const auto k1 = static_cast<std::size_t>(std::lround(C / 3.0));
  const auto k2 = static_cast<std::size_t>(std::lround(2.0 * C / 3.0));
  return {sorted[k1], sorted[k2 - 1]};
}

namespace {

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

void check_labels(const std::vector<int>& labels, std::size_t num_classes) {
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error(ErrorKind::IndexOutOfRange, "label " + std::to_string(y) + " has no train count");
    }
  }
}

}  // namespace

GroupAccuracy group_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                             const std::vector<long>& train_counts, const GroupThresholds& thresholds) {
  thresholds.validate();
  if (predictions.size() != labels.size()) throw Error(ErrorKind::LengthMismatch, "predictions and labels differ in length");
  check_labels(labels, train_counts.size());

  std::vector<long> correct(train_counts.size(), 0), total(train_counts.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    ++total[y];
    correct[y] += predictions[i] == labels[i] ? 1 : 0;
  }

  std::array<long, 3> group_correct{}, group_total{};
  GroupAccuracy out;
  for (std::size_t c = 0; c < train_counts.size(); ++c) {
    const auto g = static_cast<std::size_t>(thresholds.group_of(train_counts[c]));
    group_correct[g] += correct[c];
    group_total[g] += total[c];
    out.per_class.push_back(ratio(correct[c], total[c]));
  }
  out.group_samples = group_total;
  out.many = ratio(group_correct[0], group_total[0]);
  out.medium = ratio(group_correct[1], group_total[1]);
  out.few = ratio(group_correct[2], group_total[2]);
  out.all = ratio(group_correct[0] + group_correct[1] + group_correct[2], group_total[0] + group_total[1] + group_total[2]);
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::LengthMismatch, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

DistributionSummary summarize(const std::vector<double>& values) {
  DistributionSummary s;
  s.count = static_cast<long>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  return s;
}

std::vector<double> positive_angles_deg(const MatrixRef& features, const std::vector<int>& labels,
                                        const MatrixRef& head_weights) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw Error(ErrorKind::LengthMismatch, "features and labels differ in length");
  }
  if (features.cols() != head_weights.cols()) throw Error(ErrorKind::ShapeMismatch, "feature dim != head columns");
  check_labels(labels, static_cast<std::size_t>(head_weights.rows()));
  const Matrix unit_head = normalize_rows(head_weights);
  const Matrix unit_features = normalize_rows(features);
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double c = unit_features.row(static_cast<Eigen::Index>(i)).dot(unit_head.row(labels[i]));
    out[i] = safe_acos(c) * 180.0 / std::numbers::pi;
  }
  return out;
}

AngularStats angular_stats(const MatrixRef& features, const std::vector<int>& labels, const MatrixRef& head_weights,
                           const std::vector<long>& train_counts, const GroupThresholds& thresholds) {
  thresholds.validate();
  if (static_cast<Eigen::Index>(train_counts.size()) != head_weights.rows()) {
    throw Error(ErrorKind::LengthMismatch, "train counts and head rows differ");
  }
  const std::vector<double> angles = positive_angles_deg(features, labels, head_weights);
  std::array<std::vector<double>, 3> by_group;
  std::vector<std::vector<double>> by_class(train_counts.size());
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    by_group[static_cast<std::size_t>(thresholds.group_of(train_counts[y]))].push_back(angles[i]);
    by_class[y].push_back(angles[i]);
  }
  auto maybe = [](const std::vector<double>& v) -> std::optional<DistributionSummary> {
    if (v.empty()) return std::nullopt;
    return summarize(v);
  };
  AngularStats out;
  out.many = maybe(by_group[0]);
  out.medium = maybe(by_group[1]);
  out.few = maybe(by_group[2]);
  out.all = maybe(angles);
  for (const auto& v : by_class) {
    out.per_class_mean.push_back(v.empty() ? std::nullopt
                                           : std::optional(std::accumulate(v.begin(), v.end(), 0.0) / v.size()));
  }
  return out;
}

double default_ridge(const MatrixRef& within_scatter) {
  return 1e-4 * within_scatter.trace() / static_cast<double>(within_scatter.rows());
}

namespace {

Matrix population_covariance(const MatrixRef& x, const Vector& mean) {
  const Matrix centered = x.rowwise() - mean.transpose();
  return centered.transpose() * centered / static_cast<double>(x.rows());
}

}  // namespace

Vector lda_direction(const MatrixRef& class_i, const MatrixRef& class_j, std::optional<double> lambda) {
  if (class_i.rows() < 2 || class_j.rows() < 2) {
    throw Error(ErrorKind::InvalidConfig, "each class needs at least two samples");
  }
  if (class_i.cols() != class_j.cols()) throw Error(ErrorKind::ShapeMismatch, "class feature widths differ");
  if (lambda && !(*lambda >= 0.0)) throw Error(ErrorKind::InvalidConfig, "lambda must be >= 0");

  const Vector mean_i = class_i.colwise().mean().transpose();
  const Vector mean_j = class_j.colwise().mean().transpose();
  Matrix scatter = population_covariance(class_i, mean_i) + population_covariance(class_j, mean_j);
  const double ridge = lambda ? *lambda : default_ridge(scatter);
  scatter.diagonal().array() += ridge;

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(scatter, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw Error(ErrorKind::SingularScatter, "regularized within-class scatter has condition estimate " +
                                                std::to_string(lo > 0.0 ? hi / lo : INFINITY));
  }
  return scatter.ldlt().solve(mean_i - mean_j);
}

double fisher_J(const std::vector<double>& proj_i, const std::vector<double>& proj_j) {
  if (proj_i.size() < 2 || proj_j.size() < 2) {
    throw Error(ErrorKind::InvalidConfig, "each projection needs at least two values");
  }
  auto moments = [](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair{mean, var / n};
  };
  const auto [mean_i, var_i] = moments(proj_i);
  const auto [mean_j, var_j] = moments(proj_j);
  const double gap = (mean_i - mean_j) * (mean_i - mean_j);
  if (gap == 0.0) return 0.0;
  if (var_i + var_j < 1e-30) return std::numeric_limits<double>::infinity();
  return gap / (var_i + var_j);
}

SeparabilityReport class_separability(const MatrixRef& features, const std::vector<int>& labels, int num_classes,
                                      const std::vector<long>& train_counts, const GroupThresholds& thresholds,
                                      std::optional<double> lambda) {
  thresholds.validate();
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw Error(ErrorKind::LengthMismatch, "features and labels differ in length");
  }
  if (num_classes < 2) throw Error(ErrorKind::InvalidConfig, "separability needs at least two classes");
  if (static_cast<int>(train_counts.size()) != num_classes) {
    throw Error(ErrorKind::LengthMismatch, "train counts length != class count");
  }
  check_labels(labels, static_cast<std::size_t>(num_classes));

  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  std::vector<Matrix> per_class;
  for (const auto& rows : members) per_class.push_back(features(rows, Eigen::all));

  SeparabilityReport out;
  out.per_class.assign(static_cast<std::size_t>(num_classes), 0.0);
  for (int i = 0; i < num_classes; ++i) {
    for (int j = i + 1; j < num_classes; ++j) {
      const Matrix& xi = per_class[static_cast<std::size_t>(i)];
      const Matrix& xj = per_class[static_cast<std::size_t>(j)];
      const Vector w = lda_direction(xi, xj, lambda);
      const Vector pi = xi * w;
      const Vector pj = xj * w;
      // J is sign-invariant, so W_ji = -W_ij gives the same value.
      const double J = fisher_J(std::vector<double>(pi.begin(), pi.end()), std::vector<double>(pj.begin(), pj.end()));
      out.per_class[static_cast<std::size_t>(i)] += J;
      out.per_class[static_cast<std::size_t>(j)] += J;
    }
  }
  std::array<double, 3> sums{};
  std::array<long, 3> sizes{};
  for (int c = 0; c < num_classes; ++c) {
    auto& s = out.per_class[static_cast<std::size_t>(c)];
    s /= static_cast<double>(num_classes - 1);
    const auto g = static_cast<std::size_t>(thresholds.group_of(train_counts[static_cast<std::size_t>(c)]));
    sums[g] += s;
    ++sizes[g];
  }
  auto mean_of = [&](std::size_t g) -> std::optional<double> {
    if (sizes[g] == 0) return std::nullopt;
    return sums[g] / static_cast<double>(sizes[g]);
  };
  out.many = mean_of(0);
  out.medium = mean_of(1);
  out.few = mean_of(2);
  out.all = std::accumulate(out.per_class.begin(), out.per_class.end(), 0.0) / num_classes;
  return out;
}

}  // namespace dbm
