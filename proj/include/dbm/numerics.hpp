#pragma once

// Numerically safe primitives shared by the losses and the model:
// normalization, log-sum-exp, clamped acos and cosine-similarity logits.
// Everything here is a pure function of its inputs.

#include <Eigen/Dense>

namespace dbm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;
using MatrixRef = Eigen::Ref<const Eigen::MatrixXd>;

/// Norms below this are treated as the zero vector.
inline constexpr double kMinNorm = 1e-30;
/// acos inputs are clamped to [-1 + eps, 1 - eps].
inline constexpr double kAcosClamp = 1e-7;

/// Unit vector in the direction of v. Throws ZeroVector if ||v|| < kMinNorm.
Vector l2_normalize(const VectorRef& v);

/// Row-wise l2_normalize; `norms` (optional) receives the original row norms.
/// Non-finite rows pass through as NaN so the caller's loss check sees them.
Matrix normalize_rows(const MatrixRef& m, Vector* norms = nullptr);

/// Class-center directions plus the logit scale s.
struct CosineHead {
  Matrix weights;  // C x D
  double scale = 1.0;

  /// Throws InvalidConfig on s <= 0 and ZeroVector on a zero row.
  void validate() const;
};

struct LinearHead {
  Matrix weights;  // C x D
  Vector biases;   // C

  void validate() const;
};

/// cos(theta_i) between f and every row of `weights`, both sides normalized.
Vector cosine_similarities(const VectorRef& f, const MatrixRef& weights);

/// s * cos(theta_i) for every class.
Vector cosine_logits(const VectorRef& f, const CosineHead& head);

/// W f + b.
Vector linear_logits(const VectorRef& f, const LinearHead& head);

double log_sum_exp(const VectorRef& z);
Vector softmax(const VectorRef& z);

/// -log softmax(z)[y]. Throws IndexOutOfRange when y is not a class of z.
double softmax_cross_entropy(const VectorRef& z, int y);

/// softmax(z) - onehot(y).
Vector softmax_cross_entropy_grad(const VectorRef& z, int y);

/// acos(clamp(c, -1 + kAcosClamp, 1 - kAcosClamp)).
double safe_acos(double c) noexcept;

/// d/dc of safe_acos; zero where the clamp is active.
double safe_acos_derivative(double c) noexcept;

void check_class_index(int y, Eigen::Index num_classes);

}  // namespace dbm
