#include "dbm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dbm/error.hpp"

namespace dbm {

Vector l2_normalize(const VectorRef& v) {
  const double norm = v.norm();
  if (!(norm >= kMinNorm)) {
    throw Error(ErrorKind::ZeroVector, "cannot normalize a vector of norm " + std::to_string(norm));
  }
  return v / norm;
}

Matrix normalize_rows(const MatrixRef& m, Vector* norms) {
  Matrix out(m.rows(), m.cols());
  if (norms != nullptr) norms->resize(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (norm < kMinNorm) {
      throw Error(ErrorKind::ZeroVector, "row " + std::to_string(r) + " has zero norm");
    }
    out.row(r) = m.row(r) / norm;
    if (norms != nullptr) (*norms)(r) = norm;
  }
  return out;
}

void CosineHead::validate() const {
  if (!(scale > 0.0)) throw Error(ErrorKind::InvalidConfig, "cosine head scale must be positive");
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    if (!(weights.row(r).norm() >= kMinNorm)) {
      throw Error(ErrorKind::ZeroVector, "cosine head row " + std::to_string(r) + " is zero");
    }
  }
}

void LinearHead::validate() const {
  if (biases.size() != weights.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "linear head has " + std::to_string(weights.rows()) +
                                              " rows but " + std::to_string(biases.size()) + " biases");
  }
}

Vector cosine_similarities(const VectorRef& f, const MatrixRef& weights) {
  if (f.size() != weights.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "feature dimension does not match head columns");
  }
  const Vector unit = l2_normalize(f);
  return normalize_rows(weights) * unit;
}

Vector cosine_logits(const VectorRef& f, const CosineHead& head) {
  head.validate();
  return head.scale * cosine_similarities(f, head.weights);
}

Vector linear_logits(const VectorRef& f, const LinearHead& head) {
  head.validate();
  if (f.size() != head.weights.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "feature dimension does not match head columns");
  }
  return head.weights * f + head.biases;
}

double log_sum_exp(const VectorRef& z) {
  const double top = z.maxCoeff();
  return top + std::log((z.array() - top).exp().sum());
}

Vector softmax(const VectorRef& z) {
  Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

void check_class_index(int y, Eigen::Index num_classes) {
  if (y < 0 || y >= num_classes) {
    throw Error(ErrorKind::IndexOutOfRange,
                "class " + std::to_string(y) + " not in [0, " + std::to_string(num_classes) + ")");
  }
}

double softmax_cross_entropy(const VectorRef& z, int y) {
  check_class_index(y, z.size());
  // Rounding can leave lse - z_y a hair below zero.
  return std::max(0.0, log_sum_exp(z) - z(y));
}

Vector softmax_cross_entropy_grad(const VectorRef& z, int y) {
  check_class_index(y, z.size());
  Vector g = softmax(z);
  g(y) -= 1.0;
  return g;
}

double safe_acos(double c) noexcept {
  return std::acos(std::clamp(c, -1.0 + kAcosClamp, 1.0 - kAcosClamp));
}

double safe_acos_derivative(double c) noexcept {
  if (c <= -1.0 + kAcosClamp || c >= 1.0 - kAcosClamp) return 0.0;
  return -1.0 / std::sqrt(1.0 - c * c);
}

}  // namespace dbm
