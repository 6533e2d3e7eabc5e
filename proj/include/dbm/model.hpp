#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "dbm/numerics.hpp"

namespace dbm {

enum class HeadKind { Linear, Cosine };

const char* to_string(HeadKind kind) noexcept;
HeadKind parse_head_kind(std::string_view text);

struct ModelDims {
  int input = 0;
  std::vector<int> hidden;  // tanh layers; the last one's output is the feature f(x)
  int classes = 0;
  HeadKind head = HeadKind::Cosine;

  int feature_dim() const noexcept { return hidden.empty() ? input : hidden.back(); }
  /// Throws InvalidDims on any zero-width layer.
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

struct DenseLayer {
  Matrix weights;  // out x in
  Vector biases;   // out
};

/// Trainable state. The same type carries gradients.
struct ModelParams {
  ModelDims dims;
  std::vector<DenseLayer> layers;
  Matrix head_weights;  // C x D
  Vector head_biases;   // C; empty for a cosine head

  /// Shapes compose with `dims`; throws ShapeMismatch otherwise.
  void validate() const;

  /// Zero-valued parameters with this model's shapes.
  ModelParams zeros_like() const;

  Eigen::Index parameter_count() const;
  /// Fixed order: layers (weights then biases), head weights, head biases.
  Vector flatten() const;
  void assign(const VectorRef& flat);
};

/// Hidden weights ~ N(0, 1/fan_in), biases 0, head rows unit-normalized.
/// Bitwise deterministic for a given (dims, seed).
ModelParams init_model(const ModelDims& dims, std::uint64_t seed);

/// Intermediates retained for backward.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> activations;  // output of each hidden layer
  Matrix unit_features;             // cosine head only
  Vector feature_norms;
  Matrix unit_head;
  Vector head_norms;
};

struct ForwardResult {
  Matrix features;  // N x D
  Matrix scores;    // N x C: raw cos theta (cosine head) or W f + b (linear head)
  ForwardCache cache;
};

ForwardResult forward(const ModelParams& model, const MatrixRef& batch);

/// Parameter gradients given dLoss/dscores (N x C). Throws StaleCache if
/// `cache` does not belong to a forward pass of this model's shapes.
ModelParams backward(const ModelParams& model, const ForwardCache& cache, const MatrixRef& score_grads);

/// argmax of scores per row (lowest index on ties).
std::vector<int> predict(const MatrixRef& scores);

}  // namespace dbm
