#include "dbm/model.hpp"

#include <random>
#include <string>

#include "dbm/error.hpp"

namespace dbm {

const char* to_string(HeadKind kind) noexcept { return kind == HeadKind::Cosine ? "cosine" : "linear"; }

HeadKind parse_head_kind(std::string_view text) {
  if (text == "cosine") return HeadKind::Cosine;
  if (text == "linear") return HeadKind::Linear;
  throw Error(ErrorKind::InvalidConfig, "unknown head kind '" + std::string(text) + "'");
}

void ModelDims::validate() const {
  if (input <= 0) throw Error(ErrorKind::InvalidDims, "input width must be positive");
  if (classes <= 0) throw Error(ErrorKind::InvalidDims, "class count must be positive");
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i] <= 0) throw Error(ErrorKind::InvalidDims, "hidden layer " + std::to_string(i) + " has width 0");
  }
}

void ModelParams::validate() const {
  dims.validate();
  if (layers.size() != dims.hidden.size()) throw Error(ErrorKind::ShapeMismatch, "layer count differs from dims");
  int fan_in = dims.input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weights.rows() != dims.hidden[i] || l.weights.cols() != fan_in || l.biases.size() != dims.hidden[i]) {
      throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(i) + " shape does not compose");
    }
    fan_in = dims.hidden[i];
  }
  if (head_weights.rows() != dims.classes || head_weights.cols() != dims.feature_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "head shape does not match feature dim and classes");
  }
  const Eigen::Index bias_len = dims.head == HeadKind::Linear ? dims.classes : 0;
  if (head_biases.size() != bias_len) throw Error(ErrorKind::ShapeMismatch, "head bias length wrong for head kind");
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.dims = dims;
  for (const auto& l : layers) {
    z.layers.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()), Vector::Zero(l.biases.size())});
  }
  z.head_weights = Matrix::Zero(head_weights.rows(), head_weights.cols());
  z.head_biases = Vector::Zero(head_biases.size());
  return z;
}

Eigen::Index ModelParams::parameter_count() const {
  Eigen::Index n = head_weights.size() + head_biases.size();
  for (const auto& l : layers) n += l.weights.size() + l.biases.size();
  return n;
}

Vector ModelParams::flatten() const {
  Vector flat(parameter_count());
  Eigen::Index at = 0;
  auto put = [&](const auto& block) {
    flat.segment(at, block.size()) = block.reshaped();
    at += block.size();
  };
  for (const auto& l : layers) {
    put(l.weights);
    put(l.biases);
  }
  put(head_weights);
  put(head_biases);
  return flat;
}

void ModelParams::assign(const VectorRef& flat) {
  if (flat.size() != parameter_count()) throw Error(ErrorKind::ShapeMismatch, "flat parameter length mismatch");
  Eigen::Index at = 0;
  auto take = [&](auto& block) {
    block.reshaped() = flat.segment(at, block.size());
    at += block.size();
  };
  for (auto& l : layers) {
    take(l.weights);
    take(l.biases);
  }
  take(head_weights);
  take(head_biases);
}

ModelParams init_model(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols, double stddev) {
    Matrix m(rows, cols);
    // Explicit loop keeps the draw order independent of Eigen's evaluation order.
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * normal(rng);
    return m;
  };

  ModelParams model;
  model.dims = dims;
  int fan_in = dims.input;
  for (int width : dims.hidden) {
    model.layers.push_back({gaussian(width, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in))),
                            Vector::Zero(width)});
    fan_in = width;
  }
  model.head_weights = normalize_rows(gaussian(dims.classes, fan_in, 1.0));
  if (dims.head == HeadKind::Linear) model.head_biases = Vector::Zero(dims.classes);
  return model;
}

ForwardResult forward(const ModelParams& model, const MatrixRef& batch) {
  if (batch.cols() != model.dims.input) {
    throw Error(ErrorKind::ShapeMismatch, "batch width " + std::to_string(batch.cols()) + " != input width " +
                                              std::to_string(model.dims.input));
  }
  ForwardResult out;
  out.cache.input = batch;
  const Matrix* prev = &out.cache.input;
  out.cache.activations.reserve(model.layers.size());
  for (const auto& layer : model.layers) {
    Matrix pre = (*prev) * layer.weights.transpose();
    pre.rowwise() += layer.biases.transpose();
    out.cache.activations.push_back(pre.array().tanh().matrix());
    prev = &out.cache.activations.back();
  }
  out.features = *prev;

  if (model.dims.head == HeadKind::Cosine) {
    out.cache.unit_features = normalize_rows(out.features, &out.cache.feature_norms);
    out.cache.unit_head = normalize_rows(model.head_weights, &out.cache.head_norms);
    out.scores = out.cache.unit_features * out.cache.unit_head.transpose();
  } else {
    out.scores = out.features * model.head_weights.transpose();
    out.scores.rowwise() += model.head_biases.transpose();
  }
  return out;
}

ModelParams backward(const ModelParams& model, const ForwardCache& cache, const MatrixRef& score_grads) {
  const Eigen::Index n = cache.input.rows();
  const bool cosine = model.dims.head == HeadKind::Cosine;
  if (cache.input.cols() != model.dims.input || cache.activations.size() != model.layers.size() ||
      score_grads.rows() != n || score_grads.cols() != model.dims.classes ||
      (cosine && (cache.unit_features.rows() != n || cache.unit_head.rows() != model.dims.classes))) {
    throw Error(ErrorKind::StaleCache, "cache or gradient shapes do not match this model");
  }
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (cache.activations[i].rows() != n || cache.activations[i].cols() != model.dims.hidden[i]) {
      throw Error(ErrorKind::StaleCache, "cached activation " + std::to_string(i) + " has the wrong shape");
    }
  }

  ModelParams grads = model.zeros_like();
  const Matrix& features = cache.activations.empty() ? cache.input : cache.activations.back();
  Matrix feature_grads;

  if (cosine) {
    // Project out the radial component: d(v/|v|) = (I - u u^T) / |v|.
    Matrix d_unit_f = score_grads * cache.unit_head;                 // N x D
    Matrix d_unit_w = score_grads.transpose() * cache.unit_features;  // C x D
    feature_grads.resize(n, features.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto u = cache.unit_features.row(r);
      feature_grads.row(r) = (d_unit_f.row(r) - d_unit_f.row(r).dot(u) * u) / cache.feature_norms(r);
    }
    for (Eigen::Index c = 0; c < model.dims.classes; ++c) {
      const auto u = cache.unit_head.row(c);
      grads.head_weights.row(c) = (d_unit_w.row(c) - d_unit_w.row(c).dot(u) * u) / cache.head_norms(c);
    }
  } else {
    grads.head_weights = score_grads.transpose() * features;
    grads.head_biases = score_grads.colwise().sum().transpose();
    feature_grads = score_grads * model.head_weights;
  }

  Matrix upstream = std::move(feature_grads);
  for (std::size_t k = model.layers.size(); k-- > 0;) {
    const Matrix& act = cache.activations[k];
    const Matrix& below = k == 0 ? cache.input : cache.activations[k - 1];
    const Matrix d_pre = (upstream.array() * (1.0 - act.array().square())).matrix();
    grads.layers[k].weights = d_pre.transpose() * below;
    grads.layers[k].biases = d_pre.colwise().sum().transpose();
    if (k > 0) upstream = d_pre * model.layers[k].weights;
  }
  return grads;
}

std::vector<int> predict(const MatrixRef& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(r, c) > scores(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace dbm
