#include "dbm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "dbm/error.hpp"

namespace dbm {

void TrainConfig::validate() const {
  if (epochs < 0) throw Error(ErrorKind::InvalidConfig, "epochs must be >= 0");
  if (batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (!(lr0 > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::InvalidConfig, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw Error(ErrorKind::InvalidConfig, "weight_decay must be >= 0");
  if (warmup_epochs < 0 || (epochs > 0 && warmup_epochs >= epochs)) {
    throw Error(ErrorKind::InvalidConfig, "warmup_epochs must be < epochs");
  }
  if (drw_epoch && (*drw_epoch < 0 || *drw_epoch >= epochs)) {
    throw Error(ErrorKind::InvalidConfig, "drw_epoch must lie in [0, epochs)");
  }
  loss.validate();
}

double lr_at(const TrainConfig& cfg, int epoch) {
  if (epoch < cfg.warmup_epochs) {
    return cfg.lr0 * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
  }
  const double t = static_cast<double>(epoch - cfg.warmup_epochs) / static_cast<double>(cfg.epochs - cfg.warmup_epochs);
  return cfg.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

LossSpec effective_loss(const TrainConfig& cfg, int epoch, HeadKind head) {
  LossSpec spec = cfg.loss;
  if (cfg.drw_epoch && epoch >= *cfg.drw_epoch && spec.base == BaseLoss::CE) spec.base = BaseLoss::CB;
  if (head == HeadKind::Linear) spec.margin.scale = 1.0;
  return spec;
}

BatchLoss batch_loss(const LossSpec& spec, const MatrixRef& scores, const std::vector<int>& labels,
                     const ClassPrior& prior) {
  if (static_cast<Eigen::Index>(labels.size()) != scores.rows()) {
    throw Error(ErrorKind::LengthMismatch, "labels and score rows differ");
  }
  BatchLoss out;
  out.score_grads.resize(scores.rows(), scores.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const LossResult res = evaluate_loss(spec, scores.row(r).transpose(), labels[static_cast<std::size_t>(r)], prior);
    total += res.loss;
    out.weight_sum += res.weight;
    out.hard_positives += res.hard_positive ? 1 : 0;
    out.score_grads.row(r) = res.grad_cos.transpose();
  }
  if (out.weight_sum > 0.0) {
    out.loss = total / out.weight_sum;
    out.score_grads /= out.weight_sum;
  }
  return out;
}

void sgd_momentum_step(Vector& params, Vector& velocity, const VectorRef& grad, double lr, double momentum,
                       double weight_decay) {
  velocity = momentum * velocity - lr * (grad + weight_decay * params);
  params += velocity;
}

double accuracy(const ModelParams& model, const LabeledDataset& data) {
  if (data.size() == 0) return 0.0;
  const std::vector<int> pred = predict(forward(model, data.features).scores);
  long correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

TrainResult train(ModelParams model, const LabeledDataset& data, const TrainConfig& cfg,
                  const LabeledDataset* heldout) {
  cfg.validate();
  model.validate();
  data.validate();
  if (data.input_dim() != model.dims.input || data.num_classes() != model.dims.classes) {
    throw Error(ErrorKind::ShapeMismatch, "dataset and model dimensions disagree");
  }
  if (model.dims.head == HeadKind::Linear && cfg.loss.positive != PositiveMargin::None) {
    throw Error(ErrorKind::InvalidConfig, "margin losses need a cosine head");
  }

  TrainResult result;
  if (cfg.epochs == 0) {
    result.model = std::move(model);
    return result;
  }
  const ClassPrior prior(data.class_counts);

  std::mt19937_64 rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  Vector params = model.flatten();
  Vector velocity = Vector::Zero(params.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(cfg, epoch);
    const LossSpec spec = effective_loss(cfg, epoch, model.dims.head);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    long hard = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Matrix batch(static_cast<Eigen::Index>(stop - start), data.input_dim());
      std::vector<int> labels(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        batch.row(static_cast<Eigen::Index>(k - start)) = data.features.row(order[k]);
        labels[k - start] = data.labels[static_cast<std::size_t>(order[k])];
      }

      const ForwardResult fwd = forward(model, batch);
      const BatchLoss bl = batch_loss(spec, fwd.scores, labels, prior);
      if (!std::isfinite(bl.loss) || !bl.score_grads.allFinite()) throw NonFiniteLossError(epoch, batch_index);

      const Vector grad = backward(model, fwd.cache, bl.score_grads).flatten();
      sgd_momentum_step(params, velocity, grad, lr, cfg.momentum, cfg.weight_decay);
      model.assign(params);

      loss_sum += bl.loss * static_cast<double>(labels.size());
      hard += bl.hard_positives;
    }
    if (!params.allFinite()) throw NonFiniteLossError(epoch, batch_index - 1);

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(data.size());
    entry.lr = lr;
    entry.hard_positive_fraction = static_cast<double>(hard) / static_cast<double>(data.size());
    if (heldout != nullptr) entry.heldout_accuracy = accuracy(model, *heldout);
    result.log.push_back(entry);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace dbm
