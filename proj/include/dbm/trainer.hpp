#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dbm/data.hpp"
#include "dbm/losses.hpp"
#include "dbm/model.hpp"

namespace dbm {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  int warmup_epochs = 5;
  /// First epoch that uses class-balanced weights (deferred re-weighting).
  std::optional<int> drw_epoch;
  LossSpec loss;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double hard_positive_fraction = 0.0;
  std::optional<double> heldout_accuracy;
};

struct TrainResult {
  ModelParams model;
  std::vector<EpochLog> log;
};

/// Linear warmup lr0 * (e + 1) / warmup, then cosine annealing to zero.
double lr_at(const TrainConfig& cfg, int epoch);

/// The loss actually used at `epoch`: CE becomes CB from drw_epoch on, and a
/// linear head always sees scale 1.
LossSpec effective_loss(const TrainConfig& cfg, int epoch, HeadKind head);

struct BatchLoss {
  double loss = 0.0;         // sum of weighted losses / sum of weights
  Matrix score_grads;        // d loss / d scores, already reduced
  int hard_positives = 0;
  double weight_sum = 0.0;
};

BatchLoss batch_loss(const LossSpec& spec, const MatrixRef& scores, const std::vector<int>& labels,
                     const ClassPrior& prior);

/// v <- mu v - lr (g + wd theta);  theta <- theta + v
void sgd_momentum_step(Vector& params, Vector& velocity, const VectorRef& grad, double lr, double momentum,
                       double weight_decay);

/// Mini-batch SGD with momentum. Throws NonFiniteLossError on a NaN/inf batch.
TrainResult train(ModelParams model, const LabeledDataset& data, const TrainConfig& cfg,
                  const LabeledDataset* heldout = nullptr);

double accuracy(const ModelParams& model, const LabeledDataset& data);

}  // namespace dbm
