#pragma once

// Loss family for long-tailed classification on cosine logits: softmax CE,
// class-balanced CE, balanced softmax, the classic positive-logit margins
// (SphereFace / CosFace / ArcFace / LDAM) and the difficulty-aware balancing
// margin, which adds a class-wise angular margin K * rho_y^-tau plus an
// instance-wise margin m_C * (1 - cos theta_y) / 2 on hard positives.
//
// Every loss returns its gradient with respect to the raw cosine vector
// (or raw scores, for a linear head evaluated with scale 1).

#include <string>
#include <string_view>
#include <vector>

#include "dbm/numerics.hpp"

namespace dbm {

/// Per-class sample counts and the quantities derived from them.
class ClassPrior {
 public:
  /// Throws InvalidConfig if `counts` is empty or holds a count < 1.
  explicit ClassPrior(std::vector<long> counts);

  int num_classes() const noexcept { return static_cast<int>(counts_.size()); }
  const std::vector<long>& counts() const noexcept { return counts_; }
  long count(int c) const { return counts_.at(static_cast<std::size_t>(c)); }
  long min_count() const noexcept { return min_count_; }

  /// p_i = n_i / sum_j n_j
  const Vector& proportions() const noexcept { return proportions_; }
  const Vector& log_proportions() const noexcept { return log_proportions_; }
  /// rho_i = n_i / n_min
  const Vector& ratios() const noexcept { return ratios_; }

 private:
  std::vector<long> counts_;
  long min_count_ = 1;
  Vector proportions_;
  Vector log_proportions_;
  Vector ratios_;
};

/// Which positives receive the instance-wise margin. The class-wise margin
/// is applied in every mode; set K = 0 to disable margins entirely.
enum class MarginApplication { None, AllPositives, HardPositivesOnly };

/// Detached treats m_C and m_I as constants when differentiating; Through
/// also differentiates m_I = m_C * (1 - cos theta_y) / 2.
enum class MarginGradient { Detached, Through };

struct MarginConfig {
  double K = 0.1;
  double tau = 1.0;
  double scale = 32.0;
  MarginApplication application = MarginApplication::HardPositivesOnly;
  MarginGradient gradient = MarginGradient::Detached;

  void validate() const;
};

enum class BaselineMargin { SphereFace, CosFace, ArcFace, LDAM };

struct BaselineMarginSpec {
  BaselineMargin kind = BaselineMargin::ArcFace;
  double m = 0.5;

  void validate() const;
};

/// Unscaled positive-class logit psi_y together with d psi / d cos theta_y.
struct PositiveLogit {
  double psi = 0.0;
  double dpsi_dcos = 1.0;
  bool hard_positive = false;
  /// theta_y + margin exceeded pi and psi was clamped to -1.
  bool angle_clamped = false;
  /// Total angular (or cosine, for CosFace/LDAM) margin applied.
  double margin = 0.0;
};

struct LossResult {
  double loss = 0.0;
  Vector grad_cos;
  bool hard_positive = false;
  bool angle_clamped = false;
  /// Sample weight already folded into loss and grad_cos (CB weight, else 1).
  double weight = 1.0;
};

Vector class_margin(const ClassPrior& prior, double K, double tau);
double class_margin_for(const ClassPrior& prior, int y, double K, double tau);

/// (1 - cos_y) / 2 with cos_y clamped to [-1, 1].
double instance_difficulty(double cos_y) noexcept;
double instance_margin(double m_c, double d_i) noexcept;

/// True iff some other class is at least as close as y (ties count as hard).
bool is_hard_positive(const VectorRef& cos_all, int y);

/// cos(theta_y + m_C + [hard] m_I), with psi = -1 once the angle passes pi.
PositiveLogit dbm_positive_logit(const VectorRef& cos_all, int y, const ClassPrior& prior,
                                 const MarginConfig& cfg);

PositiveLogit baseline_positive_logit(const BaselineMarginSpec& spec, double cos_y, long n_y);

/// -log(e^{s psi_y + o_y} / (e^{s psi_y + o_y} + sum_{i != y} e^{s cos_i + o_i}))
/// where o is `offsets` (log priors for BS) or zero when `offsets` is empty.
LossResult margin_cross_entropy(const PositiveLogit& positive, const VectorRef& cos_all, int y,
                                double s, const VectorRef& offsets = Vector());

/// (1 - beta) / (1 - beta^n_y)
double cb_weight(double beta, long n_y);

LossResult dbm_ce_loss(const VectorRef& cos_all, int y, const ClassPrior& prior, const MarginConfig& cfg);
LossResult dbm_cb_loss(const VectorRef& cos_all, int y, const ClassPrior& prior, const MarginConfig& cfg,
                       double beta);
LossResult dbm_bs_loss(const VectorRef& cos_all, int y, const ClassPrior& prior, const MarginConfig& cfg);

enum class BaseLoss { CE, CB, BS };
enum class PositiveMargin { None, Baseline, Dbm };

/// A complete loss recipe: a base (CE/CB/BS) plus an optional positive-logit margin.
struct LossSpec {
  BaseLoss base = BaseLoss::CE;
  PositiveMargin positive = PositiveMargin::None;
  MarginConfig margin;
  BaselineMarginSpec baseline;
  double beta = 0.9999;

  /// Accepts ce, cb, bs, sphereface, cosface, arcface, ldam, dbm-ce, dbm-cb, dbm-bs.
  static LossSpec from_name(std::string_view name);
  std::string name() const;
  void validate() const;
};

/// Loss and gradient for one sample. `scores` are raw cosines (or linear
/// logits evaluated with margin.scale = 1).
LossResult evaluate_loss(const LossSpec& spec, const VectorRef& scores, int y, const ClassPrior& prior);

const char* to_string(MarginApplication mode) noexcept;
const char* to_string(MarginGradient mode) noexcept;
MarginApplication parse_margin_application(std::string_view text);
MarginGradient parse_margin_gradient(std::string_view text);

}  // namespace dbm
