#pragma once

#include <cstddef>
#include <span>

#include "l4/directions.hpp"

namespace l4 {

/// Hyperparameters of the loss-linearizing stepsize rule.
struct L4Config {
  double alpha = 0.15;    // fraction of the linearized step actually taken
  double gamma = 0.9;     // fraction of the lowest seen loss believed achievable
  double gamma0 = 0.75;   // initial minimum-loss estimate, as a fraction of the first loss
  double tau = 1000.0;    // timescale over which the minimum-loss estimate is forgotten
  double epsilon = 1e-12; // denominator regularizer
  Flavor flavor = Flavor::Adam;
  DirectionConfig directions{};

  void validate() const;
};

/// What one step did. eta is the effective learning rate.
struct StepRecord {
  double eta = 0.0;
  double loss = 0.0;
  double lmin_used = 0.0;  // gamma * Lmin, after the min-update and before forgetting
  double gv = 0.0;         // g^T v
};

inline double effective_lr(const StepRecord& rec) noexcept { return rec.eta; }

/// eta = alpha (loss - target) / (gv + epsilon). This is the bare rule, with the
/// minimum-loss bookkeeping supplied by the caller.
double linearized_stepsize(double alpha, double loss, double target, double gv, double epsilon);

/// Stepsize adaptation wrapped around a momentum or Adam direction.
///
/// Per step: update the direction averages with the raw gradient, take
/// Lmin <- min(Lmin, loss), move params by -eta v, then inflate Lmin by
/// (1 + 1/tau). The first loss seen initializes Lmin to gamma0 * loss unless
/// init() was called explicitly.
class L4Optimizer {
 public:
  L4Optimizer(L4Config config, std::size_t dim);

  void init(double first_loss);

  /// Throws DivergenceError on non-finite loss, gradient or resulting params;
  /// ContractError on negative loss or size mismatch.
  StepRecord step(double loss, std::span<const double> grad, std::span<double> params);

  const L4Config& config() const noexcept { return config_; }
  bool initialized() const noexcept { return initialized_; }
  double lmin() const noexcept { return lmin_; }
  std::size_t steps() const noexcept { return t_; }
  std::size_t dim() const noexcept { return directions_.dim(); }

 private:
  L4Config config_;
  DirectionState directions_;
  double lmin_ = 0.0;
  std::size_t t_ = 0;
  bool initialized_ = false;
  double last_finite_loss_ = 0.0;
};

}  // namespace l4
