#pragma once

#include <cstddef>
#include <span>

#include "l4/numerics.hpp"

namespace l4 {

enum class BaselineKind { Sgd, Momentum, Adam };

/// Heavy-ball accumulation m = beta m + g, or damped m = beta m + (1 - beta) g.
enum class MomentumForm { Accumulate, Dampen };

struct BaselineConfig {
  BaselineKind kind = BaselineKind::Sgd;
  double lr = 1e-3;
  double beta = 0.9;
  MomentumForm momentum_form = MomentumForm::Accumulate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-4;

  void validate() const;
};

const char* to_string(BaselineKind k) noexcept;

/// Constant-stepsize SGD, momentum SGD and Adam.
class BaselineOptimizer {
 public:
  BaselineOptimizer(BaselineConfig config, std::size_t dim);

  /// Throws DivergenceError on non-finite gradient or resulting params.
  void step(std::span<const double> grad, std::span<double> params);

  const BaselineConfig& config() const noexcept { return config_; }
  std::size_t steps() const noexcept { return t_; }

 private:
  BaselineConfig config_;
  std::size_t t_ = 0;
  Vector m_;
  Vector s_;
  double beta1_pow_ = 1.0;
  double beta2_pow_ = 1.0;
};

}  // namespace l4
