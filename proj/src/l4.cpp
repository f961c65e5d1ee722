#include "l4/l4.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "l4/errors.hpp"

namespace l4 {

void L4Config::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ContractError("L4Config: alpha must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("L4Config: gamma must be in (0, 1]");
  if (!(gamma0 > 0.0 && gamma0 <= 1.0)) throw ContractError("L4Config: gamma0 must be in (0, 1]");
  if (!(tau >= 1.0) || !std::isfinite(tau)) throw ContractError("L4Config: tau must be >= 1");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ContractError("L4Config: epsilon must be > 0");
  }
}

double linearized_stepsize(double alpha, double loss, double target, double gv, double epsilon) {
  return alpha * (loss - target) / (gv + epsilon);
}

L4Optimizer::L4Optimizer(L4Config config, std::size_t dim)
    : config_(config), directions_(config.flavor, dim, config.directions) {
  config_.validate();
}

void L4Optimizer::init(double first_loss) {
  if (!std::isfinite(first_loss)) {
    throw DivergenceError("first loss is not finite", 0, first_loss);
  }
  if (first_loss < 0.0) throw ContractError("L4Optimizer::init: loss must be non-negative");
  lmin_ = config_.gamma0 * first_loss;
  last_finite_loss_ = first_loss;
  initialized_ = true;
}

StepRecord L4Optimizer::step(double loss, std::span<const double> grad, std::span<double> params) {
  const std::size_t step_index = t_ + 1;
  if (!std::isfinite(loss)) {
    throw DivergenceError("non-finite loss at step " + std::to_string(step_index), step_index,
                          last_finite_loss_);
  }
  if (loss < 0.0) throw ContractError("L4Optimizer::step: loss must be non-negative");
  if (params.size() != dim()) throw ContractError("L4Optimizer::step: params size mismatch");
  if (!initialized_) init(loss);
  last_finite_loss_ = loss;

  GradientDirection gd;
  try {
    gd = directions_.compute(grad);
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(step_index),
                          step_index, last_finite_loss_);
  }
  ++t_;

  lmin_ = std::min(lmin_, loss);
  StepRecord rec;
  rec.loss = loss;
  rec.gv = dot(gd.g, gd.v);
  rec.lmin_used = config_.gamma * lmin_;
  rec.eta = linearized_stepsize(config_.alpha, loss, rec.lmin_used, rec.gv, config_.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= rec.eta * gd.v[i];
  lmin_ *= 1.0 + 1.0 / config_.tau;

  if (!std::isfinite(rec.eta) || !all_finite(params)) {
    throw DivergenceError("parameters became non-finite at step " + std::to_string(step_index),
                          step_index, last_finite_loss_);
  }
  return rec;
}

}  // namespace l4
