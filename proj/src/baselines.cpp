#include "l4/baselines.hpp"

#include <cmath>
#include <string>

#include "l4/errors.hpp"

namespace l4 {

void BaselineConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractError("BaselineConfig: lr must be > 0");
  auto unit = [](double b) { return b >= 0.0 && b < 1.0; };
  if (!unit(beta) || !unit(beta1) || !unit(beta2)) {
    throw ContractError("BaselineConfig: beta parameters must lie in [0, 1)");
  }
  if (!(eps_adam > 0.0)) throw ContractError("BaselineConfig: eps_adam must be > 0");
}

const char* to_string(BaselineKind k) noexcept {
  switch (k) {
    case BaselineKind::Sgd: return "sgd";
    case BaselineKind::Momentum: return "momentum";
    case BaselineKind::Adam: return "adam";
  }
  return "?";
}

BaselineOptimizer::BaselineOptimizer(BaselineConfig config, std::size_t dim) : config_(config) {
  config_.validate();
  if (dim == 0) throw ContractError("BaselineOptimizer: dimension must be positive");
  if (config_.kind != BaselineKind::Sgd) m_.assign(dim, 0.0);
  if (config_.kind == BaselineKind::Adam) s_.assign(dim, 0.0);
}

void BaselineOptimizer::step(std::span<const double> grad, std::span<double> params) {
  if (grad.size() != params.size()) throw ContractError("BaselineOptimizer::step: size mismatch");
  if (!all_finite(grad)) {
    throw DivergenceError("non-finite gradient at step " + std::to_string(t_ + 1), t_ + 1, NAN);
  }
  ++t_;
  const double lr = config_.lr;
  switch (config_.kind) {
    case BaselineKind::Sgd:
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
      break;
    case BaselineKind::Momentum: {
      const double b = config_.beta;
      const double w = config_.momentum_form == MomentumForm::Accumulate ? 1.0 : 1.0 - b;
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b * m_[i] + w * grad[i];
        params[i] -= lr * m_[i];
      }
      break;
    }
    case BaselineKind::Adam: {
      const double b1 = config_.beta1;
      const double b2 = config_.beta2;
      beta1_pow_ *= b1;
      beta2_pow_ *= b2;
      const double c1 = 1.0 - beta1_pow_;
      const double c2 = 1.0 - beta2_pow_;
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
        s_[i] = b2 * s_[i] + (1.0 - b2) * grad[i] * grad[i];
        params[i] -= lr * (m_[i] / c1) / (std::sqrt(s_[i] / c2) + config_.eps_adam);
      }
      break;
    }
  }
  if (!all_finite(params)) {
    throw DivergenceError("parameters became non-finite at step " + std::to_string(t_), t_, NAN);
  }
}

}  // namespace l4
