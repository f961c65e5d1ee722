#include "l4/averaging.hpp"

#include <cmath>

#include "l4/errors.hpp"

namespace l4 {

EmaState::EmaState(double tau, std::size_t dim)
    : tau_(tau), decay_(1.0 - 1.0 / tau), m_(dim, 0.0), out_(dim, 0.0) {
  if (!(tau >= 1.0) || !std::isfinite(tau)) throw ContractError("EmaState: tau must be >= 1");
  if (dim == 0) throw ContractError("EmaState: dimension must be positive");
}

std::span<const double> EmaState::update(std::span<const double> x) {
  if (x.size() != m_.size()) throw ContractError("EmaState::update: dimension mismatch");
  if (!all_finite(x)) {
    throw DivergenceError("moving average received a non-finite input", t_ + 1, NAN);
  }
  ++t_;
  const double w = 1.0 / tau_;
  correction_ = decay_ * correction_ + w;
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = decay_ * m_[i] + w * x[i];
    out_[i] = m_[i] / correction_;
  }
  return out_;
}

}  // namespace l4
