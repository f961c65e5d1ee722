#pragma once

#include <cstddef>
#include <span>

#include "l4/numerics.hpp"

namespace l4 {

/// Exponential moving average with timescale tau and Adam-style bias correction.
///
/// Each update folds x into m <- (1 - 1/tau) m + (1/tau) x and returns
/// m / (1 - (1 - 1/tau)^t), so the very first output equals the first input.
/// The correction 1 - (1 - 1/tau)^t is itself accumulated as the average of a
/// constant 1 under the same recurrence, not through pow(). At t = 1 both
/// numerator and denominator then carry the same 1/tau factor.
class EmaState {
 public:
  EmaState(double tau, std::size_t dim);

  /// Folds x in and returns the debiased average. The returned view is valid
  /// until the next update. Throws DivergenceError if x has non-finite entries
  /// (state is left untouched in that case).
  std::span<const double> update(std::span<const double> x);

  double tau() const noexcept { return tau_; }
  std::size_t steps() const noexcept { return t_; }
  std::size_t dim() const noexcept { return m_.size(); }
  /// Raw (biased) accumulator.
  std::span<const double> accumulator() const noexcept { return m_; }
  /// Last debiased output; all zeros before the first update.
  std::span<const double> value() const noexcept { return out_; }

 private:
  double tau_;
  double decay_;       // 1 - 1/tau
  double correction_ = 0.0;  // 1 - decay^t
  std::size_t t_ = 0;
  Vector m_;
  Vector out_;
};

}  // namespace l4
