#include "l4/directions.hpp"

#include <cmath>

#include "l4/errors.hpp"

namespace l4 {

const char* to_string(Flavor f) noexcept { return f == Flavor::Mom ? "mom" : "adam"; }

DirectionState::DirectionState(Flavor flavor, std::size_t dim, DirectionConfig config)
    : flavor_(flavor), config_(config), momentum_(config.tau_momentum, dim) {
  if (flavor_ == Flavor::Adam) {
    if (!(config_.denominator_guard >= 0.0)) {
      throw ContractError("DirectionState: denominator guard must be non-negative");
    }
    second_moment_.emplace(config_.tau_second_moment, dim);
    squared_.assign(dim, 0.0);
    direction_.assign(dim, 0.0);
  }
}

GradientDirection DirectionState::compute(std::span<const double> grad) {
  if (grad.size() != dim()) throw ContractError("DirectionState::compute: dimension mismatch");
  if (!all_finite(grad)) {
    throw DivergenceError("gradient contains non-finite entries", momentum_.steps() + 1, NAN);
  }
  const auto g = momentum_.update(grad);
  if (flavor_ == Flavor::Mom) return {g, g};

  for (std::size_t i = 0; i < grad.size(); ++i) squared_[i] = grad[i] * grad[i];
  const auto s = second_moment_->update(squared_);
  for (std::size_t i = 0; i < g.size(); ++i) {
    direction_[i] = g[i] / std::sqrt(s[i] + config_.denominator_guard);
  }
  return {g, direction_};
}

}  // namespace l4
