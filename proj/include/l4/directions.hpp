#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "l4/averaging.hpp"

namespace l4 {

enum class Flavor { Mom, Adam };

const char* to_string(Flavor f) noexcept;

struct DirectionConfig {
  double tau_momentum = 10.0;
  double tau_second_moment = 1000.0;
  /// Added under the square root of the second moment; sqrt(1e-24) = 1e-12.
  double denominator_guard = 1e-24;
};

/// Gradient estimator g and update direction v for one optimizer step.
/// For Flavor::Mom both views alias the same buffer.
struct GradientDirection {
  std::span<const double> g;
  std::span<const double> v;
};

/// Produces (g, v) from the raw batch gradient.
///
/// g is always the debiased momentum average of the gradient. Mom uses v = g.
/// Adam divides g elementwise by sqrt(<grad^2> + guard) where the second
/// moment is averaged over the slower timescale.
class DirectionState {
 public:
  DirectionState(Flavor flavor, std::size_t dim, DirectionConfig config = {});

  GradientDirection compute(std::span<const double> grad);

  Flavor flavor() const noexcept { return flavor_; }
  std::size_t dim() const noexcept { return momentum_.dim(); }
  std::size_t steps() const noexcept { return momentum_.steps(); }

 private:
  Flavor flavor_;
  DirectionConfig config_;
  EmaState momentum_;
  std::optional<EmaState> second_moment_;
  Vector squared_;
  Vector direction_;
};

}  // namespace l4
