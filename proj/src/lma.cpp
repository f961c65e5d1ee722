#include "l4/lma.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "l4/errors.hpp"

namespace l4 {

void LmaConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("LmaConfig: alpha must be in (0, 1]");
  if (!(lambda0 > 0.0)) throw ContractError("LmaConfig: lambda0 must be > 0");
  if (!(lambda_up > 1.0) || !(lambda_down > 0.0 && lambda_down < 1.0)) {
    throw ContractError("LmaConfig: need lambda_up > 1 and 0 < lambda_down < 1");
  }
  if (!(lambda_min > 0.0 && lambda_min <= lambda0 && lambda0 <= lambda_max)) {
    throw ContractError("LmaConfig: need 0 < lambda_min <= lambda0 <= lambda_max");
  }
  if (!(target_loss >= 0.0)) throw ContractError("LmaConfig: target_loss must be >= 0");
}

LmaResult lma_solve(const ConditionedRegression& problem, const LmaConfig& config, Vector start) {
  config.validate();
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();

  LmaResult res;
  res.params = std::move(start);
  double loss = problem.full_loss(res.params);
  res.initial_loss = loss;
  double lambda = config.lambda0;
  const std::size_t n = problem.param_count();

  while (!(loss < config.target_loss) && res.iterations < config.max_iters) {
    ++res.iterations;
    NormalEquations ne = problem.normal_equations(res.params);
    for (std::size_t i = 0; i < n; ++i) ne.jtj(i, i) += lambda;
    const auto delta = cholesky_solve(ne.jtj, ne.jtr);

    LmaIteration it;
    it.iter = res.iterations;
    it.lambda = lambda;
    if (delta) {
      Vector trial = res.params;
      for (std::size_t i = 0; i < n; ++i) trial[i] -= config.alpha * (*delta)[i];
      const double trial_loss = all_finite(trial) ? problem.full_loss(trial) : INFINITY;
      if (trial_loss < loss) {
        res.params = std::move(trial);
        loss = trial_loss;
        it.accepted = true;
        lambda = std::max(config.lambda_min, lambda * config.lambda_down);
      } else {
        lambda *= config.lambda_up;
      }
    } else {
      lambda *= config.lambda_up;
    }
    it.loss = loss;
    it.wallclock_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    res.trajectory.push_back(it);
    if (lambda > config.lambda_max) {
      throw NumericError("lma_solve: damping " + std::to_string(lambda) +
                         " left the allowed bracket at iteration " +
                         std::to_string(res.iterations) + " (loss " + std::to_string(loss) + ")");
    }
  }
  res.final_loss = loss;
  res.converged = loss < config.target_loss;
  return res;
}

LmaResult lma_solve(const ConditionedRegression& problem, const LmaConfig& config, Seed seed) {
  return lma_solve(problem, config, problem.initial_params(seed));
}

}  // namespace l4
