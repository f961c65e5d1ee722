#pragma once

#include <cstddef>
#include <vector>

#include "l4/problems.hpp"

namespace l4 {

struct LmaConfig {
  double alpha = 0.3;        // fraction of the solved step applied
  double lambda0 = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double lambda_min = 1e-12;
  double lambda_max = 1e12;
  std::size_t max_iters = 1000;
  double target_loss = 1e-8;

  void validate() const;
};

struct LmaIteration {
  std::size_t iter = 0;
  double loss = 0.0;      // full-dataset loss after this iteration
  double lambda = 0.0;    // damping used for the solve
  bool accepted = false;
  double wallclock_ms = 0.0;
};

struct LmaResult {
  Vector params;
  std::vector<LmaIteration> trajectory;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t iterations = 0;  // linear solves performed, rejected ones included
  bool converged = false;
};

/// Levenberg-Marquardt on the regression problem, starting from `start`.
///
/// Each iteration solves (J^T J + lambda I) delta = J^T r and tries
/// theta - alpha * delta. A step that lowers the full-dataset loss is accepted
/// and lambda shrinks; otherwise it is rejected and lambda grows. A Cholesky
/// failure also grows lambda. Throws NumericError if lambda exceeds lambda_max.
LmaResult lma_solve(const ConditionedRegression& problem, const LmaConfig& config, Vector start);

/// Same, starting from problem.initial_params(seed).
LmaResult lma_solve(const ConditionedRegression& problem, const LmaConfig& config, Seed seed);

}  // namespace l4
