#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "l4/data_io.hpp"
#include "l4/numerics.hpp"

namespace l4 {

/// Which samples a loss evaluation covers: the whole dataset or an index list
/// (duplicates allowed).
class Batch {
 public:
  static Batch all() noexcept { return Batch(); }
  static Batch of(std::span<const std::size_t> indices) noexcept { return Batch(indices); }

  bool is_all() const noexcept { return all_; }
  std::span<const std::size_t> indices() const noexcept { return indices_; }

 private:
  Batch() = default;
  explicit Batch(std::span<const std::size_t> idx) : all_(false), indices_(idx) {}

  bool all_ = true;
  std::span<const std::size_t> indices_;
};

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

/// A non-negative differentiable objective over a flat parameter vector.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::size_t param_count() const = 0;
  virtual std::size_t sample_count() const = 0;
  /// Mean loss over the batch and its analytic gradient.
  virtual LossGrad loss_grad(std::span<const double> params, Batch batch) const = 0;
  /// Deterministic whole-dataset loss, for monitoring and stopping.
  virtual double full_loss(std::span<const double> params) const = 0;
  virtual Vector initial_params(Seed seed) const = 0;
};

struct RegressionConfig {
  std::size_t outputs = 10;
  std::size_t inputs = 6;
  double kappa = 1e10;
  std::size_t samples = 1000;
  double init_std = 1e-3;

  /// scale 1: 10x6 and 6x6 factors (96 weights). scale 2: 16x8 and 8x8 (192 weights).
  static RegressionConfig scaled(int scale);
};

/// Gauss-Newton normal equations J^T J and J^T r for the residual r_s / sqrt(n).
struct NormalEquations {
  Matrix jtj;
  Vector jtr;
};

/// Fit W1 W2 x ~ A x over a fixed Gaussian dataset, with A badly conditioned.
///
/// params = [W1 (outputs x inputs, row-major), W2 (inputs x inputs, row-major)].
/// The full-dataset loss mean_s |W1 W2 x_s - A x_s|^2 is evaluated through the
/// sample second-moment matrix, so its cost does not depend on the sample count.
/// Index batches go sample by sample.
class ConditionedRegression final : public Problem {
 public:
  ConditionedRegression(RegressionConfig config, Seed seed);

  std::size_t param_count() const override;
  std::size_t sample_count() const override { return config_.samples; }
  LossGrad loss_grad(std::span<const double> params, Batch batch) const override;
  double full_loss(std::span<const double> params) const override;
  Vector initial_params(Seed seed) const override;

  /// |W1 W2 - A|_F^2, the expectation of the sample loss over x ~ N(0, I).
  double frobenius_loss(std::span<const double> params) const;
  /// Sum of per-sample losses divided by the count, computed sample by sample.
  double sample_mean_loss(std::span<const double> params) const;

  /// W1 = U diag(sigma), W2 = V^T: a zero-loss point.
  Vector optimum() const;

  /// Stacked per-sample residuals (sample-major, output-minor), scaled by 1/sqrt(n).
  Vector residuals(std::span<const double> params) const;
  /// Jacobian of residuals() with respect to params.
  Matrix jacobian(std::span<const double> params) const;
  /// J^T J and J^T r assembled from the second-moment matrix in O(params^2).
  NormalEquations normal_equations(std::span<const double> params) const;

  const RegressionConfig& config() const noexcept { return config_; }
  const Matrix& target() const noexcept { return factors_.product; }
  const ConditionedFactors& factors() const noexcept { return factors_; }
  /// inputs x samples.
  const Matrix& samples() const noexcept { return x_; }
  const Matrix& second_moment() const noexcept { return moment_; }

 private:
  struct Factors {
    Matrix w1;
    Matrix w2;
  };
  Factors unpack(std::span<const double> params) const;

  RegressionConfig config_;
  ConditionedFactors factors_;
  Matrix x_;
  Matrix moment_;        // (1/n) X X^T
  Matrix moment_chol_;   // lower Cholesky factor of moment_
};

/// Fully connected ReLU network with a softmax cross-entropy output.
///
/// params: per layer, W (out x in, row-major) followed by b (out).
class MlpClassifier final : public Problem {
 public:
  /// layer_sizes = {inputs, hidden..., classes}.
  MlpClassifier(std::vector<std::size_t> layer_sizes, std::shared_ptr<const Dataset> data);

  std::size_t param_count() const override { return param_count_; }
  std::size_t sample_count() const override { return data_->size(); }
  LossGrad loss_grad(std::span<const double> params, Batch batch) const override;
  double full_loss(std::span<const double> params) const override;
  /// He initialization for weights (std sqrt(2 / fan_in)), zero biases.
  Vector initial_params(Seed seed) const override;

  /// Fraction of samples whose arg-max logit equals the label.
  double accuracy(std::span<const double> params, Batch batch = Batch::all()) const;
  /// Pre-activations of every hidden unit for the batch (for kink avoidance in checks).
  std::vector<double> hidden_preactivations(std::span<const double> params, Batch batch) const;

  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  const Dataset& data() const noexcept { return *data_; }

 private:
  struct Pass;
  void forward(std::span<const double> params, std::span<const std::size_t> idx,
               Pass& pass) const;

  std::vector<std::size_t> sizes_;
  std::shared_ptr<const Dataset> data_;
  std::size_t param_count_ = 0;
  std::vector<std::size_t> offsets_;  // start of each layer's W
};

}  // namespace l4
