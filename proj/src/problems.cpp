#include "l4/problems.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "l4/errors.hpp"

namespace l4 {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_finite_params(std::span<const double> params) {
  if (!all_finite(params)) throw DivergenceError("parameters contain non-finite entries", 0, NAN);
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConditionedRegression

RegressionConfig RegressionConfig::scaled(int scale) {
  RegressionConfig c;
  if (scale == 1) return c;
  if (scale == 2) {
    c.outputs = 16;
    c.inputs = 8;
    return c;
  }
  throw ContractError("RegressionConfig::scaled: scale must be 1 or 2");
}

ConditionedRegression::ConditionedRegression(RegressionConfig config, Seed seed)
    : config_(config) {
  if (config_.samples == 0) throw ContractError("ConditionedRegression: need samples >= 1");
  if (!(config_.init_std > 0.0)) throw ContractError("ConditionedRegression: init_std must be > 0");
  factors_ = conditioned_factors(config_.outputs, config_.inputs, config_.kappa, seed.derive(10));
  x_ = gaussian_sample(config_.inputs, config_.samples, seed.derive(11));

  const std::size_t d = config_.inputs;
  const std::size_t n = config_.samples;
  moment_ = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += x_(i, k) * x_(j, k);
      moment_(i, j) = moment_(j, i) = s / static_cast<double>(n);
    }
  }
  moment_chol_ = Matrix(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    double diag = moment_(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= moment_chol_(j, k) * moment_chol_(j, k);
    if (!(diag > 0.0)) {
      throw NumericError("ConditionedRegression: sample second moment is not positive definite");
    }
    moment_chol_(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < d; ++i) {
      double s = moment_(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= moment_chol_(i, k) * moment_chol_(j, k);
      moment_chol_(i, j) = s / moment_chol_(j, j);
    }
  }
}

std::size_t ConditionedRegression::param_count() const {
  return config_.outputs * config_.inputs + config_.inputs * config_.inputs;
}

ConditionedRegression::Factors ConditionedRegression::unpack(
    std::span<const double> params) const {
  if (params.size() != param_count()) {
    throw ContractError("ConditionedRegression: expected " + std::to_string(param_count()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  const std::size_t o = config_.outputs;
  const std::size_t d = config_.inputs;
  auto w1 = params.subspan(0, o * d);
  auto w2 = params.subspan(o * d, d * d);
  return {Matrix(o, d, {w1.begin(), w1.end()}), Matrix(d, d, {w2.begin(), w2.end()})};
}

Vector ConditionedRegression::initial_params(Seed seed) const {
  const Matrix draw = gaussian_sample(param_count(), 1, seed);
  Vector p(draw.data().begin(), draw.data().end());
  for (double& v : p) v *= config_.init_std;
  return p;
}

Vector ConditionedRegression::optimum() const {
  Vector p(factors_.left.data().begin(), factors_.left.data().end());
  p.insert(p.end(), factors_.right.data().begin(), factors_.right.data().end());
  return p;
}

double ConditionedRegression::frobenius_loss(std::span<const double> params) const {
  const auto [w1, w2] = unpack(params);
  const Matrix prod = matmul(w1, w2);
  double s = 0.0;
  for (std::size_t i = 0; i < prod.size(); ++i) {
    const double e = prod.data()[i] - target().data()[i];
    s += e * e;
  }
  return s;
}

double ConditionedRegression::full_loss(std::span<const double> params) const {
  check_finite_params(params);
  const auto [w1, w2] = unpack(params);
  Matrix err = matmul(w1, w2);
  for (std::size_t i = 0; i < err.size(); ++i) err.data()[i] -= target().data()[i];
  // tr(E S E^T) = |E C|_F^2 with S = C C^T.
  const Matrix ec = matmul(err, moment_chol_);
  return squared_norm(ec.data());
}

LossGrad ConditionedRegression::loss_grad(std::span<const double> params, Batch batch) const {
  check_finite_params(params);
  const auto [w1, w2] = unpack(params);
  const std::size_t o = config_.outputs;
  const std::size_t d = config_.inputs;
  LossGrad out;
  out.grad.assign(param_count(), 0.0);
  std::span<double> g1(out.grad.data(), o * d);
  std::span<double> g2(out.grad.data() + o * d, d * d);

  if (batch.is_all()) {
    Matrix err = matmul(w1, w2);
    for (std::size_t i = 0; i < err.size(); ++i) err.data()[i] -= target().data()[i];
    out.loss = squared_norm(matmul(err, moment_chol_).data());
    const Matrix es = matmul(err, moment_);           // o x d
    const Matrix g1m = matmul(es, transpose(w2));     // o x d
    const Matrix g2m = matmul_tn(w1, es);             // d x d
    for (std::size_t i = 0; i < g1.size(); ++i) g1[i] = 2.0 * g1m.data()[i];
    for (std::size_t i = 0; i < g2.size(); ++i) g2[i] = 2.0 * g2m.data()[i];
    return out;
  }

  const auto idx = batch.indices();
  if (idx.empty()) throw ContractError("ConditionedRegression: empty batch");
  Vector x(d), h(d), r(o), back(d);
  for (std::size_t s : idx) {
    if (s >= config_.samples) throw ContractError("ConditionedRegression: sample index out of range");
    for (std::size_t i = 0; i < d; ++i) x[i] = x_(i, s);
    h = matvec(w2, x);
    const Vector pred = matvec(w1, h);
    const Vector y = matvec(target(), x);
    for (std::size_t k = 0; k < o; ++k) r[k] = pred[k] - y[k];
    out.loss += squared_norm(r);
    for (std::size_t k = 0; k < o; ++k)
      for (std::size_t j = 0; j < d; ++j) g1[k * d + j] += 2.0 * r[k] * h[j];
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < o; ++k) acc += w1(k, j) * r[k];
      back[j] = acc;
    }
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t i = 0; i < d; ++i) g2[j * d + i] += 2.0 * back[j] * x[i];
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  out.loss *= inv;
  for (double& v : out.grad) v *= inv;
  return out;
}

double ConditionedRegression::sample_mean_loss(std::span<const double> params) const {
  const auto all = iota_indices(config_.samples);
  return loss_grad(params, Batch::of(all)).loss;
}

Vector ConditionedRegression::residuals(std::span<const double> params) const {
  const auto [w1, w2] = unpack(params);
  const std::size_t o = config_.outputs;
  const std::size_t d = config_.inputs;
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.samples));
  Vector res(config_.samples * o);
  Vector x(d);
  for (std::size_t s = 0; s < config_.samples; ++s) {
    for (std::size_t i = 0; i < d; ++i) x[i] = x_(i, s);
    const Vector pred = matvec(w1, matvec(w2, x));
    const Vector y = matvec(target(), x);
    for (std::size_t k = 0; k < o; ++k) res[s * o + k] = scale * (pred[k] - y[k]);
  }
  return res;
}

Matrix ConditionedRegression::jacobian(std::span<const double> params) const {
  const auto [w1, w2] = unpack(params);
  const std::size_t o = config_.outputs;
  const std::size_t d = config_.inputs;
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.samples));
  Matrix jac(config_.samples * o, param_count());
  Vector x(d);
  for (std::size_t s = 0; s < config_.samples; ++s) {
    for (std::size_t i = 0; i < d; ++i) x[i] = x_(i, s);
    const Vector h = matvec(w2, x);
    for (std::size_t k = 0; k < o; ++k) {
      auto row = jac.row(s * o + k);
      for (std::size_t j = 0; j < d; ++j) row[k * d + j] = scale * h[j];
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) row[o * d + j * d + i] = scale * w1(k, j) * x[i];
    }
  }
  return jac;
}

NormalEquations ConditionedRegression::normal_equations(std::span<const double> params) const {
  const auto [w1, w2] = unpack(params);
  const std::size_t o = config_.outputs;
  const std::size_t d = config_.inputs;
  const std::size_t off = o * d;

  const Matrix q = matmul(w2, moment_);               // W2 S, d x d
  const Matrix p = matmul(q, transpose(w2));          // W2 S W2^T
  const Matrix r = matmul_tn(w1, w1);                 // W1^T W1

  NormalEquations ne;
  ne.jtj = Matrix(param_count(), param_count());
  Matrix& h = ne.jtj;
  // W1-W1 block: delta_kk' P[j][j'].
  for (std::size_t k = 0; k < o; ++k)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t jj = 0; jj < d; ++jj) h(k * d + j, k * d + jj) = p(j, jj);
  // W2-W2 block: R[j][j'] S[i][i'].
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t jj = 0; jj < d; ++jj)
        for (std::size_t ii = 0; ii < d; ++ii)
          h(off + j * d + i, off + jj * d + ii) = r(j, jj) * moment_(i, ii);
  // Cross block: W1[k][j''] Q[j][i] between W1(k, j) and W2(j'', i).
  for (std::size_t k = 0; k < o; ++k)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t jj = 0; jj < d; ++jj)
        for (std::size_t i = 0; i < d; ++i) {
          const double v = w1(k, jj) * q(j, i);
          h(k * d + j, off + jj * d + i) = v;
          h(off + jj * d + i, k * d + j) = v;
        }

  // J^T r is half the full-dataset gradient.
  LossGrad lg = loss_grad(params, Batch::all());
  ne.jtr = std::move(lg.grad);
  for (double& v : ne.jtr) v *= 0.5;
  return ne;
}

// ---------------------------------------------------------------------------
// MlpClassifier

struct MlpClassifier::Pass {
  std::vector<Eigen::MatrixXd> act;  // act[0] = inputs, act[l] = relu(pre[l-1]) for hidden layers
  std::vector<Eigen::MatrixXd> pre;  // pre-activations per layer; the last is the logits
};

MlpClassifier::MlpClassifier(std::vector<std::size_t> layer_sizes,
                             std::shared_ptr<const Dataset> data)
    : sizes_(std::move(layer_sizes)), data_(std::move(data)) {
  if (sizes_.size() < 2) throw ContractError("MlpClassifier: need at least input and output sizes");
  for (auto s : sizes_) {
    if (s == 0) throw ContractError("MlpClassifier: layer sizes must be positive");
  }
  if (!data_) throw ContractError("MlpClassifier: null dataset");
  data_->validate();
  if (data_->feature_dim() != sizes_.front()) {
    throw ContractError("MlpClassifier: input size " + std::to_string(sizes_.front()) +
                        " does not match feature dimension " +
                        std::to_string(data_->feature_dim()));
  }
  if (data_->num_classes != sizes_.back()) {
    throw ContractError("MlpClassifier: output size does not match class count");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(param_count_);
    param_count_ += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
}

Vector MlpClassifier::initial_params(Seed seed) const {
  Vector p(param_count_, 0.0);
  std::mt19937_64 rng(seed.value);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double std_dev = std::sqrt(2.0 / static_cast<double>(sizes_[l]));
    const std::size_t nw = sizes_[l + 1] * sizes_[l];
    for (std::size_t i = 0; i < nw; ++i) p[offsets_[l] + i] = std_dev * normal(rng);
  }
  return p;
}

void MlpClassifier::forward(std::span<const double> params, std::span<const std::size_t> idx,
                            Pass& pass) const {
  if (params.size() != param_count_) {
    throw ContractError("MlpClassifier: expected " + std::to_string(param_count_) +
                        " parameters, got " + std::to_string(params.size()));
  }
  if (idx.empty()) throw ContractError("MlpClassifier: empty batch");
  const std::size_t layers = sizes_.size() - 1;
  const std::size_t batch = idx.size();
  const Matrix& x = data_->inputs;

  pass.act.resize(layers);
  pass.pre.resize(layers);
  Eigen::MatrixXd& in = pass.act[0];
  in.resize(static_cast<Eigen::Index>(sizes_[0]), static_cast<Eigen::Index>(batch));
  for (std::size_t b = 0; b < batch; ++b) {
    if (idx[b] >= data_->size()) throw ContractError("MlpClassifier: sample index out of range");
  }
  for (std::size_t f = 0; f < sizes_[0]; ++f) {
    const auto row = x.row(f);
    for (std::size_t b = 0; b < batch; ++b) in(f, b) = row[idx[b]];
  }

  for (std::size_t l = 0; l < layers; ++l) {
    const auto out_dim = static_cast<Eigen::Index>(sizes_[l + 1]);
    const auto in_dim = static_cast<Eigen::Index>(sizes_[l]);
    Eigen::Map<const RowMajor> w(params.data() + offsets_[l], out_dim, in_dim);
    Eigen::Map<const Eigen::VectorXd> bias(params.data() + offsets_[l] + out_dim * in_dim, out_dim);
    pass.pre[l].noalias() = w * pass.act[l];
    pass.pre[l].colwise() += bias;
    if (l + 1 < layers) pass.act[l + 1] = pass.pre[l].cwiseMax(0.0);
  }
  if (!pass.pre.back().allFinite()) {
    throw DivergenceError("MLP logits became non-finite", 0, NAN);
  }
}

LossGrad MlpClassifier::loss_grad(std::span<const double> params, Batch batch) const {
  std::vector<std::size_t> all;
  std::span<const std::size_t> idx = batch.indices();
  if (batch.is_all()) {
    all = iota_indices(data_->size());
    idx = all;
  }
  Pass pass;
  forward(params, idx, pass);

  const std::size_t layers = sizes_.size() - 1;
  const auto n = static_cast<Eigen::Index>(idx.size());
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  const Eigen::MatrixXd& logits = pass.pre.back();
  Eigen::MatrixXd delta(logits.rows(), n);

  double loss = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto y = static_cast<Eigen::Index>(data_->labels[idx[static_cast<std::size_t>(b)]]);
    Eigen::Index top = 0;
    const double m = logits.col(b).maxCoeff(&top);
    double rest = 0.0;
    for (Eigen::Index j = 0; j < logits.rows(); ++j) {
      const double e = std::exp(logits(j, b) - m);
      delta(j, b) = e;
      if (j != top) rest += e;
    }
    // log-sum-exp minus m, accurate when one logit dominates.
    const double lse_minus_m = std::log1p(rest);
    loss += (m - logits(y, b)) + lse_minus_m;
    const double z = 1.0 + rest;
    double others = 0.0;
    for (Eigen::Index j = 0; j < logits.rows(); ++j) {
      delta(j, b) /= z;
      if (j != y) others += delta(j, b);
    }
    delta(y, b) = -others;
  }
  delta *= inv_n;

  LossGrad out;
  out.loss = loss * inv_n;
  out.grad.assign(param_count_, 0.0);
  for (std::size_t l = layers; l-- > 0;) {
    const auto out_dim = static_cast<Eigen::Index>(sizes_[l + 1]);
    const auto in_dim = static_cast<Eigen::Index>(sizes_[l]);
    Eigen::Map<RowMajor> gw(out.grad.data() + offsets_[l], out_dim, in_dim);
    Eigen::Map<Eigen::VectorXd> gb(out.grad.data() + offsets_[l] + out_dim * in_dim, out_dim);
    gw.noalias() = delta * pass.act[l].transpose();
    gb = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const RowMajor> w(params.data() + offsets_[l], out_dim, in_dim);
    Eigen::MatrixXd back = w.transpose() * delta;
    delta = back.cwiseProduct((pass.pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  if (!std::isfinite(out.loss)) throw DivergenceError("MLP loss became non-finite", 0, NAN);
  return out;
}

double MlpClassifier::full_loss(std::span<const double> params) const {
  constexpr std::size_t kChunk = 256;
  const std::size_t n = data_->size();
  std::vector<std::size_t> idx;
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t stop = std::min(n, start + kChunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    total += loss_grad(params, Batch::of(idx)).loss * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(n);
}

double MlpClassifier::accuracy(std::span<const double> params, Batch batch) const {
  std::vector<std::size_t> all;
  std::span<const std::size_t> idx = batch.indices();
  if (batch.is_all()) {
    all = iota_indices(data_->size());
    idx = all;
  }
  Pass pass;
  forward(params, idx, pass);
  std::size_t correct = 0;
  const Eigen::MatrixXd& logits = pass.pre.back();
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    Eigen::Index top = 0;
    logits.col(b).maxCoeff(&top);
    if (static_cast<std::uint32_t>(top) == data_->labels[idx[static_cast<std::size_t>(b)]]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

std::vector<double> MlpClassifier::hidden_preactivations(std::span<const double> params,
                                                         Batch batch) const {
  std::vector<std::size_t> all;
  std::span<const std::size_t> idx = batch.indices();
  if (batch.is_all()) {
    all = iota_indices(data_->size());
    idx = all;
  }
  Pass pass;
  forward(params, idx, pass);
  std::vector<double> out;
  for (std::size_t l = 0; l + 1 < pass.pre.size(); ++l)
    out.insert(out.end(), pass.pre[l].data(), pass.pre[l].data() + pass.pre[l].size());
  return out;
}

}  // namespace l4
