#include "l4/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <variant>

#include <json.hpp>

#include "l4/errors.hpp"
#include "l4/problems.hpp"

namespace l4 {

using nlohmann::json;

namespace {

constexpr double kLossFloor = std::numeric_limits<double>::min();

// ---------------------------------------------------------------------------
// JSON helpers

template <typename T>
T take(json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  T v;
  try {
    v = it->get<T>();
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: bad value for '") + key + "': " + e.what());
  }
  obj.erase(it);
  return v;
}

template <typename T>
std::optional<T> take_opt(json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (it != obj.end()) obj.erase(it);
    return std::nullopt;
  }
  return take<T>(obj, key, T{});
}

void reject_leftovers(const json& obj, const char* where) {
  if (!obj.empty()) {
    throw ContractError(std::string("config: unknown key '") + obj.begin().key() + "' in " + where);
  }
}

ProblemKind problem_kind_from(const std::string& s) {
  if (s == "regression") return ProblemKind::Regression;
  if (s == "mnist") return ProblemKind::Mnist;
  if (s == "synthetic") return ProblemKind::Synthetic;
  throw ContractError("config: unknown problem type '" + s + "'");
}

OptimizerKind optimizer_kind_from(const std::string& s) {
  if (s == "l4mom") return OptimizerKind::L4Mom;
  if (s == "l4adam") return OptimizerKind::L4Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "momentum") return OptimizerKind::Momentum;
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "lma") return OptimizerKind::Lma;
  throw ContractError("config: unknown optimizer type '" + s + "'");
}

bool is_l4(OptimizerKind k) { return k == OptimizerKind::L4Mom || k == OptimizerKind::L4Adam; }
bool is_baseline(OptimizerKind k) {
  return k == OptimizerKind::Sgd || k == OptimizerKind::Momentum || k == OptimizerKind::Adam;
}

std::string format_g(double x, int digits = 6) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------------------
// Problem construction

struct ClassificationData {
  std::shared_ptr<const Dataset> data;
  std::string source;
};

ClassificationData load_classification(const ProblemSpec& p) {
  if (p.kind == ProblemKind::Mnist) {
    std::error_code ec;
    const bool present = !p.images.empty() && !p.labels.empty() &&
                         std::filesystem::exists(p.images, ec) &&
                         std::filesystem::exists(p.labels, ec);
    if (present) {
      auto ds = std::make_shared<Dataset>(load_idx(p.images, p.labels).head(p.samples));
      return {std::move(ds), "mnist"};
    }
    std::cerr << "MNIST files not found (images='" << p.images << "', labels='" << p.labels
              << "').\n"
              << "Download train-images-idx3-ubyte and train-labels-idx1-ubyte, decompress "
                 "them, and point problem.images / problem.labels at them.\n"
              << "Falling back to synthetic data (" << p.samples << " samples, 784 features, "
              << "10 classes).\n";
    return {std::make_shared<Dataset>(
                synthetic_classification(Seed{p.data_seed}, p.samples, 784, 10)),
            "synthetic-fallback"};
  }
  return {std::make_shared<Dataset>(
              synthetic_classification(Seed{p.data_seed}, p.samples, p.dim, p.classes)),
          "synthetic"};
}

std::unique_ptr<Problem> make_problem(const ProblemSpec& p, Seed seed,
                                      const std::shared_ptr<const Dataset>& data) {
  if (p.kind == ProblemKind::Regression) {
    RegressionConfig rc = RegressionConfig::scaled(p.scale);
    rc.kappa = p.kappa;
    rc.samples = p.samples;
    rc.init_std = p.init_std;
    return std::make_unique<ConditionedRegression>(rc, seed);
  }
  std::vector<std::size_t> sizes{data->feature_dim()};
  sizes.insert(sizes.end(), p.hidden.begin(), p.hidden.end());
  sizes.push_back(data->num_classes);
  return std::make_unique<MlpClassifier>(std::move(sizes), data);
}

/// Epoch-wise shuffled batches without replacement; the last batch of an
/// epoch may be short.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch, Seed seed)
      : order_(n), batch_(batch), rng_(seed.value) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    pos_ = n;
  }

  std::span<const std::size_t> next() {
    if (pos_ >= order_.size()) {
      for (std::size_t i = order_.size(); i-- > 1;) {
        std::swap(order_[i], order_[rng_() % (i + 1)]);
      }
      pos_ = 0;
    }
    const std::size_t count = std::min(batch_, order_.size() - pos_);
    std::span<const std::size_t> out(order_.data() + pos_, count);
    pos_ += count;
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_;
  std::mt19937_64 rng_;
};

std::size_t steps_per_epoch(const ProblemSpec& p, std::size_t samples) {
  if (p.batch_size == 0 || p.batch_size >= samples) return 1;
  return (samples + p.batch_size - 1) / p.batch_size;
}

std::string run_id_for(const ExperimentSpec& spec, std::uint64_t seed) {
  std::string base = spec.name.empty() ? spec.optimizer.label() : spec.name;
  for (char& c : base) {
    if (c == ',' || c == '"' || c == '\n' || c == '/' || c == ' ' || c == '(' || c == ')' ||
        c == '=') {
      c = '_';
    }
  }
  return base + "_seed" + std::to_string(seed);
}

// ---------------------------------------------------------------------------
// Runs

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

RunResult run_lma(const ExperimentSpec& spec, const ConditionedRegression& problem, Seed seed,
                  RunResult res, RunOptions options) {
  LmaConfig cfg = spec.optimizer.lma;
  if (spec.max_steps) cfg.max_iters = *spec.max_steps;
  if (spec.stop_loss) cfg.target_loss = *spec.stop_loss;
  const auto t0 = Clock::now();
  try {
    LmaResult lr = lma_solve(problem, cfg, problem.initial_params(seed.derive(20)));
    res.wallclock_s = elapsed_ms(t0) / 1000.0;
    res.steps = lr.iterations;
    res.final_loss = lr.final_loss;
    if (lr.converged) res.steps_to_target = lr.iterations;
    if (options.keep_rows) {
      for (const auto& it : lr.trajectory) {
        MetricsRow row;
        row.run_id = res.run_id;
        row.step = it.iter;
        row.epoch = it.iter - 1;
        row.batch_loss = it.loss;
        row.wallclock_ms = it.wallclock_ms;
        res.rows.push_back(std::move(row));
      }
    }
  } catch (const NumericError& e) {
    res.wallclock_s = elapsed_ms(t0) / 1000.0;
    res.diverged = true;
    res.divergence_reason = e.what();
    res.final_loss = std::numeric_limits<double>::infinity();
  }
  return res;
}

RunResult run_gradient(const ExperimentSpec& spec, const Problem& problem, Seed seed,
                       RunResult res, RunOptions options) {
  const ProblemSpec& ps = spec.problem;
  const std::size_t n = problem.sample_count();
  const std::size_t per_epoch = steps_per_epoch(ps, n);
  const std::size_t budget = spec.max_steps ? *spec.max_steps : *spec.max_epochs * per_epoch;
  const bool full_batch = per_epoch == 1 && (ps.batch_size == 0 || ps.batch_size >= n);
  const std::size_t log_every = spec.effective_log_every();
  // Deterministic regression stops on the full-dataset loss, stochastic
  // problems on the batch loss.
  const bool stop_on_full = ps.kind == ProblemKind::Regression;

  Vector params = problem.initial_params(seed.derive(20));
  BatchSampler sampler(n, full_batch ? n : ps.batch_size, seed.derive(30));

  std::optional<L4Optimizer> l4opt;
  std::optional<BaselineOptimizer> base;
  if (is_l4(spec.optimizer.kind)) {
    L4Config cfg = spec.optimizer.l4;
    cfg.flavor = spec.optimizer.kind == OptimizerKind::L4Mom ? Flavor::Mom : Flavor::Adam;
    l4opt.emplace(cfg, problem.param_count());
  } else {
    BaselineConfig cfg = spec.optimizer.baseline;
    cfg.kind = spec.optimizer.kind == OptimizerKind::Sgd        ? BaselineKind::Sgd
               : spec.optimizer.kind == OptimizerKind::Momentum ? BaselineKind::Momentum
                                                                : BaselineKind::Adam;
    base.emplace(cfg, problem.param_count());
  }

  const auto t0 = Clock::now();
  std::size_t step = 0;
  double last_loss = std::numeric_limits<double>::quiet_NaN();
  try {
    while (step < budget) {
      const LossGrad lg = full_batch ? problem.loss_grad(params, Batch::all())
                                     : problem.loss_grad(params, Batch::of(sampler.next()));
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("non-finite loss", step + 1, last_loss);
      }
      last_loss = lg.loss;
      if (spec.stop_loss) {
        const double monitored = stop_on_full && !full_batch ? problem.full_loss(params) : lg.loss;
        if (monitored < *spec.stop_loss) {
          res.steps_to_target = step;
          break;
        }
      }
      std::optional<double> eta;
      std::optional<double> lmin;
      if (l4opt) {
        const StepRecord rec = l4opt->step(lg.loss, lg.grad, params);
        if (!(rec.gv >= 0.0)) {
          throw ContractError("compatibility violated: g^T v = " + format_g(rec.gv, 17) +
                              " at step " + std::to_string(step + 1));
        }
        res.min_gv = res.min_gv ? std::min(*res.min_gv, rec.gv) : rec.gv;
        eta = rec.eta;
        lmin = rec.lmin_used;
      } else {
        base->step(lg.grad, params);
      }
      ++step;
      if (options.keep_rows && (step % log_every == 0 || step == 1)) {
        MetricsRow row;
        row.run_id = res.run_id;
        row.step = step;
        row.epoch = (step - 1) / per_epoch;
        row.batch_loss = lg.loss;
        row.effective_lr = eta;
        row.lmin = lmin;
        row.wallclock_ms = elapsed_ms(t0);
        res.rows.push_back(std::move(row));
      }
    }
    res.wallclock_s = elapsed_ms(t0) / 1000.0;
    res.steps = step;
    res.final_loss = problem.full_loss(params);
    if (!std::isfinite(res.final_loss)) throw DivergenceError("non-finite final loss", step, last_loss);
    if (const auto* mlp = dynamic_cast<const MlpClassifier*>(&problem)) {
      res.final_accuracy = mlp->accuracy(params);
    }
  } catch (const DivergenceError& e) {
    res.wallclock_s = elapsed_ms(t0) / 1000.0;
    res.steps = step;
    res.diverged = true;
    res.divergence_step = step + 1;
    res.divergence_reason = e.what();
    res.final_loss = std::numeric_limits<double>::infinity();
  }
  return res;
}

RunResult run_single_with(const ExperimentSpec& spec, std::size_t restart, RunOptions options,
                          const std::shared_ptr<const Dataset>& data) {
  const Seed seed{spec.seed_base + restart};
  RunResult res;
  res.seed = seed.value;
  res.run_id = run_id_for(spec, seed.value);
  const auto problem = make_problem(spec.problem, seed, data);
  if (spec.optimizer.kind == OptimizerKind::Lma) {
    const auto* reg = dynamic_cast<const ConditionedRegression*>(problem.get());
    if (!reg) throw ContractError("lma is only defined for the regression problem");
    return run_lma(spec, *reg, seed, std::move(res), options);
  }
  return run_gradient(spec, *problem, seed, std::move(res), options);
}

std::vector<RunResult> run_restarts(const ExperimentSpec& spec, RunOptions options,
                                    const std::shared_ptr<const Dataset>& data) {
  std::vector<RunResult> results(spec.restarts);
  const std::size_t workers = std::max<std::size_t>(1, std::min(spec.threads, spec.restarts));
  if (workers == 1) {
    for (std::size_t r = 0; r < spec.restarts; ++r)
      results[r] = run_single_with(spec, r, options, data);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t r = next++; r < spec.restarts; r = next++) {
        try {
          results[r] = run_single_with(spec, r, options, data);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

double log_mean_final(std::span<const RunResult> runs) {
  double s = 0.0;
  for (const auto& r : runs) {
    if (r.diverged || !std::isfinite(r.final_loss)) return std::numeric_limits<double>::infinity();
    s += std::log(std::max(r.final_loss, kLossFloor));
  }
  return s / static_cast<double>(runs.size());
}

json run_to_json(const RunResult& r) {
  json j;
  j["run_id"] = r.run_id;
  j["seed"] = r.seed;
  j["final_loss"] = finite_or_null(r.final_loss);
  j["steps"] = r.steps;
  j["steps_to_target"] = r.steps_to_target ? json(*r.steps_to_target) : json(nullptr);
  j["diverged"] = r.diverged;
  j["divergence_step"] = r.divergence_step ? json(*r.divergence_step) : json(nullptr);
  j["divergence_reason"] = r.divergence_reason;
  j["wallclock_s"] = r.wallclock_s;
  j["min_gv"] = nullable(r.min_gv);
  j["final_accuracy"] = nullable(r.final_accuracy);
  return j;
}

json summary_json(const Summary& s) {
  json j;
  j["name"] = s.spec.name;
  j["optimizer"] = s.spec.optimizer.label();
  j["problem"] = to_string(s.spec.problem.kind);
  j["dataset"] = s.dataset;
  j["batch_size"] = s.spec.problem.batch_size;
  j["spec"] = json::parse(experiment_to_json(s.spec));
  j["selected_lr"] = nullable(s.selected_lr);
  j["grid"] = json::array();
  for (const auto& g : s.grid) {
    j["grid"].push_back({{"lr", g.lr}, {"log_mean_final_loss", finite_or_null(g.log_mean_final_loss)}});
  }
  j["runs"] = json::array();
  for (const auto& r : s.runs) j["runs"].push_back(run_to_json(r));
  const Trajectory& t = s.trajectory;
  j["trajectory"] = {{"step", t.steps},
                     {"data_points", t.data_points},
                     {"mean", t.mean},
                     {"min", t.min},
                     {"max", t.max}};
  return j;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Spec types

const char* to_string(ProblemKind k) noexcept {
  switch (k) {
    case ProblemKind::Regression: return "regression";
    case ProblemKind::Mnist: return "mnist";
    case ProblemKind::Synthetic: return "synthetic";
  }
  return "?";
}

const char* to_string(OptimizerKind k) noexcept {
  switch (k) {
    case OptimizerKind::L4Mom: return "l4mom";
    case OptimizerKind::L4Adam: return "l4adam";
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::Lma: return "lma";
  }
  return "?";
}

bool ProblemSpec::same_problem(const ProblemSpec& o) const noexcept {
  if (kind != o.kind || samples != o.samples) return false;
  switch (kind) {
    case ProblemKind::Regression:
      return kappa == o.kappa && scale == o.scale && init_std == o.init_std;
    case ProblemKind::Mnist:
      return images == o.images && labels == o.labels && hidden == o.hidden;
    case ProblemKind::Synthetic:
      return dim == o.dim && classes == o.classes && data_seed == o.data_seed && hidden == o.hidden;
  }
  return false;
}

std::string OptimizerSpec::label() const {
  switch (kind) {
    case OptimizerKind::L4Mom:
    case OptimizerKind::L4Adam:
      return std::string(to_string(kind)) + "(alpha=" + format_g(l4.alpha) + ")";
    case OptimizerKind::Lma:
      return "lma(alpha=" + format_g(lma.alpha) + ")";
    default:
      if (!lr_grid.empty()) return std::string(to_string(kind)) + "(lr=grid)";
      return std::string(to_string(kind)) + "(lr=" + format_g(baseline.lr) + ")";
  }
}

void ExperimentSpec::validate() const {
  if (restarts < 1) throw ContractError("experiment: restarts must be >= 1");
  if (!max_steps && !max_epochs) throw ContractError("experiment: set max_steps or max_epochs");
  if (threads < 1) throw ContractError("experiment: threads must be >= 1");
  if (stop_loss && !(*stop_loss >= 0.0)) throw ContractError("experiment: stop_loss must be >= 0");
  if (problem.samples < 1) throw ContractError("experiment: samples must be >= 1");
  if (problem.is_classification() && problem.batch_size == 0) {
    throw ContractError("experiment: classification problems need a batch_size");
  }
  if (problem.kind == ProblemKind::Regression) {
    if (problem.scale != 1 && problem.scale != 2) {
      throw ContractError("experiment: regression scale must be 1 or 2");
    }
    if (!(problem.kappa >= 1.0)) throw ContractError("experiment: kappa must be >= 1");
  }
  if (optimizer.kind == OptimizerKind::Lma && problem.kind != ProblemKind::Regression) {
    throw ContractError("experiment: lma is only defined for the regression problem");
  }
  if (is_l4(optimizer.kind)) optimizer.l4.validate();
  if (is_baseline(optimizer.kind)) {
    if (optimizer.lr_grid.empty()) {
      optimizer.baseline.validate();
    } else {
      for (double lr : optimizer.lr_grid) {
        if (!(lr > 0.0)) throw ContractError("experiment: lr_grid entries must be > 0");
      }
    }
  }
  if (optimizer.kind == OptimizerKind::Lma) optimizer.lma.validate();
}

std::size_t ExperimentSpec::effective_log_every() const noexcept {
  if (log_every > 0) return log_every;
  return problem.kind == ProblemKind::Regression ? 1 : 10;
}

std::vector<double> default_lr_grid() {
  std::vector<double> grid;
  for (int k = -6 * 8; k <= 1 * 8; ++k) grid.push_back(std::pow(10.0, k / 8.0));
  return grid;
}

ExperimentSpec parse_experiment(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ContractError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ContractError("config: top level must be an object");

  ExperimentSpec spec;
  spec.name = take<std::string>(root, "name", "");
  spec.restarts = take<std::size_t>(root, "restarts", 1);
  spec.max_steps = take_opt<std::size_t>(root, "max_steps");
  spec.max_epochs = take_opt<std::size_t>(root, "max_epochs");
  spec.seed_base = take<std::uint64_t>(root, "seed", 1);
  spec.stop_loss = take_opt<double>(root, "stop_loss");
  spec.log_every = take<std::size_t>(root, "log_every", 0);
  spec.threads = take<std::size_t>(root, "threads", 1);

  json prob = take<json>(root, "problem", json::object());
  json opt = take<json>(root, "optimizer", json::object());
  reject_leftovers(root, "top level");

  ProblemSpec& p = spec.problem;
  p.kind = problem_kind_from(take<std::string>(prob, "type", "regression"));
  p.samples = take<std::size_t>(prob, "samples", p.samples);
  p.batch_size = take<std::size_t>(prob, "batch_size", p.is_classification() ? 64 : 0);
  if (p.kind == ProblemKind::Regression) {
    p.kappa = take<double>(prob, "kappa", p.kappa);
    p.scale = take<int>(prob, "scale", p.scale);
    p.init_std = take<double>(prob, "init_std", p.init_std);
  } else {
    p.hidden = take<std::vector<std::size_t>>(prob, "hidden", p.hidden);
    if (p.kind == ProblemKind::Mnist) {
      p.images = take<std::string>(prob, "images", "");
      p.labels = take<std::string>(prob, "labels", "");
      p.data_seed = take<std::uint64_t>(prob, "fallback_seed", p.data_seed);
    } else {
      p.dim = take<std::size_t>(prob, "dim", p.dim);
      p.classes = take<std::size_t>(prob, "classes", p.classes);
      p.data_seed = take<std::uint64_t>(prob, "data_seed", p.data_seed);
    }
  }
  reject_leftovers(prob, "problem");

  OptimizerSpec& o = spec.optimizer;
  o.kind = optimizer_kind_from(take<std::string>(opt, "type", "l4adam"));
  if (is_l4(o.kind)) {
    L4Config& c = o.l4;
    c.alpha = take<double>(opt, "alpha", c.alpha);
    c.gamma = take<double>(opt, "gamma", c.gamma);
    c.gamma0 = take<double>(opt, "gamma0", c.gamma0);
    c.tau = take<double>(opt, "tau", c.tau);
    c.epsilon = take<double>(opt, "epsilon", c.epsilon);
    c.directions.tau_momentum = take<double>(opt, "tau_m", c.directions.tau_momentum);
    c.directions.tau_second_moment = take<double>(opt, "tau_s", c.directions.tau_second_moment);
    c.directions.denominator_guard = take<double>(opt, "guard", c.directions.denominator_guard);
    c.flavor = o.kind == OptimizerKind::L4Mom ? Flavor::Mom : Flavor::Adam;
  } else if (o.kind == OptimizerKind::Lma) {
    LmaConfig& c = o.lma;
    c.alpha = take<double>(opt, "alpha", c.alpha);
    c.lambda0 = take<double>(opt, "lambda0", c.lambda0);
    c.lambda_up = take<double>(opt, "lambda_up", c.lambda_up);
    c.lambda_down = take<double>(opt, "lambda_down", c.lambda_down);
    c.max_iters = take<std::size_t>(opt, "max_iters", c.max_iters);
    c.target_loss = take<double>(opt, "target_loss", c.target_loss);
  } else {
    BaselineConfig& c = o.baseline;
    c.lr = take<double>(opt, "lr", c.lr);
    c.beta = take<double>(opt, "beta", c.beta);
    const std::string form = take<std::string>(opt, "momentum_form", "accumulate");
    if (form == "accumulate") {
      c.momentum_form = MomentumForm::Accumulate;
    } else if (form == "dampen") {
      c.momentum_form = MomentumForm::Dampen;
    } else {
      throw ContractError("config: momentum_form must be 'accumulate' or 'dampen'");
    }
    c.beta1 = take<double>(opt, "beta1", c.beta1);
    c.beta2 = take<double>(opt, "beta2", c.beta2);
    c.eps_adam = take<double>(opt, "eps", c.eps_adam);
    auto grid = opt.find("lr_grid");
    if (grid != opt.end()) {
      if (grid->is_string() && grid->get<std::string>() == "default") {
        o.lr_grid = default_lr_grid();
      } else {
        o.lr_grid = take<std::vector<double>>(opt, "lr_grid", {});
      }
      opt.erase("lr_grid");
    }
  }
  reject_leftovers(opt, "optimizer");
  spec.validate();
  return spec;
}

std::string experiment_to_json(const ExperimentSpec& s) {
  json j;
  j["name"] = s.name;
  j["restarts"] = s.restarts;
  if (s.max_steps) j["max_steps"] = *s.max_steps;
  if (s.max_epochs) j["max_epochs"] = *s.max_epochs;
  j["seed"] = s.seed_base;
  if (s.stop_loss) j["stop_loss"] = *s.stop_loss;
  j["log_every"] = s.log_every;
  j["threads"] = s.threads;

  const ProblemSpec& p = s.problem;
  json prob;
  prob["type"] = to_string(p.kind);
  prob["samples"] = p.samples;
  prob["batch_size"] = p.batch_size;
  if (p.kind == ProblemKind::Regression) {
    prob["kappa"] = p.kappa;
    prob["scale"] = p.scale;
    prob["init_std"] = p.init_std;
  } else {
    prob["hidden"] = p.hidden;
    if (p.kind == ProblemKind::Mnist) {
      prob["images"] = p.images;
      prob["labels"] = p.labels;
      prob["fallback_seed"] = p.data_seed;
    } else {
      prob["dim"] = p.dim;
      prob["classes"] = p.classes;
      prob["data_seed"] = p.data_seed;
    }
  }
  j["problem"] = prob;

  const OptimizerSpec& o = s.optimizer;
  json opt;
  opt["type"] = to_string(o.kind);
  if (is_l4(o.kind)) {
    opt["alpha"] = o.l4.alpha;
    opt["gamma"] = o.l4.gamma;
    opt["gamma0"] = o.l4.gamma0;
    opt["tau"] = o.l4.tau;
    opt["epsilon"] = o.l4.epsilon;
    opt["tau_m"] = o.l4.directions.tau_momentum;
    opt["tau_s"] = o.l4.directions.tau_second_moment;
    opt["guard"] = o.l4.directions.denominator_guard;
  } else if (o.kind == OptimizerKind::Lma) {
    opt["alpha"] = o.lma.alpha;
    opt["lambda0"] = o.lma.lambda0;
    opt["lambda_up"] = o.lma.lambda_up;
    opt["lambda_down"] = o.lma.lambda_down;
    opt["max_iters"] = o.lma.max_iters;
    opt["target_loss"] = o.lma.target_loss;
  } else {
    opt["lr"] = o.baseline.lr;
    opt["beta"] = o.baseline.beta;
    opt["momentum_form"] =
        o.baseline.momentum_form == MomentumForm::Accumulate ? "accumulate" : "dampen";
    opt["beta1"] = o.baseline.beta1;
    opt["beta2"] = o.baseline.beta2;
    opt["eps"] = o.baseline.eps_adam;
    if (!o.lr_grid.empty()) opt["lr_grid"] = o.lr_grid;
  }
  j["optimizer"] = opt;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Running

RunResult run_single(const ExperimentSpec& spec, std::size_t restart, RunOptions options) {
  spec.validate();
  std::shared_ptr<const Dataset> data;
  if (spec.problem.is_classification()) data = load_classification(spec.problem).data;
  return run_single_with(spec, restart, options, data);
}

Trajectory aggregate_log_space(std::span<const RunResult> runs, std::size_t samples_per_step) {
  Trajectory t;
  std::vector<const RunResult*> kept;
  for (const auto& r : runs) {
    if (!r.diverged && !r.rows.empty()) kept.push_back(&r);
  }
  if (kept.empty()) return t;

  std::vector<std::size_t> grid;
  for (const auto* r : kept)
    for (const auto& row : r->rows) grid.push_back(row.step);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::vector<std::size_t> cursor(kept.size(), 0);
  for (std::size_t step : grid) {
    double sum_log = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const auto& rows = kept[k]->rows;
      while (cursor[k] + 1 < rows.size() && rows[cursor[k] + 1].step <= step) ++cursor[k];
      const double loss = std::max(rows[cursor[k]].batch_loss, kLossFloor);
      sum_log += std::log(loss);
      lo = std::min(lo, loss);
      hi = std::max(hi, loss);
    }
    t.steps.push_back(step);
    t.data_points.push_back(static_cast<double>(step) * static_cast<double>(samples_per_step));
    t.mean.push_back(std::exp(sum_log / static_cast<double>(kept.size())));
    t.min.push_back(lo);
    t.max.push_back(hi);
  }
  return t;
}

Summary run_experiment(const ExperimentSpec& spec_in) {
  spec_in.validate();
  Summary summary;
  summary.spec = spec_in;
  ExperimentSpec& spec = summary.spec;

  std::shared_ptr<const Dataset> data;
  summary.dataset = "regression";
  if (spec.problem.is_classification()) {
    auto loaded = load_classification(spec.problem);
    data = std::move(loaded.data);
    summary.dataset = loaded.source;
  }

  if (is_baseline(spec.optimizer.kind) && !spec.optimizer.lr_grid.empty()) {
    double best = std::numeric_limits<double>::infinity();
    std::optional<double> best_lr;
    for (double lr : spec.optimizer.lr_grid) {
      ExperimentSpec trial = spec;
      trial.optimizer.lr_grid.clear();
      trial.optimizer.baseline.lr = lr;
      const auto runs = run_restarts(trial, RunOptions{false}, data);
      const double score = log_mean_final(runs);
      summary.grid.push_back({lr, score});
      if (score < best || !best_lr) {
        best = score;
        best_lr = lr;
      }
    }
    summary.selected_lr = best_lr;
    spec.optimizer.baseline.lr = *best_lr;
    spec.optimizer.lr_grid.clear();
  }

  summary.runs = run_restarts(spec, RunOptions{true}, data);
  const std::size_t n = data ? data->size() : spec.problem.samples;
  const std::size_t per_step =
      spec.problem.batch_size == 0 ? n : std::min(spec.problem.batch_size, n);
  summary.trajectory = aggregate_log_space(summary.runs, per_step);
  return summary;
}

std::string summary_to_json(const Summary& summary) { return summary_json(summary).dump(2); }

Summary run(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
  Summary summary = run_experiment(spec);
  std::filesystem::create_directories(out_dir);
  for (const auto& r : summary.runs) write_metrics(r.rows, out_dir / (r.run_id + ".csv"));
  write_text_file(out_dir / "summary.json", summary_to_json(summary) + "\n");
  return summary;
}

std::vector<std::pair<std::size_t, Summary>> sweep_batch_size(
    const ExperimentSpec& spec, std::span<const std::size_t> sizes,
    const std::filesystem::path& out_dir) {
  if (!spec.problem.is_classification()) {
    throw ContractError("sweep_batch_size: problem must be batched (mnist or synthetic)");
  }
  std::vector<std::pair<std::size_t, Summary>> out;
  for (std::size_t size : sizes) {
    if (size == 0) throw ContractError("sweep_batch_size: batch sizes must be positive");
    ExperimentSpec s = spec;
    s.problem.batch_size = size;
    out.emplace_back(size, run(s, out_dir / ("bs" + std::to_string(size))));
  }
  if (!out_dir.empty()) write_text_file(out_dir / "sweep.json", sweep_to_json(out) + "\n");
  return out;
}

std::string sweep_to_json(std::span<const std::pair<std::size_t, Summary>> sweep) {
  json j = json::object();
  for (const auto& [size, summary] : sweep) j[std::to_string(size)] = summary_json(summary);
  return j.dump(2);
}

ComparisonTable tabulate(std::span<const Summary> summaries) {
  if (summaries.empty()) throw ContractError("compare: need at least one experiment");
  for (const auto& s : summaries) {
    if (!s.spec.problem.same_problem(summaries.front().spec.problem)) {
      throw ContractError("compare: experiments cover different problems (" +
                          std::string(to_string(s.spec.problem.kind)) + " vs " +
                          to_string(summaries.front().spec.problem.kind) + ")");
    }
  }
  ComparisonTable table;
  for (const auto& s : summaries) {
    ComparisonRow row;
    row.label = s.spec.optimizer.label();
    if (s.selected_lr) {
      row.label = std::string(to_string(s.spec.optimizer.kind)) + "(lr=" +
                  format_g(*s.selected_lr) + ")";
    }
    std::vector<double> steps;
    std::vector<double> secs;
    for (const auto& r : s.runs) {
      ++row.runs;
      if (r.steps_to_target) {
        ++row.converged;
        steps.push_back(static_cast<double>(*r.steps_to_target));
        secs.push_back(r.wallclock_s);
      }
    }
    row.steps_mean = mean_of(steps);
    row.steps_std = std_of(steps);
    row.seconds_mean = mean_of(secs);
    row.seconds_std = std_of(secs);
    row.log_mean_final_loss = log_mean_final(s.runs);
    table.rows.push_back(row);
  }
  return table;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream out;
  out << "optimizer,runs,converged,steps_mean,steps_std,seconds_mean,seconds_std,"
         "log_mean_final_loss\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.label << ',' << r.runs << ',' << r.converged << ',' << r.steps_mean << ','
        << r.steps_std << ',' << r.seconds_mean << ',' << r.seconds_std << ','
        << r.log_mean_final_loss << '\n';
  }
  return out.str();
}

std::string ComparisonTable::to_text() const {
  std::size_t width = std::string("Method").size();
  for (const auto& r : rows) width = std::max(width, r.label.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  std::string out = pad("Method", width) + " | " + pad("Steps", 18) + " | " + pad("Time (s)", 20) +
                    " | converged\n";
  out += std::string(width, '-') + "-+-" + std::string(18, '-') + "-+-" + std::string(20, '-') +
         "-+----------\n";
  for (const auto& r : rows) {
    std::string steps = "-";
    std::string time = "-";
    if (r.converged > 0) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.0f +- %.0f", r.steps_mean, r.steps_std);
      steps = buf;
      std::snprintf(buf, sizeof buf, "%.3g +- %.2g", r.seconds_mean, r.seconds_std);
      time = buf;
    }
    out += pad(r.label, width) + " | " + pad(steps, 18) + " | " + pad(time, 20) + " | " +
           std::to_string(r.converged) + "/" + std::to_string(r.runs) + "\n";
  }
  return out;
}

ComparisonTable compare(std::span<const ExperimentSpec> specs,
                        const std::filesystem::path& out_dir) {
  if (specs.empty()) throw ContractError("compare: need at least one experiment");
  for (const auto& s : specs) {
    if (!s.problem.same_problem(specs.front().problem)) {
      throw ContractError("compare: experiments cover different problems");
    }
  }
  std::vector<Summary> summaries;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::string dir = std::to_string(i) + "_" + sanitize(specs[i].optimizer.label());
    summaries.push_back(run(specs[i], out_dir / dir));
  }
  ComparisonTable table = tabulate(summaries);
  write_text_file(out_dir / "comparison.csv", table.to_csv());
  write_text_file(out_dir / "comparison.txt", table.to_text());
  return table;
}

}  // namespace l4
