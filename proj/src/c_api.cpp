#include "l4/l4.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "l4/errors.hpp"
#include "l4/harness.hpp"
#include "l4/l4.hpp"

struct l4_optimizer {
  l4::L4Optimizer impl;
};

struct l4_experiment {
  l4::ExperimentSpec spec;
};

namespace {

thread_local std::string g_last_error;

l4_status fail(l4_status status, const char* what) {
  g_last_error = what;
  return status;
}

template <typename F>
l4_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return L4_OK;
  } catch (const l4::ContractError& e) {
    return fail(L4_ERR_INVALID_ARGUMENT, e.what());
  } catch (const l4::DivergenceError& e) {
    return fail(L4_ERR_DIVERGED, e.what());
  } catch (const l4::ParseError& e) {
    return fail(L4_ERR_PARSE, e.what());
  } catch (const l4::IoError& e) {
    return fail(L4_ERR_IO, e.what());
  } catch (const l4::NumericError& e) {
    return fail(L4_ERR_NUMERIC, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(L4_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(L4_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(L4_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) throw l4::ContractError(what);
}

}  // namespace

extern "C" {

const char* l4_version(void) { return "0.1.0"; }

const char* l4_last_error(void) { return g_last_error.c_str(); }

const char* l4_status_name(l4_status status) {
  switch (status) {
    case L4_OK: return "ok";
    case L4_ERR_INVALID_ARGUMENT: return "invalid argument";
    case L4_ERR_DIVERGED: return "diverged";
    case L4_ERR_PARSE: return "parse error";
    case L4_ERR_IO: return "i/o error";
    case L4_ERR_NUMERIC: return "numeric error";
    case L4_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

void l4_string_free(char* s) { std::free(s); }

void l4_config_default(l4_config* out) {
  if (!out) return;
  const l4::L4Config d;
  out->alpha = d.alpha;
  out->gamma = d.gamma;
  out->gamma0 = d.gamma0;
  out->tau = d.tau;
  out->epsilon = d.epsilon;
  out->flavor = L4_FLAVOR_ADAM;
  out->tau_m = d.directions.tau_momentum;
  out->tau_s = d.directions.tau_second_moment;
}

l4_status l4_optimizer_create(const l4_config* config, size_t dim, l4_optimizer** out) {
  return guarded([&] {
    require(config && out, "l4_optimizer_create: null argument");
    *out = nullptr;
    require(config->flavor == L4_FLAVOR_MOM || config->flavor == L4_FLAVOR_ADAM,
            "l4_optimizer_create: unknown flavor");
    l4::L4Config c;
    c.alpha = config->alpha;
    c.gamma = config->gamma;
    c.gamma0 = config->gamma0;
    c.tau = config->tau;
    c.epsilon = config->epsilon;
    c.flavor = config->flavor == L4_FLAVOR_MOM ? l4::Flavor::Mom : l4::Flavor::Adam;
    c.directions.tau_momentum = config->tau_m;
    c.directions.tau_second_moment = config->tau_s;
    *out = new l4_optimizer{l4::L4Optimizer(c, dim)};
  });
}

void l4_optimizer_destroy(l4_optimizer* opt) { delete opt; }

l4_status l4_optimizer_step(l4_optimizer* opt, double loss, const double* grad, double* params,
                            size_t dim, l4_step_record* rec) {
  return guarded([&] {
    require(opt && grad && params, "l4_optimizer_step: null argument");
    const l4::StepRecord r = opt->impl.step(loss, {grad, dim}, {params, dim});
    if (rec) *rec = l4_step_record{r.eta, r.loss, r.lmin_used, r.gv};
  });
}

l4_status l4_optimizer_lmin(const l4_optimizer* opt, double* out) {
  return guarded([&] {
    require(opt && out, "l4_optimizer_lmin: null argument");
    *out = opt->impl.lmin();
  });
}

l4_status l4_optimizer_steps(const l4_optimizer* opt, uint64_t* out) {
  return guarded([&] {
    require(opt && out, "l4_optimizer_steps: null argument");
    *out = opt->impl.steps();
  });
}

l4_status l4_experiment_parse(const char* json, l4_experiment** out) {
  return guarded([&] {
    require(json && out, "l4_experiment_parse: null argument");
    *out = nullptr;
    *out = new l4_experiment{l4::parse_experiment(json)};
  });
}

void l4_experiment_destroy(l4_experiment* exp) { delete exp; }

l4_status l4_experiment_set_seed(l4_experiment* exp, uint64_t seed) {
  return guarded([&] {
    require(exp, "l4_experiment_set_seed: null experiment");
    exp->spec.seed_base = seed;
  });
}

l4_status l4_experiment_set_restarts(l4_experiment* exp, size_t restarts) {
  return guarded([&] {
    require(exp, "l4_experiment_set_restarts: null experiment");
    require(restarts >= 1, "l4_experiment_set_restarts: restarts must be >= 1");
    exp->spec.restarts = restarts;
  });
}

l4_status l4_experiment_to_json(const l4_experiment* exp, char** out) {
  return guarded([&] {
    require(exp && out, "l4_experiment_to_json: null argument");
    *out = dup_string(l4::experiment_to_json(exp->spec));
  });
}

l4_status l4_experiment_run(const l4_experiment* exp, const char* out_dir, char** summary_json) {
  return guarded([&] {
    require(exp && out_dir, "l4_experiment_run: null argument");
    const l4::Summary s = l4::run(exp->spec, out_dir);
    if (summary_json) *summary_json = dup_string(l4::summary_to_json(s));
  });
}

l4_status l4_experiment_sweep(const l4_experiment* exp, const size_t* sizes, size_t count,
                              const char* out_dir, char** sweep_json) {
  return guarded([&] {
    require(exp && out_dir && (sizes || count == 0), "l4_experiment_sweep: null argument");
    const std::vector<std::size_t> v(sizes, sizes + count);
    const auto sweep = l4::sweep_batch_size(exp->spec, v, out_dir);
    if (sweep_json) *sweep_json = dup_string(l4::sweep_to_json(sweep));
  });
}

l4_status l4_experiment_compare(const l4_experiment* const* exps, size_t count,
                                const char* out_dir, char** table_text) {
  return guarded([&] {
    require(exps && out_dir, "l4_experiment_compare: null argument");
    std::vector<l4::ExperimentSpec> specs;
    for (size_t i = 0; i < count; ++i) {
      require(exps[i] != nullptr, "l4_experiment_compare: null experiment");
      specs.push_back(exps[i]->spec);
    }
    const l4::ComparisonTable table = l4::compare(specs, out_dir);
    if (table_text) *table_text = dup_string(table.to_text());
  });
}

}  // extern "C"
