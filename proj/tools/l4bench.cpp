// Command-line experiment runner on top of the l4opt C API.
//
//   l4bench run     --config exp.json --out results/ [--seed N] [--restarts K]
//   l4bench sweep   --config exp.json --out results/ --sizes 8,16,32,64
//   l4bench compare --configs a.json,b.json,c.json --out results/

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "l4/l4.h"

namespace {

struct Experiment {
  l4_experiment* handle = nullptr;
  Experiment() = default;
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;
  ~Experiment() { l4_experiment_destroy(handle); }
};

int report(l4_status status, const char* what) {
  std::cerr << "l4bench: " << what << " failed (" << l4_status_name(status)
            << "): " << l4_last_error() << "\n";
  return 1 + static_cast<int>(status);
}

bool read_file(const std::string& path, std::string& out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  std::ostringstream ss;
  ss << f.rdbuf();
  out = ss.str();
  return true;
}

int load(const std::string& path, std::optional<std::uint64_t> seed,
         std::optional<std::size_t> restarts, Experiment& exp) {
  std::string text;
  if (!read_file(path, text)) {
    std::cerr << "l4bench: cannot read config " << path << "\n";
    return 1 + L4_ERR_IO;
  }
  if (auto st = l4_experiment_parse(text.c_str(), &exp.handle); st != L4_OK) {
    return report(st, ("parsing " + path).c_str());
  }
  if (seed) {
    if (auto st = l4_experiment_set_seed(exp.handle, *seed); st != L4_OK) return report(st, "--seed");
  }
  if (restarts) {
    if (auto st = l4_experiment_set_restarts(exp.handle, *restarts); st != L4_OK) {
      return report(st, "--restarts");
    }
  }
  return 0;
}

void print_and_free(char* s) {
  if (s) std::cout << s << "\n";
  l4_string_free(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"l4bench: loss-linearized stepsize adaptation experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(l4_version()));

  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> restarts;
  std::vector<std::size_t> sizes;
  std::vector<std::string> configs;

  auto* run = app.add_subcommand("run", "Run an experiment (all restarts)");
  run->add_option("--config", config, "Experiment JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Base seed (restart r uses seed + r)");
  run->add_option("--restarts", restarts, "Number of restarts")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "Repeat an experiment over batch sizes");
  sweep->add_option("--config", config, "Experiment JSON file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "Output directory")->required();
  sweep->add_option("--sizes", sizes, "Comma-separated batch sizes")
      ->delimiter(',')
      ->default_str("8,16,32,64");
  sweep->add_option("--seed", seed, "Base seed");
  sweep->add_option("--restarts", restarts, "Number of restarts")->check(CLI::PositiveNumber);

  auto* cmp = app.add_subcommand("compare", "Tabulate several experiments on one problem");
  cmp->add_option("--configs", configs, "Comma-separated experiment JSON files")
      ->required()
      ->delimiter(',')
      ->check(CLI::ExistingFile);
  cmp->add_option("--out", out_dir, "Output directory")->required();
  cmp->add_option("--seed", seed, "Base seed");
  cmp->add_option("--restarts", restarts, "Number of restarts")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    Experiment exp;
    if (int rc = load(config, seed, restarts, exp)) return rc;
    char* summary = nullptr;
    if (auto st = l4_experiment_run(exp.handle, out_dir.c_str(), &summary); st != L4_OK) {
      return report(st, "run");
    }
    print_and_free(summary);
    return 0;
  }

  if (*sweep) {
    if (sizes.empty()) sizes = {8, 16, 32, 64};
    Experiment exp;
    if (int rc = load(config, seed, restarts, exp)) return rc;
    char* result = nullptr;
    if (auto st = l4_experiment_sweep(exp.handle, sizes.data(), sizes.size(), out_dir.c_str(),
                                      &result);
        st != L4_OK) {
      return report(st, "sweep");
    }
    print_and_free(result);
    return 0;
  }

  std::vector<Experiment> exps(configs.size());
  std::vector<const l4_experiment*> handles;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (int rc = load(configs[i], seed, restarts, exps[i])) return rc;
    handles.push_back(exps[i].handle);
  }
  char* table = nullptr;
  if (auto st = l4_experiment_compare(handles.data(), handles.size(), out_dir.c_str(), &table);
      st != L4_OK) {
    return report(st, "compare");
  }
  print_and_free(table);
  return 0;
}
