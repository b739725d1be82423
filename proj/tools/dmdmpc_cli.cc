// Copyright 2026 The DMD-MPC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line runner. Uses only the C interface of libdmdmpc.
//
//   dmdmpc episode --env cartpole-continuous --gamma 0.01 --seed 3
//       --output summary.csv --trace trace.csv
//   dmdmpc sweep --config sweep.ini --gamma 0.01,10 --output sweep.csv

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "dmdmpc/c_api.h"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDegenerate = 3;

struct Options {
  std::string config_path;
  std::string env;
  std::string update;
  std::string loss;
  std::string param;
  std::string divergence;
  std::string gamma;
  std::string samples;
  std::string dynamics_samples;
  std::string horizon;
  std::string episode_length;
  std::string output;
  std::vector<std::string> sets;
  bool print_config = false;
  // episode
  std::string seed;
  std::string trace;
  // sweep
  std::string params;
  std::string seeds;
  std::string master_seed;
  std::string episodes;
};

int Report(dmd_status status, const char* what) {
  std::fprintf(stderr, "dmdmpc: %s: %s\n", what, dmd_last_error());
  switch (status) {
    case DMD_DEGENERATE_ESTIMATE: return kExitDegenerate;
    case DMD_PARSE_ERROR:
    case DMD_INVALID_ARGUMENT:
    case DMD_SHAPE_MISMATCH:
    case DMD_IO_ERROR: return kExitUsage;
    default: return kExitFailure;
  }
}

void AddCommonOptions(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "INI config file")
      ->check(CLI::ExistingFile);
  app->add_option("--env", o.env,
                  "cartpole-continuous | cartpole-discrete | lti-lqr | lti-leqr");
  app->add_option("--update", o.update, "dmd | quadratic-exact | mppi | cem");
  app->add_option("--loss", o.loss,
                  "expected-cost | prob-low-cost | prob-low-cost-fixed | "
                  "exp-utility");
  app->add_option("--param", o.param,
                  "loss parameter (elite fraction, C_max or lambda)");
  app->add_option("--divergence", o.divergence,
                  "default | kl-natural | kl-natural-mean | kl-expectation | "
                  "quadratic-identity | quadratic-fisher");
  app->add_option("--dynamics-samples", o.dynamics_samples,
                  "model noise realizations per control sample");
  app->add_option("--horizon", o.horizon, "planning horizon H");
  app->add_option("--steps", o.episode_length, "episode length T");
  app->add_option("--output,-o", o.output, "CSV output path");
  app->add_option("--set", o.sets, "section.key=value override (repeatable)");
  app->add_flag("--print-config", o.print_config,
                "print the resolved config and exit");
}

// Applies the config file, the named flags and then --set, in that order.
int BuildConfig(const Options& o, bool sweep, dmd_config* config) {
  dmd_status status;
  if (!o.config_path.empty()) {
    status = dmd_config_load_file(config, o.config_path.c_str());
    if (status != DMD_OK) return Report(status, "config");
  }
  const std::vector<std::pair<const char*, const std::string*>> flags = {
      {"experiment.env", &o.env},
      {"experiment.update", &o.update},
      {"controller.loss", &o.loss},
      {"controller.param", &o.param},
      {"controller.divergence", &o.divergence},
      {sweep ? "sweep.gamma" : "controller.gamma", &o.gamma},
      {sweep ? "sweep.n_samples" : "controller.n_samples", &o.samples},
      {"controller.n_dynamics_samples", &o.dynamics_samples},
      {"experiment.horizon", &o.horizon},
      {"experiment.episode_length", &o.episode_length},
      {"sweep.param", &o.params},
      {"experiment.seeds", &o.seeds},
      {"experiment.master_seed", &o.master_seed},
      {"experiment.episodes", &o.episodes},
  };
  for (const auto& [key, value] : flags) {
    if (value->empty()) continue;
    status = dmd_config_set(config, key, value->c_str());
    if (status != DMD_OK) return Report(status, key);
  }
  for (const std::string& item : o.sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "dmdmpc: --set expects key=value, got '%s'\n",
                   item.c_str());
      return kExitUsage;
    }
    const std::string key = item.substr(0, eq);
    status = dmd_config_set(config, key.c_str(), item.substr(eq + 1).c_str());
    if (status != DMD_OK) return Report(status, key.c_str());
  }
  status = dmd_config_validate(config);
  if (status != DMD_OK) return Report(status, "config");
  return 0;
}

int PrintConfig(const dmd_config* config) {
  size_t required = 0;
  dmd_config_dump(config, nullptr, 0, &required);
  std::string text(required, '\0');
  const dmd_status status =
      dmd_config_dump(config, text.data(), text.size(), &required);
  if (status != DMD_OK) return Report(status, "config");
  std::fputs(text.c_str(), stdout);
  return 0;
}

int RunEpisode(const Options& o, dmd_config* config) {
  uint64_t seed = 0;
  dmd_status status;
  if (o.seed.empty()) {
    status = dmd_config_episode_seed(config, 0, 0, &seed);
    if (status != DMD_OK) return Report(status, "seed");
  } else {
    try {
      seed = std::stoull(o.seed);
    } catch (const std::exception&) {
      std::fprintf(stderr, "dmdmpc: --seed expects an unsigned integer\n");
      return kExitUsage;
    }
  }
  dmd_episode* episode = nullptr;
  status = dmd_episode_run(config, seed, &episode);
  if (status != DMD_OK) return Report(status, "episode");
  double cost = 0.0;
  int success = 0;
  dmd_episode_cost(episode, &cost);
  dmd_episode_success(episode, &success);
  std::printf("seed=%llu episode_cost=%.17g success=%d\n",
              static_cast<unsigned long long>(seed), cost, success);
  int code = 0;
  if (!o.output.empty()) {
    status = dmd_episode_write_summary_csv(episode, o.output.c_str());
    if (status != DMD_OK) code = Report(status, "output");
  }
  if (code == 0 && !o.trace.empty()) {
    status = dmd_episode_write_csv(episode, o.trace.c_str());
    if (status != DMD_OK) code = Report(status, "trace");
  }
  dmd_episode_destroy(episode);
  return code;
}

int RunSweep(const Options& o, dmd_config* config) {
  if (o.output.empty()) {
    std::fprintf(stderr, "dmdmpc: sweep needs --output\n");
    return kExitUsage;
  }
  int failed = 0;
  const dmd_status status = dmd_sweep_run(config, o.output.c_str(), &failed);
  if (status != DMD_OK) return Report(status, "sweep");
  if (failed > 0) {
    std::fprintf(stderr,
                 "dmdmpc: %d episode(s) failed with a degenerate estimate; "
                 "see the failed rows in %s\n",
                 failed, o.output.c_str());
    return kExitDegenerate;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic mirror descent MPC experiment runner"};
  app.require_subcommand(1);
  Options o;

  CLI::App* episode = app.add_subcommand("episode", "run one closed-loop episode");
  AddCommonOptions(episode, o);
  episode->add_option("--gamma", o.gamma, "step size schedule (comma list)");
  episode->add_option("--samples", o.samples, "control samples per round");
  episode->add_option("--seed", o.seed, "episode seed (default: derived)");
  episode->add_option("--trace", o.trace, "per-step CSV output path");

  CLI::App* sweep = app.add_subcommand("sweep", "run a parameter sweep");
  AddCommonOptions(sweep, o);
  sweep->add_option("--gamma", o.gamma, "step sizes (comma list)");
  sweep->add_option("--samples", o.samples, "sample counts (comma list)");
  sweep->add_option("--params", o.params, "loss parameters (comma list)");
  sweep->add_option("--seeds", o.seeds, "explicit episode seeds (comma list)");
  sweep->add_option("--master-seed", o.master_seed, "master seed");
  sweep->add_option("--episodes", o.episodes, "episodes per cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version print and exit 0; every other parse error is usage.
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  const bool is_sweep = sweep->parsed();
  dmd_config* config = nullptr;
  if (dmd_config_create(&config) != DMD_OK) {
    return Report(DMD_INTERNAL_ERROR, "config");
  }
  int code = BuildConfig(o, is_sweep, config);
  if (code == 0) {
    if (o.print_config) {
      code = PrintConfig(config);
    } else {
      code = is_sweep ? RunSweep(o, config) : RunEpisode(o, config);
    }
  }
  dmd_config_destroy(config);
  return code;
}
