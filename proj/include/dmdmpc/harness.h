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

// Closed-loop episodes and parameter sweeps.
//
// Each round t: sample n control sequences from theta~_t, roll them out
// through the model (K noise realizations shared across sequences), estimate
// the loss gradient, take one proximal step to theta_t, apply the mode's first
// control to the true system, and shift theta_t into theta~_{t+1}.

#ifndef DMDMPC_HARNESS_H_
#define DMDMPC_HARNESS_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dmdmpc/core.h"
#include "dmdmpc/losses.h"
#include "dmdmpc/simulation.h"
#include "dmdmpc/updates.h"

namespace dmdmpc {

enum class Environment {
  kCartpoleContinuous,
  kCartpoleDiscrete,
  kLtiLqr,
  kLtiLeqr,
};

enum class UpdateRule {
  kDmd,             // DmdStep with the configured divergence
  kQuadraticExact,  // exact minimizer of the analytic loss (LTI only)
  kMppi,            // MppiStep, exponential-utility loss only
  kCem,             // CemStep, probability-of-low-cost loss only
};

struct LtiEnvConfig {
  Matrix a = Matrix::Identity(1, 1);
  Matrix b = Matrix::Identity(1, 1);
  Matrix w = Matrix::Identity(1, 1) * 0.01;
  Matrix q = Matrix::Identity(1, 1);
  Matrix r = Matrix::Identity(1, 1);
  Matrix q_end = Matrix::Identity(1, 1);
  Vector x0 = Vector::Ones(1);
};

// Tail fill used by the shift between rounds.
enum class ShiftFill {
  kRepeatLast,  // copy the previous last step
  kInitial,     // reset to the initial distribution
};

struct SweepGrid {
  std::vector<double> gammas;    // empty: the base config's first step size
  std::vector<int> n_samples;    // empty: the base config's sample count
  std::vector<double> params;    // empty: the base loss parameter
};

struct ExperimentConfig {
  Environment env = Environment::kCartpoleContinuous;
  LossSpec loss = ExpectedCost{};
  // Unset: KLNatural (mean only) for Gaussians, KLExpectation for categoricals.
  std::optional<DivergenceSpec> divergence;
  UpdateRule update = UpdateRule::kDmd;
  std::vector<double> gamma = {1e-2};  // schedule, see StepSchedule::Indexed
  int n_samples = 1000;
  int n_dynamics_samples = 10;
  int horizon = 50;
  int episode_length = 500;
  int episodes = 10;
  uint64_t master_seed = 0;
  std::vector<uint64_t> seeds;  // explicit episode seeds; empty: derived
  ShiftFill shift_fill = ShiftFill::kRepeatLast;
  double control_std = 2.0;  // Gaussian controller standard deviation
  int success_window = 100;
  CartpoleConfig cartpole;
  LtiEnvConfig lti;
  SweepGrid sweep;
  std::string output;

  void Validate() const;
  Family family() const;
  DivergenceSpec ResolvedDivergence() const;
  Coordinates GradientCoordinates() const;
  // theta~_0, one step repeated over the horizon.
  BasicParams InitialStep() const;
};

// Deterministic 64-bit mixing of a seed with two counters.
uint64_t DeriveSeed(uint64_t seed, uint64_t a, uint64_t b);

// Seed of episode `episode` in sweep cell `cell`.
uint64_t EpisodeSeed(const ExperimentConfig& config, int cell, int episode);

struct StepRecord {
  int t = 0;
  Vector control;  // applied control value (discrete: the commanded force)
  int control_index = -1;
  Vector state;    // x_t, before the control is applied
  double cost = 0.0;
  double loss_estimate = 0.0;  // sample estimate of l_t at theta~_t
  double effective_sample_size = 0.0;
  // Analytic l_t at the played theta_t (LTI environments), NaN otherwise.
  double planned_loss = 0.0;
};

struct EpisodeRecord {
  uint64_t seed = 0;
  std::vector<StepRecord> steps;
  Vector final_state;
  double episode_cost = 0.0;
  bool success = false;
  // Rounds where a covariance update left the feasible set and the mean-only
  // update was used instead.
  int infeasible_fallbacks = 0;
};

EpisodeRecord RunEpisode(const ExperimentConfig& config, uint64_t seed);

// Cartpole: |phi_t - pi| <= angle_threshold on the last success_window
// states. Other environments: always false.
bool SwingUpSuccess(const ExperimentConfig& config,
                    const std::vector<StepRecord>& steps);

struct SweepRow {
  std::string env;
  std::string loss;
  double gamma = 0.0;
  int n_samples = 0;
  std::optional<double> param;
  uint64_t seed = 0;
  double episode_cost = 0.0;
  bool success = false;
  bool failed = false;
  std::string error;
};

struct SweepCell {
  double gamma;
  int n_samples;
  std::optional<double> param;
};

std::vector<SweepCell> ExpandGrid(const ExperimentConfig& config);

// Config for one cell: the cell's gamma becomes a constant schedule.
ExperimentConfig CellConfig(const ExperimentConfig& config,
                            const SweepCell& cell);

// Runs every (cell, episode) pair, in parallel; rows are ordered by cell, then
// episode. Failed episodes become rows with failed set.
std::vector<SweepRow> RunSweep(const ExperimentConfig& config);

inline constexpr const char* kSweepCsvHeader =
    "env,loss,gamma,n_samples,param,seed,episode_cost,success,failed";

std::string FormatDouble(double value);

// CSV with the resolved config as leading '#' comment lines.
void WriteSweepCsv(std::ostream& out, const ExperimentConfig& config,
                   const std::vector<SweepRow>& rows);
// Per-step trace of one episode.
void WriteEpisodeCsv(std::ostream& out, const ExperimentConfig& config,
                     const EpisodeRecord& record);
SweepRow EpisodeRow(const ExperimentConfig& config, const EpisodeRecord& record);

// --- config (config.cc) ---------------------------------------------------

// Applies `section.key = value`. Throws kParse on unknown keys or bad values.
void SetConfigValue(ExperimentConfig& config, const std::string& key,
                    const std::string& value);
// INI file with [experiment], [controller], [cartpole], [lti], [sweep].
ExperimentConfig LoadConfigFile(const std::string& path);
void ApplyConfigText(ExperimentConfig& config, const std::string& text);
// Every key in canonical order with its resolved value.
std::vector<std::pair<std::string, std::string>> DumpConfig(
    const ExperimentConfig& config);
// FNV-1a over the dumped config.
uint64_t ConfigHash(const ExperimentConfig& config);

std::string EnvironmentName(Environment env);
std::string LossName(const LossSpec& loss);
std::optional<double> LossParam(const LossSpec& loss);
LossSpec WithLossParam(const LossSpec& loss, double param);

}  // namespace dmdmpc

#endif  // DMDMPC_HARNESS_H_
