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

#include "dmdmpc/harness.h"

#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>

#include <tbb/parallel_for.h>

#include "dmdmpc/analytic.h"
#include "dmdmpc/error.h"
#include "overloaded.h"

namespace dmdmpc {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool IsCartpole(Environment env) {
  return env == Environment::kCartpoleContinuous ||
         env == Environment::kCartpoleDiscrete;
}

int ControlDim(const ExperimentConfig& config) {
  return IsCartpole(config.env) ? 1 : static_cast<int>(config.lti.b.cols());
}

uint64_t SplitMix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Models, cost and analytic structure for one episode.
struct Plant {
  std::unique_ptr<DynamicsModel> model;
  std::unique_ptr<DynamicsModel> env;
  std::unique_ptr<CostModel> cost;
  Vector x0;
  std::optional<StackedSystem> stacked;
};

Plant MakePlant(const ExperimentConfig& config) {
  Plant p;
  if (IsCartpole(config.env)) {
    const CartpoleConfig& c = config.cartpole;
    p.model = std::make_unique<CartpoleDynamics>(c, c.pole_length_model);
    p.env = std::make_unique<CartpoleDynamics>(c, c.pole_length_true);
    p.cost = std::make_unique<CartpoleCost>(c.angle_threshold);
    p.x0 = Vector::Zero(4);
    return p;
  }
  const LtiEnvConfig& l = config.lti;
  p.model = std::make_unique<LtiDynamics>(l.a, l.b, l.w);
  p.env = std::make_unique<LtiDynamics>(l.a, l.b, l.w);
  p.cost = std::make_unique<QuadraticCost>(l.q, l.r, l.q_end);
  p.x0 = l.x0;
  p.stacked = BuildStacked(LtiSystem{l.a, l.b, l.w}, l.q, l.r, l.q_end,
                           config.horizon);
  return p;
}

QuadraticLoss AnalyticLoss(const ExperimentConfig& config,
                           const StackedSystem& stacked, const Vector& x) {
  if (config.env == Environment::kLtiLqr) return LqrQuadratic(stacked, x);
  return LeqrQuadratic(stacked, x, std::get<ExpUtility>(config.loss).lambda);
}

// One proximal update of theta~ from the batch; falls back to a mean-only step
// when a covariance update is infeasible.
HorizonParams Update(const ExperimentConfig& config, const HorizonParams& prior,
                     const RolloutBatch& batch, const GradientEstimate& est,
                     double gamma, int& fallbacks) {
  switch (config.update) {
    case UpdateRule::kMppi:
      return MppiStep(prior, batch, std::get<ExpUtility>(config.loss).lambda,
                      gamma);
    case UpdateRule::kCem: {
      const double c_max =
          ResolveThreshold(std::get<ProbLowCost>(config.loss), batch.costs);
      try {
        return CemStep(prior, batch, c_max);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kInfeasibleStep) throw;
        ++fallbacks;
        return GaussianMomentStep(prior, batch.sequences, est.weights, 1.0,
                                  false);
      }
    }
    case UpdateRule::kDmd:
    case UpdateRule::kQuadraticExact:
      break;
  }
  const DivergenceSpec divergence = config.ResolvedDivergence();
  try {
    return DmdStep(prior, est.direction, divergence, gamma);
  } catch (const Error& e) {
    const auto* kl = std::get_if<KLNatural>(&divergence);
    if (e.code() != ErrorCode::kInfeasibleStep || kl == nullptr ||
        !kl->update_covariance) {
      throw;
    }
    ++fallbacks;
    return DmdStep(prior, est.direction, KLNatural{false}, gamma);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

Family ExperimentConfig::family() const {
  return env == Environment::kCartpoleDiscrete ? Family::kCategorical
                                               : Family::kGaussian;
}

DivergenceSpec ExperimentConfig::ResolvedDivergence() const {
  if (divergence) return *divergence;
  if (family() == Family::kCategorical) return KLExpectation{};
  return KLNatural{false};
}

Coordinates ExperimentConfig::GradientCoordinates() const {
  if (family() == Family::kCategorical) {
    return Coordinates::kCategoricalExpectation;
  }
  const DivergenceSpec div = ResolvedDivergence();
  return std::holds_alternative<KLNatural>(div) ? Coordinates::kGaussianNatural
                                                : Coordinates::kGaussianMean;
}

BasicParams ExperimentConfig::InitialStep() const {
  switch (env) {
    case Environment::kCartpoleContinuous:
      return GaussianParams::Isotropic(Vector::Zero(1), control_std);
    case Environment::kCartpoleDiscrete:
      return CategoricalParams::Uniform(
          static_cast<int>(cartpole.discrete_forces.size()));
    case Environment::kLtiLqr:
    case Environment::kLtiLeqr:
      break;
  }
  return GaussianParams::Isotropic(Vector::Zero(lti.b.cols()), control_std);
}

void ExperimentConfig::Validate() const {
  Require(n_samples >= 1 && n_dynamics_samples >= 1 && horizon >= 1 &&
              episode_length >= 1 && episodes >= 1 && success_window >= 1,
          ErrorCode::kInvalidArgument, "counts must be at least 1");
  Require(seeds.empty() || static_cast<int>(seeds.size()) >= episodes,
          ErrorCode::kInvalidArgument, "fewer explicit seeds than episodes");
  Require(control_std > 0.0 && std::isfinite(control_std),
          ErrorCode::kInvalidArgument, "control_std must be positive");
  StepSchedule::Indexed(gamma);
  ValidateLoss(loss);
  if (IsCartpole(env)) {
    cartpole.Validate();
  } else {
    LtiSystem{lti.a, lti.b, lti.w}.Validate();
    Require(lti.x0.size() == lti.a.rows(), ErrorCode::kShapeMismatch,
            "lti: x0 dimension");
    BuildStacked(LtiSystem{lti.a, lti.b, lti.w}, lti.q, lti.r, lti.q_end, 1);
  }
  if (env == Environment::kLtiLeqr) {
    Require(std::holds_alternative<ExpUtility>(loss),
            ErrorCode::kInvalidArgument,
            "lti-leqr needs the exponential-utility loss");
  }
  const bool gaussian = family() == Family::kGaussian;
  switch (update) {
    case UpdateRule::kQuadraticExact:
      Require(!IsCartpole(env), ErrorCode::kInvalidArgument,
              "quadratic-exact updates need an LTI environment");
      break;
    case UpdateRule::kMppi:
      Require(gaussian && std::holds_alternative<ExpUtility>(loss),
              ErrorCode::kInvalidArgument,
              "mppi needs a Gaussian controller and exponential utility");
      break;
    case UpdateRule::kCem:
      Require(gaussian && std::holds_alternative<ProbLowCost>(loss),
              ErrorCode::kInvalidArgument,
              "cem needs a Gaussian controller and probability of low cost");
      break;
    case UpdateRule::kDmd: {
      const DivergenceSpec div = ResolvedDivergence();
      const bool ok = std::visit(Overloaded{
          [&](const KLExpectation&) { return !gaussian; },
          [&](const KLNatural&) { return gaussian; },
          [&](const QuadraticCustom& c) {
            return gaussian && c.a.rows() == horizon * ControlDim(*this);
          },
          [](const auto&) { return true; }}, div);
      Require(ok, ErrorCode::kInvalidArgument,
              "divergence does not fit the controller distribution");
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Seeding

uint64_t DeriveSeed(uint64_t seed, uint64_t a, uint64_t b) {
  return SplitMix(SplitMix(SplitMix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

uint64_t EpisodeSeed(const ExperimentConfig& config, int cell, int episode) {
  if (!config.seeds.empty()) return config.seeds.at(episode);
  return DeriveSeed(config.master_seed, static_cast<uint64_t>(cell),
                    static_cast<uint64_t>(episode));
}

// ---------------------------------------------------------------------------
// Episodes

EpisodeRecord RunEpisode(const ExperimentConfig& config, uint64_t seed) {
  config.Validate();
  const Plant plant = MakePlant(config);
  const StepSchedule schedule = StepSchedule::Indexed(config.gamma);
  const BasicParams initial = config.InitialStep();
  const ShiftPolicy shift = config.shift_fill == ShiftFill::kInitial
                                ? ShiftPolicy::Default(initial)
                                : ShiftPolicy::RepeatLast();
  const Coordinates coords = config.GradientCoordinates();
  BatchOptions options;
  options.dynamics_samples =
      plant.model->deterministic() ? 1 : config.n_dynamics_samples;
  options.keep_trajectories = false;

  EpisodeRecord record;
  record.seed = seed;
  record.steps.reserve(config.episode_length);
  HorizonParams prior = HorizonParams::Repeat(initial, config.horizon);
  Vector x = plant.x0;
  std::vector<double> env_noise(plant.env->noise_dim());

  for (int t = 0; t < config.episode_length; ++t) {
    StepRecord row;
    row.t = t;
    row.state = x;
    row.planned_loss = kNaN;
    const double gamma = schedule.at(t);
    HorizonParams posterior = prior;
    try {
      if (config.update == UpdateRule::kQuadraticExact) {
        const QuadraticLoss quad = AnalyticLoss(config, *plant.stacked, x);
        posterior = QuadraticExactStep(prior, quad);
        row.loss_estimate = quad.Evaluate(StackMeans(prior));
        row.effective_sample_size = kNaN;
      } else {
        Rng rng(DeriveSeed(seed, t, 0));
        const std::vector<ControlSequence> samples =
            SampleControls(prior, config.n_samples, rng);
        const RolloutBatch batch =
            RollOutBatch(*plant.model, *plant.cost, x, samples,
                         DeriveSeed(seed, t, 1), options);
        const GradientEstimate est =
            EstimateGradient(batch, prior, config.loss, coords);
        row.loss_estimate = est.loss_value;
        row.effective_sample_size = est.effective_sample_size;
        posterior =
            Update(config, prior, batch, est, gamma, record.infeasible_fallbacks);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateEstimate) throw;
      Fail(ErrorCode::kDegenerateEstimate,
           "round " + std::to_string(t) + ": " + e.what());
    }
    if (plant.stacked) {
      row.planned_loss = AnalyticLoss(config, *plant.stacked, x)
                             .Evaluate(StackMeans(posterior));
    }

    const ControlSequence plan = Mode(posterior);
    const ControlRef u = plan.at(0);
    if (plan.discrete()) {
      row.control_index = u.index;
      const auto& cartpole = static_cast<const CartpoleDynamics&>(*plant.env);
      row.control = Vector::Constant(1, cartpole.Force(u));
    } else {
      row.control = plan.value(0);
    }
    row.cost = plant.cost->Stage(x, u);
    Rng env_rng(DeriveSeed(seed, t, 2));
    std::normal_distribution<double> normal;
    for (double& w : env_noise) w = normal(env_rng);
    x = plant.env->Step(x, u, env_noise);

    record.episode_cost += row.cost;
    record.steps.push_back(std::move(row));
    prior = Shift(posterior, shift);
  }
  record.final_state = x;
  record.success = SwingUpSuccess(config, record.steps);
  return record;
}

bool SwingUpSuccess(const ExperimentConfig& config,
                    const std::vector<StepRecord>& steps) {
  if (!IsCartpole(config.env)) return false;
  const int n = static_cast<int>(steps.size());
  if (n < config.success_window) return false;
  for (int t = n - config.success_window; t < n; ++t) {
    const double phi = steps[t].state[1];
    if (!(std::abs(phi - std::numbers::pi) <= config.cartpole.angle_threshold)) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<SweepCell> ExpandGrid(const ExperimentConfig& config) {
  const std::vector<double> gammas =
      config.sweep.gammas.empty() ? std::vector<double>{config.gamma.front()}
                                  : config.sweep.gammas;
  const std::vector<int> samples = config.sweep.n_samples.empty()
                                       ? std::vector<int>{config.n_samples}
                                       : config.sweep.n_samples;
  std::vector<std::optional<double>> params;
  if (config.sweep.params.empty()) {
    params.push_back(LossParam(config.loss));
  } else {
    for (double p : config.sweep.params) params.emplace_back(p);
  }
  std::vector<SweepCell> cells;
  for (int n : samples) {
    for (const auto& p : params) {
      for (double g : gammas) cells.push_back({g, n, p});
    }
  }
  return cells;
}

ExperimentConfig CellConfig(const ExperimentConfig& config,
                            const SweepCell& cell) {
  ExperimentConfig c = config;
  c.gamma = {cell.gamma};
  c.n_samples = cell.n_samples;
  if (cell.param) c.loss = WithLossParam(config.loss, *cell.param);
  c.sweep = {};
  return c;
}

std::vector<SweepRow> RunSweep(const ExperimentConfig& config) {
  config.Validate();
  const std::vector<SweepCell> cells = ExpandGrid(config);
  std::vector<ExperimentConfig> cell_configs;
  for (const SweepCell& cell : cells) {
    cell_configs.push_back(CellConfig(config, cell));
    cell_configs.back().Validate();
  }
  const int episodes = config.episodes;
  std::vector<SweepRow> rows(cells.size() * episodes);
  tbb::parallel_for(size_t{0}, rows.size(), [&](size_t job) {
    const int cell = static_cast<int>(job / episodes);
    const int episode = static_cast<int>(job % episodes);
    const ExperimentConfig& c = cell_configs[cell];
    const uint64_t seed = EpisodeSeed(config, cell, episode);
    try {
      rows[job] = EpisodeRow(c, RunEpisode(c, seed));
    } catch (const Error& e) {
      SweepRow row;
      row.env = EnvironmentName(c.env);
      row.loss = LossName(c.loss);
      row.gamma = c.gamma.front();
      row.n_samples = c.n_samples;
      row.param = LossParam(c.loss);
      row.seed = seed;
      row.episode_cost = kNaN;
      row.failed = true;
      row.error = e.what();
      rows[job] = std::move(row);
    }
  });
  return rows;
}

SweepRow EpisodeRow(const ExperimentConfig& config,
                    const EpisodeRecord& record) {
  SweepRow row;
  row.env = EnvironmentName(config.env);
  row.loss = LossName(config.loss);
  row.gamma = config.gamma.front();
  row.n_samples = config.n_samples;
  row.param = LossParam(config.loss);
  row.seed = record.seed;
  row.episode_cost = record.episode_cost;
  row.success = record.success;
  return row;
}

// ---------------------------------------------------------------------------
// CSV

std::string FormatDouble(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace {

void WriteConfigComments(std::ostream& out, const ExperimentConfig& config) {
  for (const auto& [key, value] : DumpConfig(config)) {
    out << "# " << key << " = " << value << '\n';
  }
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(ConfigHash(config)));
  out << "# config_hash = " << hash << '\n';
}

}  // namespace

void WriteSweepCsv(std::ostream& out, const ExperimentConfig& config,
                   const std::vector<SweepRow>& rows) {
  WriteConfigComments(out, config);
  out << kSweepCsvHeader << '\n';
  for (const SweepRow& r : rows) {
    out << r.env << ',' << r.loss << ',' << FormatDouble(r.gamma) << ','
        << r.n_samples << ',' << (r.param ? FormatDouble(*r.param) : "") << ','
        << r.seed << ',' << FormatDouble(r.episode_cost) << ','
        << (r.success ? 1 : 0) << ',' << (r.failed ? 1 : 0) << '\n';
  }
  for (const SweepRow& r : rows) {
    if (r.failed) out << "# failed seed " << r.seed << ": " << r.error << '\n';
  }
}

void WriteEpisodeCsv(std::ostream& out, const ExperimentConfig& config,
                     const EpisodeRecord& record) {
  WriteConfigComments(out, config);
  out << "# seed = " << record.seed << '\n';
  if (record.steps.empty()) return;
  const auto m = record.steps.front().control.size();
  const auto n = record.steps.front().state.size();
  out << 't';
  for (Eigen::Index i = 0; i < m; ++i) out << ",u" << i;
  out << ",control_index";
  for (Eigen::Index i = 0; i < n; ++i) out << ",x" << i;
  out << ",cost,loss_estimate,ess,planned_loss\n";
  for (const StepRecord& s : record.steps) {
    out << s.t;
    for (Eigen::Index i = 0; i < m; ++i) out << ',' << FormatDouble(s.control[i]);
    out << ',' << s.control_index;
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << FormatDouble(s.state[i]);
    out << ',' << FormatDouble(s.cost) << ',' << FormatDouble(s.loss_estimate)
        << ',' << FormatDouble(s.effective_sample_size) << ','
        << FormatDouble(s.planned_loss) << '\n';
  }
}

}  // namespace dmdmpc
