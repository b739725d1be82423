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

#include "dmdmpc/c_api.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "dmdmpc/error.h"
#include "dmdmpc/harness.h"

struct dmd_config {
  dmdmpc::ExperimentConfig config;
};

struct dmd_episode {
  dmdmpc::ExperimentConfig config;
  dmdmpc::EpisodeRecord record;
};

namespace {

thread_local std::string last_error;

dmd_status ToStatus(dmdmpc::ErrorCode code) {
  using dmdmpc::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return DMD_INVALID_ARGUMENT;
    case ErrorCode::kShapeMismatch: return DMD_SHAPE_MISMATCH;
    case ErrorCode::kNotPositiveDefinite: return DMD_NOT_POSITIVE_DEFINITE;
    case ErrorCode::kDegenerateEstimate: return DMD_DEGENERATE_ESTIMATE;
    case ErrorCode::kInfeasibleStep: return DMD_INFEASIBLE_STEP;
    case ErrorCode::kUnsupported: return DMD_UNSUPPORTED;
    case ErrorCode::kParse: return DMD_PARSE_ERROR;
    case ErrorCode::kIo: return DMD_IO_ERROR;
  }
  return DMD_INTERNAL_ERROR;
}

template <typename F>
dmd_status Guard(F&& body) {
  try {
    body();
    last_error.clear();
    return DMD_OK;
  } catch (const dmdmpc::Error& e) {
    last_error = e.what();
    return ToStatus(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return DMD_INTERNAL_ERROR;
}

void RequireNotNull(const void* p, const char* name) {
  dmdmpc::Require(p != nullptr, dmdmpc::ErrorCode::kInvalidArgument,
                  std::string(name) + " is null");
}

std::ofstream OpenOutput(const char* path) {
  RequireNotNull(path, "path");
  std::ofstream out(path, std::ios::binary);
  dmdmpc::Require(out.good(), dmdmpc::ErrorCode::kIo,
                  std::string("cannot open '") + path + "' for writing");
  return out;
}

void CloseOutput(std::ofstream& out, const char* path) {
  out.close();
  dmdmpc::Require(!out.fail(), dmdmpc::ErrorCode::kIo,
                  std::string("failed writing '") + path + "'");
}

}  // namespace

extern "C" {

const char* dmd_last_error(void) { return last_error.c_str(); }

dmd_status dmd_config_create(dmd_config** out) {
  return Guard([&] {
    RequireNotNull(out, "out");
    *out = new dmd_config();
  });
}

dmd_status dmd_config_load_file(dmd_config* config, const char* path) {
  return Guard([&] {
    RequireNotNull(config, "config");
    RequireNotNull(path, "path");
    std::ifstream in(path);
    dmdmpc::Require(in.good(), dmdmpc::ErrorCode::kIo,
                    std::string("cannot open config file '") + path + "'");
    std::stringstream text;
    text << in.rdbuf();
    dmdmpc::ExperimentConfig updated = config->config;
    dmdmpc::ApplyConfigText(updated, text.str());
    config->config = std::move(updated);
  });
}

dmd_status dmd_config_set(dmd_config* config, const char* key,
                          const char* value) {
  return Guard([&] {
    RequireNotNull(config, "config");
    RequireNotNull(key, "key");
    RequireNotNull(value, "value");
    dmdmpc::ExperimentConfig updated = config->config;
    dmdmpc::SetConfigValue(updated, key, value);
    config->config = std::move(updated);
  });
}

dmd_status dmd_config_validate(const dmd_config* config) {
  return Guard([&] {
    RequireNotNull(config, "config");
    config->config.Validate();
  });
}

dmd_status dmd_config_dump(const dmd_config* config, char* buffer,
                           size_t capacity, size_t* required) {
  return Guard([&] {
    RequireNotNull(config, "config");
    std::string text;
    std::string section;
    for (const auto& [key, value] : dmdmpc::DumpConfig(config->config)) {
      const auto dot = key.find('.');
      const std::string s = key.substr(0, dot);
      if (s != section) {
        if (!section.empty()) text += '\n';
        text += "[" + s + "]\n";
        section = s;
      }
      text += key.substr(dot + 1) + " = " + value + "\n";
    }
    if (required != nullptr) *required = text.size() + 1;
    if (buffer == nullptr) return;
    dmdmpc::Require(capacity > text.size(), dmdmpc::ErrorCode::kInvalidArgument,
                    "buffer too small for the config dump");
    std::memcpy(buffer, text.c_str(), text.size() + 1);
  });
}

dmd_status dmd_config_hash(const dmd_config* config, uint64_t* out) {
  return Guard([&] {
    RequireNotNull(config, "config");
    RequireNotNull(out, "out");
    *out = dmdmpc::ConfigHash(config->config);
  });
}

dmd_status dmd_config_episode_seed(const dmd_config* config, int cell,
                                   int episode, uint64_t* out) {
  return Guard([&] {
    RequireNotNull(config, "config");
    RequireNotNull(out, "out");
    dmdmpc::Require(cell >= 0 && episode >= 0,
                    dmdmpc::ErrorCode::kInvalidArgument,
                    "cell and episode must be non-negative");
    *out = dmdmpc::EpisodeSeed(config->config, cell, episode);
  });
}

void dmd_config_destroy(dmd_config* config) { delete config; }

dmd_status dmd_episode_run(const dmd_config* config, uint64_t seed,
                           dmd_episode** out) {
  return Guard([&] {
    RequireNotNull(config, "config");
    RequireNotNull(out, "out");
    *out = nullptr;
    auto episode = std::make_unique<dmd_episode>();
    episode->config = config->config;
    episode->record = dmdmpc::RunEpisode(config->config, seed);
    *out = episode.release();
  });
}

dmd_status dmd_episode_length(const dmd_episode* episode, int* out) {
  return Guard([&] {
    RequireNotNull(episode, "episode");
    RequireNotNull(out, "out");
    *out = static_cast<int>(episode->record.steps.size());
  });
}

dmd_status dmd_episode_cost(const dmd_episode* episode, double* out) {
  return Guard([&] {
    RequireNotNull(episode, "episode");
    RequireNotNull(out, "out");
    *out = episode->record.episode_cost;
  });
}

dmd_status dmd_episode_success(const dmd_episode* episode, int* out) {
  return Guard([&] {
    RequireNotNull(episode, "episode");
    RequireNotNull(out, "out");
    *out = episode->record.success ? 1 : 0;
  });
}

dmd_status dmd_episode_dims(const dmd_episode* episode, int* state_dim,
                            int* control_dim) {
  return Guard([&] {
    RequireNotNull(episode, "episode");
    const auto& steps = episode->record.steps;
    dmdmpc::Require(!steps.empty(), dmdmpc::ErrorCode::kInvalidArgument,
                    "episode has no steps");
    if (state_dim != nullptr) *state_dim = static_cast<int>(steps[0].state.size());
    if (control_dim != nullptr) {
      *control_dim = static_cast<int>(steps[0].control.size());
    }
  });
}

dmd_status dmd_episode_step(const dmd_episode* episode, int t, double* state,
                            double* control, double* cost,
                            double* loss_estimate,
                            double* effective_sample_size,
                            double* planned_loss) {
  return Guard([&] {
    RequireNotNull(episode, "episode");
    const auto& steps = episode->record.steps;
    dmdmpc::Require(t >= 0 && t < static_cast<int>(steps.size()),
                    dmdmpc::ErrorCode::kInvalidArgument,
                    "step index out of range");
    const dmdmpc::StepRecord& s = steps[t];
    if (state != nullptr) {
      std::memcpy(state, s.state.data(), sizeof(double) * s.state.size());
    }
    if (control != nullptr) {
      std::memcpy(control, s.control.data(), sizeof(double) * s.control.size());
    }
    if (cost != nullptr) *cost = s.cost;
    if (loss_estimate != nullptr) *loss_estimate = s.loss_estimate;
    if (effective_sample_size != nullptr) {
      *effective_sample_size = s.effective_sample_size;
    }
    if (planned_loss != nullptr) *planned_loss = s.planned_loss;
  });
}

dmd_status dmd_episode_write_csv(const dmd_episode* episode, const char* path) {
  return Guard([&] {
    RequireNotNull(episode, "episode");
    std::ofstream out = OpenOutput(path);
    dmdmpc::WriteEpisodeCsv(out, episode->config, episode->record);
    CloseOutput(out, path);
  });
}

dmd_status dmd_episode_write_summary_csv(const dmd_episode* episode,
                                         const char* path) {
  return Guard([&] {
    RequireNotNull(episode, "episode");
    std::ofstream out = OpenOutput(path);
    dmdmpc::WriteSweepCsv(out, episode->config,
                          {dmdmpc::EpisodeRow(episode->config, episode->record)});
    CloseOutput(out, path);
  });
}

void dmd_episode_destroy(dmd_episode* episode) { delete episode; }

dmd_status dmd_sweep_run(const dmd_config* config, const char* csv_path,
                         int* failed_rows) {
  return Guard([&] {
    RequireNotNull(config, "config");
    std::ofstream out = OpenOutput(csv_path);
    const std::vector<dmdmpc::SweepRow> rows = dmdmpc::RunSweep(config->config);
    dmdmpc::WriteSweepCsv(out, config->config, rows);
    CloseOutput(out, csv_path);
    int failed = 0;
    for (const auto& r : rows) failed += r.failed ? 1 : 0;
    if (failed_rows != nullptr) *failed_rows = failed;
  });
}

}  // extern "C"
