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

// Key = value configuration. Every key has a parser and a printer; a file is
// applied in canonical key order so that the result never depends on the
// order of lines in the file.

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dmdmpc/error.h"
#include "dmdmpc/harness.h"
#include "overloaded.h"

namespace dmdmpc {
namespace {

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> Split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(Trim(item));
  return out;
}

double ParseDouble(const std::string& key, const std::string& text) {
  const std::string s = Trim(text);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  Require(!s.empty() && end == s.c_str() + s.size() && errno == 0,
          ErrorCode::kParse, key + ": not a number: '" + text + "'");
  return v;
}

long long ParseInteger(const std::string& key, const std::string& text) {
  const std::string s = Trim(text);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  Require(!s.empty() && end == s.c_str() + s.size() && errno == 0,
          ErrorCode::kParse, key + ": not an integer: '" + text + "'");
  return v;
}

int ParseInt(const std::string& key, const std::string& text) {
  const long long v = ParseInteger(key, text);
  Require(v >= INT32_MIN && v <= INT32_MAX, ErrorCode::kParse,
          key + ": out of range");
  return static_cast<int>(v);
}

uint64_t ParseUnsigned(const std::string& key, const std::string& text) {
  const std::string s = Trim(text);
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  Require(!s.empty() && s[0] != '-' && end == s.c_str() + s.size() &&
              errno == 0,
          ErrorCode::kParse, key + ": not an unsigned integer: '" + text + "'");
  return v;
}

bool ParseBool(const std::string& key, const std::string& text) {
  const std::string s = Trim(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  Fail(ErrorCode::kParse, key + ": expected true or false");
}

std::vector<double> ParseDoubles(const std::string& key,
                                 const std::string& text) {
  std::vector<double> out;
  if (Trim(text).empty()) return out;
  for (const std::string& item : Split(text, ',')) {
    out.push_back(ParseDouble(key, item));
  }
  return out;
}

std::vector<int> ParseInts(const std::string& key, const std::string& text) {
  std::vector<int> out;
  if (Trim(text).empty()) return out;
  for (const std::string& item : Split(text, ',')) {
    out.push_back(ParseInt(key, item));
  }
  return out;
}

std::vector<uint64_t> ParseSeeds(const std::string& key,
                                 const std::string& text) {
  std::vector<uint64_t> out;
  if (Trim(text).empty()) return out;
  for (const std::string& item : Split(text, ',')) {
    out.push_back(ParseUnsigned(key, item));
  }
  return out;
}

// Rows separated by ';', entries by ','.
Matrix ParseMatrix(const std::string& key, const std::string& text) {
  const std::vector<std::string> rows = Split(text, ';');
  Require(!rows.empty(), ErrorCode::kParse, key + ": empty matrix");
  std::vector<std::vector<double>> values;
  for (const std::string& row : rows) values.push_back(ParseDoubles(key, row));
  const size_t cols = values.front().size();
  Require(cols > 0, ErrorCode::kParse, key + ": empty matrix row");
  Matrix m(values.size(), cols);
  for (size_t i = 0; i < values.size(); ++i) {
    Require(values[i].size() == cols, ErrorCode::kParse,
            key + ": ragged matrix");
    for (size_t j = 0; j < cols; ++j) m(i, j) = values[i][j];
  }
  return m;
}

template <typename T, typename F>
std::string Join(const std::vector<T>& items, F format, const char* sep) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += sep;
    out += format(items[i]);
  }
  return out;
}

std::string FormatDoubles(const std::vector<double>& v) {
  return Join(v, FormatDouble, ",");
}

std::string FormatMatrix(const Matrix& m) {
  std::vector<std::string> rows;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
    rows.push_back(FormatDoubles(row));
  }
  return Join(rows, [](const std::string& s) { return s; }, ";");
}

std::string FormatVector(const Vector& v) {
  return FormatDoubles(std::vector<double>(v.data(), v.data() + v.size()));
}

Environment ParseEnvironment(const std::string& s) {
  if (s == "cartpole-continuous") return Environment::kCartpoleContinuous;
  if (s == "cartpole-discrete") return Environment::kCartpoleDiscrete;
  if (s == "lti-lqr") return Environment::kLtiLqr;
  if (s == "lti-leqr") return Environment::kLtiLeqr;
  Fail(ErrorCode::kParse, "experiment.env: unknown environment '" + s + "'");
}

const char* UpdateName(UpdateRule u) {
  switch (u) {
    case UpdateRule::kDmd: return "dmd";
    case UpdateRule::kQuadraticExact: return "quadratic-exact";
    case UpdateRule::kMppi: return "mppi";
    case UpdateRule::kCem: return "cem";
  }
  return "dmd";
}

UpdateRule ParseUpdate(const std::string& s) {
  for (UpdateRule u : {UpdateRule::kDmd, UpdateRule::kQuadraticExact,
                       UpdateRule::kMppi, UpdateRule::kCem}) {
    if (s == UpdateName(u)) return u;
  }
  Fail(ErrorCode::kParse, "experiment.update: unknown rule '" + s + "'");
}

LossSpec ParseLoss(const std::string& s, const LossSpec& current) {
  // Re-selecting the current loss keeps its parameter.
  if (LossName(current) == s) return current;
  if (s == "expected-cost") return ExpectedCost{};
  if (s == "prob-low-cost") return ProbLowCost{EliteFraction{1e-3}};
  if (s == "prob-low-cost-fixed") return ProbLowCost{FixedThreshold{0.0}};
  if (s == "exp-utility") return ExpUtility{1.0};
  Fail(ErrorCode::kParse, "controller.loss: unknown loss '" + s + "'");
}

std::string DivergenceName(const std::optional<DivergenceSpec>& div) {
  if (!div) return "default";
  return std::visit(Overloaded{
      [](const QuadraticIdentity&) -> std::string { return "quadratic-identity"; },
      [](const QuadraticFisher&) -> std::string { return "quadratic-fisher"; },
      [](const QuadraticCustom&) -> std::string { return "quadratic-custom"; },
      [](const KLExpectation&) -> std::string { return "kl-expectation"; },
      [](const KLNatural& k) -> std::string {
        return k.update_covariance ? "kl-natural" : "kl-natural-mean";
      }}, *div);
}

std::optional<DivergenceSpec> ParseDivergence(const std::string& s) {
  if (s == "default") return std::nullopt;
  if (s == "quadratic-identity") return QuadraticIdentity{};
  if (s == "quadratic-fisher") return QuadraticFisher{};
  if (s == "kl-expectation") return KLExpectation{};
  if (s == "kl-natural") return KLNatural{true};
  if (s == "kl-natural-mean") return KLNatural{false};
  Fail(ErrorCode::kParse, "controller.divergence: unknown divergence '" + s +
                              "' (a custom matrix is only available through "
                              "the library)");
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Member>
Field DoubleField(const char* key, Member member) {
  return {key,
          [key, member](ExperimentConfig& c, const std::string& v) {
            std::invoke(member, c) = ParseDouble(key, v);
          },
          [member](const ExperimentConfig& c) {
            return FormatDouble(std::invoke(member, c));
          }};
}

template <typename Member>
Field IntField(const char* key, Member member) {
  return {key,
          [key, member](ExperimentConfig& c, const std::string& v) {
            std::invoke(member, c) = ParseInt(key, v);
          },
          [member](const ExperimentConfig& c) {
            return std::to_string(std::invoke(member, c));
          }};
}

template <typename Member>
Field MatrixField(const char* key, Member member) {
  return {key,
          [key, member](ExperimentConfig& c, const std::string& v) {
            std::invoke(member, c) = ParseMatrix(key, v);
          },
          [member](const ExperimentConfig& c) {
            return FormatMatrix(std::invoke(member, c));
          }};
}

// Canonical key order. controller.loss precedes controller.param so that a
// parameter always lands on the intended loss.
const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      {"experiment.env",
       [](ExperimentConfig& c, const std::string& v) {
         c.env = ParseEnvironment(Trim(v));
       },
       [](const ExperimentConfig& c) { return EnvironmentName(c.env); }},
      {"experiment.update",
       [](ExperimentConfig& c, const std::string& v) {
         c.update = ParseUpdate(Trim(v));
       },
       [](const ExperimentConfig& c) {
         return std::string(UpdateName(c.update));
       }},
      IntField("experiment.episodes", [](auto& c) -> auto& { return c.episodes; }),
      {"experiment.master_seed",
       [](ExperimentConfig& c, const std::string& v) {
         c.master_seed = ParseUnsigned("experiment.master_seed", v);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.master_seed); }},
      {"experiment.seeds",
       [](ExperimentConfig& c, const std::string& v) {
         c.seeds = ParseSeeds("experiment.seeds", v);
       },
       [](const ExperimentConfig& c) {
         return Join(c.seeds, [](uint64_t s) { return std::to_string(s); }, ",");
       }},
      IntField("experiment.episode_length",
               [](auto& c) -> auto& { return c.episode_length; }),
      IntField("experiment.horizon", [](auto& c) -> auto& { return c.horizon; }),
      IntField("experiment.success_window",
               [](auto& c) -> auto& { return c.success_window; }),
      {"experiment.output",
       [](ExperimentConfig& c, const std::string& v) { c.output = Trim(v); },
       [](const ExperimentConfig& c) { return c.output; }},
      {"controller.loss",
       [](ExperimentConfig& c, const std::string& v) {
         c.loss = ParseLoss(Trim(v), c.loss);
       },
       [](const ExperimentConfig& c) { return LossName(c.loss); }},
      {"controller.param",
       [](ExperimentConfig& c, const std::string& v) {
         if (Trim(v).empty()) {
           Require(!LossParam(c.loss).has_value(), ErrorCode::kParse,
                   "controller.param: this loss needs a parameter");
           return;
         }
         c.loss = WithLossParam(c.loss, ParseDouble("controller.param", v));
       },
       [](const ExperimentConfig& c) {
         const auto p = LossParam(c.loss);
         return p ? FormatDouble(*p) : std::string();
       }},
      {"controller.baseline",
       [](ExperimentConfig& c, const std::string& v) {
         const bool b = ParseBool("controller.baseline", v);
         if (auto* ec = std::get_if<ExpectedCost>(&c.loss)) ec->use_baseline = b;
       },
       [](const ExperimentConfig& c) {
         const auto* ec = std::get_if<ExpectedCost>(&c.loss);
         return std::string(ec == nullptr || ec->use_baseline ? "true" : "false");
       }},
      {"controller.divergence",
       [](ExperimentConfig& c, const std::string& v) {
         c.divergence = ParseDivergence(Trim(v));
       },
       [](const ExperimentConfig& c) { return DivergenceName(c.divergence); }},
      {"controller.gamma",
       [](ExperimentConfig& c, const std::string& v) {
         c.gamma = ParseDoubles("controller.gamma", v);
       },
       [](const ExperimentConfig& c) { return FormatDoubles(c.gamma); }},
      IntField("controller.n_samples",
               [](auto& c) -> auto& { return c.n_samples; }),
      IntField("controller.n_dynamics_samples",
               [](auto& c) -> auto& { return c.n_dynamics_samples; }),
      DoubleField("controller.control_std",
                  [](auto& c) -> auto& { return c.control_std; }),
      {"controller.shift",
       [](ExperimentConfig& c, const std::string& v) {
         const std::string s = Trim(v);
         if (s == "repeat-last") {
           c.shift_fill = ShiftFill::kRepeatLast;
         } else if (s == "initial") {
           c.shift_fill = ShiftFill::kInitial;
         } else {
           Fail(ErrorCode::kParse, "controller.shift: expected repeat-last or "
                                   "initial");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.shift_fill == ShiftFill::kRepeatLast
                                ? "repeat-last"
                                : "initial");
       }},
      DoubleField("cartpole.cart_mass",
                  [](auto& c) -> auto& { return c.cartpole.cart_mass; }),
      DoubleField("cartpole.tip_mass",
                  [](auto& c) -> auto& { return c.cartpole.tip_mass; }),
      DoubleField("cartpole.pole_length_true",
                  [](auto& c) -> auto& { return c.cartpole.pole_length_true; }),
      DoubleField("cartpole.pole_length_model",
                  [](auto& c) -> auto& { return c.cartpole.pole_length_model; }),
      DoubleField("cartpole.gravity",
                  [](auto& c) -> auto& { return c.cartpole.gravity; }),
      DoubleField("cartpole.dt", [](auto& c) -> auto& { return c.cartpole.dt; }),
      DoubleField("cartpole.control_noise_std",
                  [](auto& c) -> auto& { return c.cartpole.control_noise_std; }),
      DoubleField("cartpole.control_min",
                  [](auto& c) -> auto& { return c.cartpole.control_min; }),
      DoubleField("cartpole.control_max",
                  [](auto& c) -> auto& { return c.cartpole.control_max; }),
      DoubleField("cartpole.angle_threshold",
                  [](auto& c) -> auto& { return c.cartpole.angle_threshold; }),
      {"cartpole.discrete_forces",
       [](ExperimentConfig& c, const std::string& v) {
         c.cartpole.discrete_forces = ParseDoubles("cartpole.discrete_forces", v);
       },
       [](const ExperimentConfig& c) {
         return FormatDoubles(c.cartpole.discrete_forces);
       }},
      MatrixField("lti.A", [](auto& c) -> auto& { return c.lti.a; }),
      MatrixField("lti.B", [](auto& c) -> auto& { return c.lti.b; }),
      MatrixField("lti.W", [](auto& c) -> auto& { return c.lti.w; }),
      MatrixField("lti.Q", [](auto& c) -> auto& { return c.lti.q; }),
      MatrixField("lti.R", [](auto& c) -> auto& { return c.lti.r; }),
      MatrixField("lti.Q_end", [](auto& c) -> auto& { return c.lti.q_end; }),
      {"lti.x0",
       [](ExperimentConfig& c, const std::string& v) {
         const std::vector<double> x = ParseDoubles("lti.x0", v);
         c.lti.x0 = Eigen::Map<const Vector>(x.data(), x.size());
       },
       [](const ExperimentConfig& c) { return FormatVector(c.lti.x0); }},
      {"sweep.gamma",
       [](ExperimentConfig& c, const std::string& v) {
         c.sweep.gammas = ParseDoubles("sweep.gamma", v);
       },
       [](const ExperimentConfig& c) { return FormatDoubles(c.sweep.gammas); }},
      {"sweep.n_samples",
       [](ExperimentConfig& c, const std::string& v) {
         c.sweep.n_samples = ParseInts("sweep.n_samples", v);
       },
       [](const ExperimentConfig& c) {
         return Join(c.sweep.n_samples, [](int n) { return std::to_string(n); },
                     ",");
       }},
      {"sweep.param",
       [](ExperimentConfig& c, const std::string& v) {
         c.sweep.params = ParseDoubles("sweep.param", v);
       },
       [](const ExperimentConfig& c) { return FormatDoubles(c.sweep.params); }},
  };
  return fields;
}

const Field& FindField(const std::string& key) {
  for (const Field& f : Fields()) {
    if (key == f.key) return f;
  }
  Fail(ErrorCode::kParse, "unknown config key '" + key + "'");
}

}  // namespace

std::string EnvironmentName(Environment env) {
  switch (env) {
    case Environment::kCartpoleContinuous: return "cartpole-continuous";
    case Environment::kCartpoleDiscrete: return "cartpole-discrete";
    case Environment::kLtiLqr: return "lti-lqr";
    case Environment::kLtiLeqr: return "lti-leqr";
  }
  return "unknown";
}

std::string LossName(const LossSpec& loss) {
  return std::visit(Overloaded{
      [](const ExpectedCost&) -> std::string { return "expected-cost"; },
      [](const ProbLowCost& p) -> std::string {
        return std::holds_alternative<EliteFraction>(p.threshold)
                   ? "prob-low-cost"
                   : "prob-low-cost-fixed";
      },
      [](const ExpUtility&) -> std::string { return "exp-utility"; }}, loss);
}

std::optional<double> LossParam(const LossSpec& loss) {
  return std::visit(Overloaded{
      [](const ExpectedCost&) -> std::optional<double> { return std::nullopt; },
      [](const ProbLowCost& p) -> std::optional<double> {
        return std::visit(Overloaded{
            [](const FixedThreshold& t) { return t.c_max; },
            [](const EliteFraction& e) { return e.fraction; }}, p.threshold);
      },
      [](const ExpUtility& e) -> std::optional<double> { return e.lambda; }},
      loss);
}

LossSpec WithLossParam(const LossSpec& loss, double param) {
  return std::visit(Overloaded{
      [](const ExpectedCost&) -> LossSpec {
        Fail(ErrorCode::kInvalidArgument, "expected cost takes no parameter");
      },
      [param](const ProbLowCost& p) -> LossSpec {
        if (std::holds_alternative<EliteFraction>(p.threshold)) {
          return ProbLowCost{EliteFraction{param}};
        }
        return ProbLowCost{FixedThreshold{param}};
      },
      [param](const ExpUtility&) -> LossSpec { return ExpUtility{param}; }},
      loss);
}

void SetConfigValue(ExperimentConfig& config, const std::string& key,
                    const std::string& value) {
  FindField(Trim(key)).set(config, value);
}

void ApplyConfigText(ExperimentConfig& config, const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    Fail(ErrorCode::kParse, std::string("config: ") + e.what());
  }
  std::map<std::string, std::string> values;
  for (const auto& [section, body] : tree) {
    Require(!body.empty(), ErrorCode::kParse,
            "config: key '" + section + "' outside a section");
    for (const auto& [key, node] : body) {
      values[section + "." + key] = node.data();
    }
  }
  for (const auto& [key, value] : values) FindField(key);
  for (const Field& f : Fields()) {
    const auto it = values.find(f.key);
    if (it != values.end()) f.set(config, it->second);
  }
}

ExperimentConfig LoadConfigFile(const std::string& path) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kIo, "cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  ExperimentConfig config;
  ApplyConfigText(config, buffer.str());
  return config;
}

std::vector<std::pair<std::string, std::string>> DumpConfig(
    const ExperimentConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : Fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

uint64_t ConfigHash(const ExperimentConfig& config) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](const std::string& s) {
    for (unsigned char ch : s) {
      hash ^= ch;
      hash *= 0x100000001b3ULL;
    }
  };
  for (const auto& [key, value] : DumpConfig(config)) {
    mix(key);
    mix("=");
    mix(value);
    mix("\n");
  }
  return hash;
}

}  // namespace dmdmpc
