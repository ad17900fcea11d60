#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qcd/calib.hpp"
#include "qcd/engine.hpp"
#include "qcd/sim.hpp"

namespace qcd {

enum class PolicyVariant { cusum, me_cusum, de_me_cusum, rss };

std::string_view to_string(PolicyVariant variant);
PolicyVariant parse_policy_variant(std::string_view name);

/// Policy as written in a config file. Exactly one of `threshold` / `gamma`
/// sets A (A = ln gamma). `scales` and `budgets` are keyed by level.
struct PolicyConfig {
  PolicyVariant variant = PolicyVariant::me_cusum;
  std::string label;
  std::optional<double> threshold;
  std::optional<double> gamma;
  std::map<int, double> scales;
  std::map<int, double> budgets;
  double idle_drift = 0.0;
  std::optional<double> top_truncation;
  /// cusum only: which scenario experiment to monitor (default: the best).
  std::optional<int> experiment;
  /// rss only.
  double p_hi = 0.5;

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

struct SimulationConfig {
  std::int64_t trials = 1000;
  std::optional<std::int64_t> horizon;
  std::uint64_t seed = 1;
  double confidence = 0.95;
  unsigned threads = 0;
  std::optional<std::int64_t> cycles;
  std::optional<std::int64_t> safety_horizon;
  std::optional<std::int64_t> arlfa_trials;

  friend bool operator==(const SimulationConfig&, const SimulationConfig&) = default;
};

struct OutputConfig {
  std::optional<std::string> path;
  std::string format = "json";

  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct CalibrationConfig {
  double gamma = 1000.0;
  /// Keyed by experiment id 1..m.
  std::map<int, double> betas;
  bool data_efficient = false;
  SearchConfig search;

  friend bool operator==(const CalibrationConfig&, const CalibrationConfig&) = default;
};

struct TradeoffConfig {
  std::vector<double> gammas;
  /// Curves to compute; empty means the run's main policy.
  std::vector<PolicyConfig> policies;

  friend bool operator==(const TradeoffConfig&, const TradeoffConfig&) = default;
};

/// Everything needed to reproduce one CLI run.
struct RunConfig {
  Scenario scenario;
  std::optional<PolicyConfig> policy;
  SimulationConfig simulation;
  OutputConfig output;
  std::optional<CalibrationConfig> calibration;
  std::optional<TradeoffConfig> tradeoff;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws ValidationError with field paths on malformed input.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);

/// A resolved policy together with the experiments it drives (re-numbered
/// from 1 when a cusum policy monitors a single scenario experiment).
struct ResolvedPolicy {
  Policy policy;
  std::vector<ExperimentModel> models;
  std::string label;
};

ResolvedPolicy resolve_policy(const PolicyConfig& config, const Scenario& scenario);

/// Targets as a CalibrationTarget for `m` experiments.
CalibrationTarget resolve_target(const CalibrationConfig& config, int experiments);

}  // namespace qcd
