#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <variant>
#include <vector>

#include "qcd/dist.hpp"
#include "qcd/engine.hpp"

namespace qcd {

using Policy = std::variant<PolicyParams, RssParams>;

/// Number of experiments a policy drives.
int experiment_count(const Policy& policy);

/// Observation environment: experiments 1..m and the change point. A missing
/// change point means the change never happens.
struct Scenario {
  std::vector<ExperimentModel> models;
  std::optional<std::int64_t> change_point = 1;
  std::optional<std::int64_t> horizon;

  /// Ids contiguous, KL ordering respected, change point >= 1, horizon > 0.
  void validate() const;
  Regime regime_at(std::int64_t n) const noexcept {
    return change_point && n >= *change_point ? Regime::post : Regime::pre;
  }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct TraceStep {
  std::int64_t n = 0;
  Action action;
  std::optional<double> observation;
  StepReport report;
};

struct EpisodeTrace {
  /// Empty unless step recording was requested.
  std::vector<TraceStep> steps;
  /// nullopt when the horizon was reached first.
  std::optional<std::int64_t> stopping_time;
  StopReason stop_reason = StopReason::none;
  /// counts[i] = samples of experiment i (1..m); counts[0] = idle steps.
  std::vector<std::int64_t> counts;
  std::int64_t steps_taken = 0;

  bool horizon_hit() const noexcept { return !stopping_time; }
};

struct EpisodeOptions {
  bool record_steps = true;
  /// Overrides the scenario horizon when set.
  std::optional<std::int64_t> horizon;
};

/// Runs one episode to stop or horizon. Deterministic in (seed, trial): the
/// observation and control streams are derived from both.
EpisodeTrace run_episode(const Engine& engine, const Scenario& scenario, std::uint64_t seed, std::uint64_t trial = 0,
                         const EpisodeOptions& options = {});
EpisodeTrace run_episode(const RssEngine& engine, const Scenario& scenario, std::uint64_t seed,
                         std::uint64_t trial = 0, const EpisodeOptions& options = {});
EpisodeTrace run_episode(const Policy& policy, const Scenario& scenario, std::uint64_t seed, std::uint64_t trial = 0,
                         const EpisodeOptions& options = {});

struct TracePoint {
  std::int64_t n = 0;
  double statistic = 0.0;
  int level = 0;
};

/// (n, D_n, level) path of one episode, starting with (0, 0, m).
std::vector<TracePoint> trace_figure(const Policy& policy, const Scenario& scenario, std::uint64_t seed);

/// CSV with header `n,level,action,observation,statistic,event`. `level` is
/// the level whose action produced the row; `observation` is empty for idle
/// steps.
void write_trace_csv(std::ostream& out, const EpisodeTrace& trace);

}  // namespace qcd
