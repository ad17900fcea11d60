#include "qcd/sim.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <limits>
#include <ostream>
#include <string>

#include "qcd/error.hpp"
#include "qcd/random.hpp"

namespace qcd {

int experiment_count(const Policy& policy) {
  return std::visit(
      [](const auto& p) -> int {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, PolicyParams>) {
          return p.experiments;
        } else {
          return 2;
        }
      },
      policy);
}

void Scenario::validate() const {
  const auto violations = validate_ordering(models);
  IssueCollector issues;
  for (const auto& v : violations) {
    issues.add("experiments",
               fmt::format("KL divergence must be non-decreasing in experiment id; pair ({}, {}) has {} > {}",
                           v.lower_id, v.upper_id, v.lower_kl, v.upper_kl));
  }
  if (change_point) issues.check(*change_point >= 1, "change_point", "must be >= 1");
  if (horizon) issues.check(*horizon >= 1, "horizon", "must be >= 1");
  issues.throw_if_any();
}

namespace {

template <class Controller>
EpisodeTrace drive(const Controller& controller, const Scenario& scenario, std::uint64_t seed, std::uint64_t trial,
                   const EpisodeOptions& options) {
  const auto horizon = options.horizon ? options.horizon : scenario.horizon;
  if (!scenario.change_point && !horizon) {
    throw ValidationError("horizon", "required when the change point is infinite");
  }
  if (horizon && *horizon < 1) throw ValidationError("horizon", "must be >= 1");

  Stream env(derive_seed(seed, trial, StreamKind::observations));
  Stream control(derive_seed(seed, trial, StreamKind::control));

  const auto models = controller.models();
  EpisodeTrace trace;
  trace.counts.assign(models.size() + 1, 0);

  auto state = controller.init(control);
  if (state.stopped) {
    // Zero top budget: the policy stops before sampling anything.
    trace.stopping_time = 0;
    trace.stop_reason = StopReason::truncation;
    return trace;
  }

  const std::int64_t limit = horizon.value_or(std::numeric_limits<std::int64_t>::max());
  for (std::int64_t n = 1; n <= limit; ++n) {
    const Action action = controller.next_action(state);
    std::optional<double> observation;
    if (action.kind == ActionKind::sample) {
      observation = models[static_cast<std::size_t>(action.experiment) - 1].sample(scenario.regime_at(n), env);
      ++trace.counts[static_cast<std::size_t>(action.experiment)];
    } else {
      ++trace.counts[0];
    }
    const StepReport report = controller.step(state, observation, control);
    trace.steps_taken = n;
    if (options.record_steps) trace.steps.push_back({n, action, observation, report});
    if (report.stopped) {
      trace.stopping_time = n;
      trace.stop_reason = report.stop_reason;
      break;
    }
  }
  return trace;
}

}  // namespace

EpisodeTrace run_episode(const Engine& engine, const Scenario& scenario, std::uint64_t seed, std::uint64_t trial,
                         const EpisodeOptions& options) {
  return drive(engine, scenario, seed, trial, options);
}

EpisodeTrace run_episode(const RssEngine& engine, const Scenario& scenario, std::uint64_t seed, std::uint64_t trial,
                         const EpisodeOptions& options) {
  return drive(engine, scenario, seed, trial, options);
}

EpisodeTrace run_episode(const Policy& policy, const Scenario& scenario, std::uint64_t seed, std::uint64_t trial,
                         const EpisodeOptions& options) {
  scenario.validate();
  return std::visit(
      [&](const auto& p) -> EpisodeTrace {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, PolicyParams>) {
          return run_episode(Engine(p, scenario.models), scenario, seed, trial, options);
        } else {
          return run_episode(RssEngine(p, scenario.models), scenario, seed, trial, options);
        }
      },
      policy);
}

std::vector<TracePoint> trace_figure(const Policy& policy, const Scenario& scenario, std::uint64_t seed) {
  const EpisodeTrace trace = run_episode(policy, scenario, seed);
  std::vector<TracePoint> path;
  path.reserve(trace.steps.size() + 1);
  const int start_level = std::holds_alternative<PolicyParams>(policy) ? experiment_count(policy) : 2;
  path.push_back({0, 0.0, start_level});
  for (const auto& step : trace.steps) {
    path.push_back({step.n, step.report.statistic, step.report.level_used});
  }
  return path;
}

void write_trace_csv(std::ostream& out, const EpisodeTrace& trace) {
  out << "n,level,action,observation,statistic,event\n";
  for (const auto& step : trace.steps) {
    const std::string observation = step.observation ? fmt::format("{}", *step.observation) : std::string{};
    fmt::print(out, "{},{},{},{},{},{}\n", step.n, step.report.level_used, to_string(step.action), observation,
               step.report.statistic, event_name(step.report));
  }
}

}  // namespace qcd
