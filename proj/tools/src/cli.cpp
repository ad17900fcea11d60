#include "qcd/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "qcd/calib.hpp"
#include "qcd/config.hpp"
#include "qcd/error.hpp"
#include "qcd/metrics.hpp"
#include "qcd/sim.hpp"

namespace qcd::cli {

namespace {

using nlohmann::json;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> trials;
  std::optional<double> gamma;
  std::optional<std::string> output;
  std::optional<std::string> format;
  std::optional<unsigned> threads;
  std::string method = "direct";
  bool strict = false;
};

RunConfig resolve_config(const Overrides& o) {
  RunConfig config = load_config(o.config_path);
  if (o.seed) config.simulation.seed = *o.seed;
  if (o.trials) {
    if (*o.trials < 1) throw ValidationError("--trials", "must be >= 1");
    config.simulation.trials = *o.trials;
  }
  if (o.threads) config.simulation.threads = *o.threads;
  if (o.gamma) {
    if (config.policy) {
      config.policy->threshold.reset();
      config.policy->gamma = *o.gamma;
    }
    if (config.calibration) config.calibration->gamma = *o.gamma;
  }
  if (o.output) config.output.path = *o.output;
  if (o.format) config.output.format = *o.format;
  if (config.output.format != "json" && config.output.format != "csv") {
    throw ValidationError("--format", "must be json or csv");
  }
  return config;
}

/// Writes to the configured path, or to the fallback stream.
class Sink {
 public:
  Sink(const std::optional<std::string>& path, std::ostream& fallback) : stream_(&fallback) {
    if (path) {
      file_.open(*path, std::ios::binary | std::ios::trunc);
      if (!file_) throw ValidationError("output.path", "cannot write '" + *path + "'");
      stream_ = &file_;
    }
  }
  std::ostream& stream() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

// The output path does not affect results, so it is left out of embedded
// configs; identical runs then produce identical files wherever they land.
json embedded(const RunConfig& config) {
  RunConfig copy = config;
  copy.output.path.reset();
  return to_json(copy);
}

void write_header(std::ostream& out, const RunConfig& config) {
  out << "# config: " << embedded(config).dump() << '\n';
  out << "# seed: " << config.simulation.seed << '\n';
}

json estimate_json(const MetricEstimate& e) {
  return json{{"mean", e.mean},         {"std_error", e.std_error}, {"trials", e.trials},
              {"ci_low", e.ci_low},     {"ci_high", e.ci_high},     {"confidence", e.confidence}};
}

json por_json(const PorVector& por) {
  json rows = json::array();
  for (int i = por.has_idle ? 0 : 1; i <= por.experiments(); ++i) {
    json row = estimate_json(por.components[static_cast<std::size_t>(i)]);
    row["experiment"] = i;
    rows.push_back(row);
  }
  return rows;
}

MonteCarloOptions monte_carlo(const RunConfig& config) {
  MonteCarloOptions o;
  o.trials = config.simulation.trials;
  o.base_seed = config.simulation.seed;
  o.threads = config.simulation.threads;
  o.confidence = config.simulation.confidence;
  o.safety_horizon = config.simulation.safety_horizon;
  return o;
}

const PolicyConfig& require_policy(const RunConfig& config) {
  if (!config.policy) throw ValidationError("policy", "is required for this command");
  return *config.policy;
}

void report_hits(std::ostream& err, std::int64_t hits, std::int64_t horizon) {
  if (hits > 0) {
    fmt::print(err, "warning: {} episode(s) reached the safety horizon {}; the estimate is biased low\n", hits,
               horizon);
  }
}

int warn_exit(const Overrides& o, std::int64_t hits) { return (o.strict && hits > 0) ? warning : ok; }

int cmd_trace(const Overrides& o, std::ostream& out, std::ostream& err) {
  const RunConfig config = resolve_config(o);
  const auto resolved = resolve_policy(require_policy(config), config.scenario);
  Scenario scenario = config.scenario;
  scenario.models = resolved.models;
  if (config.simulation.horizon) scenario.horizon = config.simulation.horizon;
  if (!scenario.change_point && !scenario.horizon) {
    throw ValidationError("scenario.horizon", "required when the change point is infinite");
  }
  const EpisodeTrace trace = run_episode(resolved.policy, scenario, config.simulation.seed);
  Sink sink(config.output.path, out);
  auto& s = sink.stream();
  if (config.output.format == "json") {
    json steps = json::array();
    for (const auto& st : trace.steps) {
      steps.push_back({{"n", st.n},
                       {"level", st.report.level_used},
                       {"action", to_string(st.action)},
                       {"observation", st.observation ? json(*st.observation) : json(nullptr)},
                       {"statistic", st.report.statistic},
                       {"event", event_name(st.report)}});
    }
    json doc{{"config", embedded(config)},
             {"seed", config.simulation.seed},
             {"stopping_time", trace.stopping_time ? json(*trace.stopping_time) : json(nullptr)},
             {"steps", steps}};
    s << doc.dump(2) << '\n';
  } else {
    write_header(s, config);
    write_trace_csv(s, trace);
  }
  if (trace.horizon_hit()) fmt::print(err, "note: horizon reached after {} steps without a stop\n", trace.steps_taken);
  return ok;
}

int cmd_arlfa(const Overrides& o, std::ostream& out, std::ostream& err) {
  const RunConfig config = resolve_config(o);
  const auto resolved = resolve_policy(require_policy(config), config.scenario);
  auto mc = monte_carlo(config);
  if (config.simulation.arlfa_trials && !o.trials) mc.trials = *config.simulation.arlfa_trials;
  const ArlfaResult r = estimate_arlfa(resolved.policy, resolved.models, mc);
  Sink sink(config.output.path, out);
  auto& s = sink.stream();
  if (config.output.format == "json") {
    json doc = estimate_json(r.estimate);
    doc["metric"] = "arlfa";
    doc["horizon_hits"] = r.horizon_hits;
    doc["safety_horizon"] = r.safety_horizon;
    doc["seed"] = config.simulation.seed;
    doc["config"] = embedded(config);
    s << doc.dump(2) << '\n';
  } else {
    write_header(s, config);
    s << "metric,mean,std_error,ci_low,ci_high,trials,horizon_hits,safety_horizon\n";
    fmt::print(s, "arlfa,{},{},{},{},{},{},{}\n", r.estimate.mean, r.estimate.std_error, r.estimate.ci_low,
               r.estimate.ci_high, r.estimate.trials, r.horizon_hits, r.safety_horizon);
  }
  report_hits(err, r.horizon_hits, r.safety_horizon);
  return warn_exit(o, r.horizon_hits);
}

int cmd_wadd(const Overrides& o, std::ostream& out, std::ostream& err) {
  const RunConfig config = resolve_config(o);
  const auto resolved = resolve_policy(require_policy(config), config.scenario);
  const WaddResult r = estimate_wadd(resolved.policy, resolved.models, monte_carlo(config));
  Sink sink(config.output.path, out);
  auto& s = sink.stream();
  if (config.output.format == "json") {
    json doc{{"metric", "wadd"},
             {"simulated", estimate_json(r.simulated)},
             {"penalty", r.penalty},
             {"total", estimate_json(r.total)},
             {"horizon_hits", r.horizon_hits},
             {"safety_horizon", r.safety_horizon},
             {"seed", config.simulation.seed},
             {"config", embedded(config)}};
    s << doc.dump(2) << '\n';
  } else {
    write_header(s, config);
    s << "metric,simulated,simulated_se,penalty,total,ci_low,ci_high,trials,horizon_hits\n";
    fmt::print(s, "wadd,{},{},{},{},{},{},{},{}\n", r.simulated.mean, r.simulated.std_error, r.penalty, r.total.mean,
               r.total.ci_low, r.total.ci_high, r.simulated.trials, r.horizon_hits);
  }
  report_hits(err, r.horizon_hits, r.safety_horizon);
  return warn_exit(o, r.horizon_hits);
}

int cmd_por(const Overrides& o, std::ostream& out, std::ostream&) {
  const RunConfig config = resolve_config(o);
  PolicyConfig policy_config = require_policy(config);
  // POR is measured without a threshold; a placeholder keeps resolution happy.
  if (!policy_config.threshold && !policy_config.gamma) policy_config.threshold = 1.0;
  const auto resolved = resolve_policy(policy_config, config.scenario);
  const Policy policy = with_threshold(resolved.policy, std::numeric_limits<double>::infinity());
  PorVector por;
  json meta{{"method", o.method}};
  if (o.method == "renewal") {
    const auto* params = std::get_if<PolicyParams>(&policy);
    if (!params) throw ValidationError("--method", "renewal needs an mE policy");
    const std::int64_t cycles = config.simulation.cycles.value_or(100000);
    por = estimate_por_renewal(*params, resolved.models, cycles, monte_carlo(config));
    meta["cycles"] = cycles;
  } else if (o.method == "direct") {
    const std::int64_t horizon = config.simulation.horizon.value_or(100000);
    por = estimate_por_direct(policy, resolved.models, horizon, monte_carlo(config));
    meta["horizon"] = horizon;
    meta["trials"] = config.simulation.trials;
  } else {
    throw ValidationError("--method", "must be direct or renewal");
  }
  Sink sink(config.output.path, out);
  auto& s = sink.stream();
  if (config.output.format == "json") {
    json doc{{"metric", "por"},
             {"components", por_json(por)},
             {"sum", por.sum()},
             {"estimator", meta},
             {"seed", config.simulation.seed},
             {"config", embedded(config)}};
    s << doc.dump(2) << '\n';
  } else {
    write_header(s, config);
    s << "# estimator: " << meta.dump() << '\n';
    write_por_csv(s, por);
  }
  return ok;
}

int cmd_calibrate(const Overrides& o, std::ostream& out, std::ostream& err) {
  const RunConfig config = resolve_config(o);
  if (!config.calibration) throw ValidationError("calibration", "is required for calibrate");
  const int m = static_cast<int>(config.scenario.models.size());
  const CalibrationTarget target = resolve_target(*config.calibration, m);
  SearchConfig search = config.calibration->search;
  search.threads = config.simulation.threads;
  if (config.simulation.cycles) search.cycles = *config.simulation.cycles;
  const CalibrationResult result = calibrate(target, config.scenario.models, search, config.simulation.seed);

  Sink sink(config.output.path, out);
  auto& s = sink.stream();
  if (config.output.format == "json") {
    json scales = json::object();
    json budgets = json::object();
    for (int i = result.params.lowest_level() + 1; i <= m; ++i) scales[std::to_string(i)] = result.params.scale(i);
    for (int j = result.params.lowest_level(); j < m; ++j) budgets[std::to_string(j)] = result.params.budget(j);
    json doc{{"converged", result.converged},
             {"scales", scales},
             {"budgets", budgets},
             {"achieved", por_json(result.achieved)},
             {"residuals", result.residuals},
             {"evaluations", result.evaluations},
             {"sweeps", result.sweeps},
             {"seed", config.simulation.seed},
             {"config", embedded(config)}};
    if (target.data_efficient) doc["idle_drift"] = result.params.idle_drift;
    s << doc.dump(2) << '\n';
  } else {
    write_header(s, config);
    write_calibration_csv(s, target, result);
  }
  if (!result.converged) {
    err << "error: calibration did not converge within tolerance " << search.tolerance << "\n";
    for (std::size_t i = target.data_efficient ? 0 : 1; i < result.residuals.size(); ++i) {
      fmt::print(err, "  residual[{}] = {}\n", i, result.residuals[i]);
    }
    return warning;
  }
  return ok;
}

int cmd_tradeoff(const Overrides& o, std::ostream& out, std::ostream& err) {
  const RunConfig config = resolve_config(o);
  if (!config.tradeoff) throw ValidationError("tradeoff", "is required for tradeoff");
  std::vector<PolicyConfig> policies = config.tradeoff->policies;
  if (policies.empty()) policies.push_back(require_policy(config));

  TradeoffOptions opts;
  opts.wadd = monte_carlo(config);
  opts.arlfa = monte_carlo(config);
  if (config.simulation.arlfa_trials && !o.trials) opts.arlfa.trials = *config.simulation.arlfa_trials;

  struct Curve {
    std::string label;
    std::vector<TradeoffPoint> points;
  };
  std::vector<Curve> curves;
  std::int64_t hits = 0;
  for (auto pc : policies) {
    if (!pc.threshold && !pc.gamma) pc.threshold = 1.0;
    const auto resolved = resolve_policy(pc, config.scenario);
    auto points = tradeoff_curve(resolved.policy, resolved.models, config.tradeoff->gammas, opts);
    for (const auto& p : points) {
      hits += p.arlfa.horizon_hits + p.wadd.horizon_hits;
      report_hits(err, p.arlfa.horizon_hits + p.wadd.horizon_hits, p.arlfa.safety_horizon);
    }
    curves.push_back({resolved.label, std::move(points)});
  }

  if (config.output.format == "json") {
    json list = json::array();
    for (const auto& c : curves) {
      json pts = json::array();
      for (const auto& p : c.points) {
        pts.push_back({{"gamma", p.gamma},
                       {"threshold", p.threshold},
                       {"log_arlfa", p.log_arlfa},
                       {"arlfa", estimate_json(p.arlfa.estimate)},
                       {"wadd", estimate_json(p.wadd.total)},
                       {"wadd_simulated", p.wadd.simulated.mean},
                       {"wadd_penalty", p.wadd.penalty}});
      }
      list.push_back({{"label", c.label}, {"points", pts}});
    }
    Sink sink(config.output.path, out);
    sink.stream() << json{{"curves", list}, {"seed", config.simulation.seed}, {"config", embedded(config)}}.dump(2)
                  << '\n';
  } else if (curves.size() == 1 || !config.output.path) {
    Sink sink(config.output.path, out);
    auto& s = sink.stream();
    write_header(s, config);
    for (const auto& c : curves) {
      s << "# policy: " << c.label << '\n';
      write_tradeoff_csv(s, c.points);
    }
  } else {
    // One file per curve keeps each CSV on the fixed four-column schema.
    const std::filesystem::path base(*config.output.path);
    for (const auto& c : curves) {
      auto path = base.parent_path() / (base.stem().string() + "." + c.label + base.extension().string());
      Sink sink(path.string(), out);
      write_header(sink.stream(), config);
      sink.stream() << "# policy: " << c.label << '\n';
      write_tradeoff_csv(sink.stream(), c.points);
    }
  }
  return warn_exit(o, hits);
}

void add_common(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "override simulation.seed");
  app.add_option("--trials", o.trials, "override simulation.trials");
  app.add_option("--gamma", o.gamma, "override the false-alarm level (threshold = ln gamma)");
  app.add_option("--output", o.output, "write results to this path instead of stdout");
  app.add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--threads", o.threads, "worker threads (0 = hardware concurrency)");
  app.add_flag("--strict", o.strict, "exit 2 when any episode hits the safety horizon");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-experiment quickest change detection simulator"};
  app.require_subcommand(1);
  Overrides o;
  std::function<int()> action;

  auto* trace = app.add_subcommand("trace", "single-episode statistic path");
  add_common(*trace, o);
  trace->callback([&] { action = [&] { return cmd_trace(o, out, err); }; });

  auto* evaluate = app.add_subcommand("evaluate", "Monte Carlo metric estimates");
  evaluate->require_subcommand(1);
  auto* arlfa = evaluate->add_subcommand("arlfa", "mean time to false alarm");
  auto* wadd = evaluate->add_subcommand("wadd", "worst-case detection delay");
  auto* por = evaluate->add_subcommand("por", "pre-change observation ratios");
  for (auto* sub : {arlfa, wadd, por}) add_common(*sub, o);
  por->add_option("--method", o.method, "direct or renewal")->check(CLI::IsMember({"direct", "renewal"}));
  arlfa->callback([&] { action = [&] { return cmd_arlfa(o, out, err); }; });
  wadd->callback([&] { action = [&] { return cmd_wadd(o, out, err); }; });
  por->callback([&] { action = [&] { return cmd_por(o, out, err); }; });

  auto* cal = app.add_subcommand("calibrate", "search budgets and scales for target PORs");
  add_common(*cal, o);
  cal->callback([&] { action = [&] { return cmd_calibrate(o, out, err); }; });

  auto* tradeoff = app.add_subcommand("tradeoff", "WADD against ln ARLFA over a gamma grid");
  add_common(*tradeoff, o);
  tradeoff->callback([&] { action = [&] { return cmd_tradeoff(o, out, err); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return validation;
  }

  try {
    return action ? action() : validation;
  } catch (const ValidationError& e) {
    for (const auto& issue : e.issues()) err << "error: " << issue.field << ": " << issue.message << '\n';
    return validation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return validation;
  }
}

}  // namespace qcd::cli
