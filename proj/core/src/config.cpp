#include "qcd/config.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "qcd/error.hpp"

namespace qcd {

using nlohmann::json;

std::string_view to_string(PolicyVariant variant) {
  switch (variant) {
    case PolicyVariant::cusum:
      return "cusum";
    case PolicyVariant::me_cusum:
      return "me-cusum";
    case PolicyVariant::de_me_cusum:
      return "de-me-cusum";
    case PolicyVariant::rss:
      return "rss";
  }
  return "?";
}

PolicyVariant parse_policy_variant(std::string_view name) {
  if (name == "cusum") return PolicyVariant::cusum;
  if (name == "me-cusum") return PolicyVariant::me_cusum;
  if (name == "de-me-cusum") return PolicyVariant::de_me_cusum;
  if (name == "rss") return PolicyVariant::rss;
  throw ValidationError("policy.variant",
                        fmt::format("unknown variant '{}' (cusum | me-cusum | de-me-cusum | rss)", name));
}

namespace {

/// Reads typed fields from a JSON object, reporting errors with their path.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ValidationError(path_.empty() ? "config" : path_, "must be an object");
  }

  std::string field(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }
  bool has(std::string_view key) const { return node_.contains(key) && !node_.at(std::string(key)).is_null(); }
  const json& raw(std::string_view key) const { return node_.at(std::string(key)); }

  template <class T>
  T get(std::string_view key) const {
    if (!node_.contains(key)) throw ValidationError(field(key), "is required");
    return convert<T>(node_.at(std::string(key)), field(key));
  }

  template <class T>
  T get_or(std::string_view key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  template <class T>
  std::optional<T> maybe(std::string_view key) const {
    if (!has(key)) return std::nullopt;
    return get<T>(key);
  }

  std::map<int, double> indexed(std::string_view key) const {
    std::map<int, double> out;
    if (!has(key)) return out;
    const json& node = raw(key);
    if (!node.is_object()) throw ValidationError(field(key), "must be an object keyed by level");
    for (const auto& [k, v] : node.items()) {
      int index = 0;
      try {
        std::size_t used = 0;
        index = std::stoi(k, &used);
        if (used != k.size()) throw std::invalid_argument(k);
      } catch (const std::exception&) {
        throw ValidationError(field(key) + "." + k, "keys must be integer levels");
      }
      out[index] = convert<double>(v, field(key) + "." + k);
    }
    return out;
  }

  template <class T>
  static T convert(const json& value, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!value.is_number()) throw ValidationError(where, "must be a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!value.is_number_integer() && !value.is_number_unsigned()) {
          throw ValidationError(where, "must be an integer");
        }
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!value.is_boolean()) throw ValidationError(where, "must be true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!value.is_string()) throw ValidationError(where, "must be a string");
      }
      return value.get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(where, e.what());
    }
  }

 private:
  const json& node_;
  std::string path_;
};

DensitySpec parse_density(const json& node, const std::string& path) {
  const Reader r(node, path);
  DensitySpec density;
  density.family = parse_density_family(r.get_or<std::string>("family", "gaussian"));
  density.mean = r.get<double>("mean");
  density.std = r.get<double>("std");
  density.validate(path);
  return density;
}

json density_json(const DensitySpec& d) {
  return json{{"family", std::string(to_string(d.family))}, {"mean", d.mean}, {"std", d.std}};
}

Scenario parse_scenario(const json& node) {
  const Reader r(node, "scenario");
  Scenario scenario;
  if (!r.has("experiments") || !r.raw("experiments").is_array()) {
    throw ValidationError("scenario.experiments", "must be an array of {pre, post} objects");
  }
  int id = 1;
  for (const auto& item : r.raw("experiments")) {
    const std::string path = fmt::format("scenario.experiments[{}]", id - 1);
    const Reader e(item, path);
    if (e.has("id") && e.get<int>("id") != id) throw ValidationError(path + ".id", fmt::format("expected {}", id));
    scenario.models.emplace_back(id, parse_density(e.raw("pre"), path + ".pre"),
                                 parse_density(e.raw("post"), path + ".post"));
    ++id;
  }
  if (r.has("change_point")) {
    const json& cp = r.raw("change_point");
    if (cp.is_string()) {
      const auto text = cp.get<std::string>();
      if (text != "inf" && text != "never") throw ValidationError("scenario.change_point", "use an integer or \"inf\"");
      scenario.change_point = std::nullopt;
    } else {
      scenario.change_point = Reader::convert<std::int64_t>(cp, "scenario.change_point");
    }
  } else if (node.contains("change_point")) {
    scenario.change_point = std::nullopt;  // explicit null
  }
  scenario.horizon = r.maybe<std::int64_t>("horizon");
  scenario.validate();
  return scenario;
}

json scenario_json(const Scenario& s) {
  json experiments = json::array();
  for (const auto& m : s.models) {
    experiments.push_back({{"id", m.id()}, {"pre", density_json(m.pre())}, {"post", density_json(m.post())}});
  }
  json out{{"experiments", experiments}};
  out["change_point"] = s.change_point ? json(*s.change_point) : json("inf");
  if (s.horizon) out["horizon"] = *s.horizon;
  return out;
}

json indexed_json(const std::map<int, double>& values) {
  json out = json::object();
  for (const auto& [k, v] : values) out[std::to_string(k)] = v;
  return out;
}

PolicyConfig parse_policy(const json& node, const std::string& path) {
  const Reader r(node, path);
  PolicyConfig p;
  try {
    p.variant = parse_policy_variant(r.get<std::string>("variant"));
  } catch (const ValidationError& e) {
    throw ValidationError(r.field("variant"), e.issues().front().message);
  }
  p.label = r.get_or<std::string>("label", std::string(to_string(p.variant)));
  p.threshold = r.maybe<double>("threshold");
  p.gamma = r.maybe<double>("gamma");
  p.scales = r.indexed("scales");
  p.budgets = r.indexed("budgets");
  p.idle_drift = r.get_or<double>("idle_drift", 0.0);
  p.top_truncation = r.maybe<double>("top_truncation");
  p.experiment = r.maybe<int>("experiment");
  p.p_hi = r.get_or<double>("p_hi", 0.5);
  if (p.threshold && p.gamma) throw ValidationError(path, "set either threshold or gamma, not both");
  return p;
}

json policy_json(const PolicyConfig& p) {
  json out{{"variant", std::string(to_string(p.variant))}, {"label", p.label}};
  if (p.threshold) out["threshold"] = *p.threshold;
  if (p.gamma) out["gamma"] = *p.gamma;
  if (!p.scales.empty()) out["scales"] = indexed_json(p.scales);
  if (!p.budgets.empty()) out["budgets"] = indexed_json(p.budgets);
  if (p.idle_drift != 0.0) out["idle_drift"] = p.idle_drift;
  if (p.top_truncation) out["top_truncation"] = *p.top_truncation;
  if (p.experiment) out["experiment"] = *p.experiment;
  if (p.variant == PolicyVariant::rss) out["p_hi"] = p.p_hi;
  return out;
}

SimulationConfig parse_simulation(const json& node) {
  const Reader r(node, "simulation");
  SimulationConfig s;
  s.trials = r.get_or<std::int64_t>("trials", s.trials);
  s.horizon = r.maybe<std::int64_t>("horizon");
  s.seed = r.get_or<std::uint64_t>("seed", s.seed);
  s.confidence = r.get_or<double>("confidence", s.confidence);
  s.threads = r.get_or<unsigned>("threads", s.threads);
  s.cycles = r.maybe<std::int64_t>("cycles");
  s.safety_horizon = r.maybe<std::int64_t>("safety_horizon");
  s.arlfa_trials = r.maybe<std::int64_t>("arlfa_trials");
  IssueCollector issues;
  issues.check(s.trials >= 1, "simulation.trials", "must be >= 1");
  issues.check(s.confidence > 0.0 && s.confidence < 1.0, "simulation.confidence", "must lie in (0, 1)");
  if (s.horizon) issues.check(*s.horizon >= 1, "simulation.horizon", "must be >= 1");
  issues.throw_if_any();
  return s;
}

json simulation_json(const SimulationConfig& s) {
  json out{{"trials", s.trials}, {"seed", s.seed}, {"confidence", s.confidence}, {"threads", s.threads}};
  if (s.horizon) out["horizon"] = *s.horizon;
  if (s.cycles) out["cycles"] = *s.cycles;
  if (s.safety_horizon) out["safety_horizon"] = *s.safety_horizon;
  if (s.arlfa_trials) out["arlfa_trials"] = *s.arlfa_trials;
  return out;
}

CalibrationConfig parse_calibration(const json& node) {
  const Reader r(node, "calibration");
  CalibrationConfig c;
  c.gamma = r.get_or<double>("gamma", c.gamma);
  c.betas = r.indexed("betas");
  c.data_efficient = r.get_or<bool>("data_efficient", false);
  auto& s = c.search;
  s.tolerance = r.get_or<double>("tolerance", s.tolerance);
  s.cycles = r.get_or<std::int64_t>("cycles", s.cycles);
  s.initial_scale = r.get_or<double>("initial_scale", s.initial_scale);
  s.scale_growth = r.get_or<double>("scale_growth", s.scale_growth);
  s.max_scale = r.get_or<double>("max_scale", s.max_scale);
  s.max_budget = r.get_or<double>("max_budget", s.max_budget);
  s.idle_drift = r.get_or<double>("idle_drift", s.idle_drift);
  s.max_sweeps = r.get_or<int>("max_sweeps", s.max_sweeps);
  s.bisection_steps = r.get_or<int>("bisection_steps", s.bisection_steps);
  s.max_evaluations = r.get_or<int>("max_evaluations", s.max_evaluations);
  if (c.betas.empty()) throw ValidationError("calibration.betas", "is required");
  return c;
}

json calibration_json(const CalibrationConfig& c) {
  const auto& s = c.search;
  return json{{"gamma", c.gamma},
              {"betas", indexed_json(c.betas)},
              {"data_efficient", c.data_efficient},
              {"tolerance", s.tolerance},
              {"cycles", s.cycles},
              {"initial_scale", s.initial_scale},
              {"scale_growth", s.scale_growth},
              {"max_scale", s.max_scale},
              {"max_budget", s.max_budget},
              {"idle_drift", s.idle_drift},
              {"max_sweeps", s.max_sweeps},
              {"bisection_steps", s.bisection_steps},
              {"max_evaluations", s.max_evaluations}};
}

TradeoffConfig parse_tradeoff(const json& node) {
  const Reader r(node, "tradeoff");
  TradeoffConfig t;
  t.gammas = r.get<std::vector<double>>("gammas");
  if (r.has("policies")) {
    const json& list = r.raw("policies");
    if (!list.is_array()) throw ValidationError("tradeoff.policies", "must be an array");
    for (std::size_t k = 0; k < list.size(); ++k) {
      t.policies.push_back(parse_policy(list[k], fmt::format("tradeoff.policies[{}]", k)));
    }
  }
  return t;
}

json tradeoff_json(const TradeoffConfig& t) {
  json out{{"gammas", t.gammas}};
  if (!t.policies.empty()) {
    json list = json::array();
    for (const auto& p : t.policies) list.push_back(policy_json(p));
    out["policies"] = list;
  }
  return out;
}

}  // namespace

RunConfig parse_config(const json& doc) {
  const Reader r(doc, "");
  RunConfig config;
  if (!r.has("scenario")) throw ValidationError("scenario", "is required");
  config.scenario = parse_scenario(r.raw("scenario"));
  if (r.has("policy")) config.policy = parse_policy(r.raw("policy"), "policy");
  if (r.has("simulation")) config.simulation = parse_simulation(r.raw("simulation"));
  if (r.has("output")) {
    const Reader o(r.raw("output"), "output");
    config.output.path = o.maybe<std::string>("path");
    config.output.format = o.get_or<std::string>("format", config.output.format);
    if (config.output.format != "json" && config.output.format != "csv") {
      throw ValidationError("output.format", "must be json or csv");
    }
  }
  if (r.has("calibration")) config.calibration = parse_calibration(r.raw("calibration"));
  if (r.has("tradeoff")) config.tradeoff = parse_tradeoff(r.raw("tradeoff"));
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", "cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError("config", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& config) {
  json out{{"scenario", scenario_json(config.scenario)}, {"simulation", simulation_json(config.simulation)}};
  if (config.policy) out["policy"] = policy_json(*config.policy);
  json output{{"format", config.output.format}};
  if (config.output.path) output["path"] = *config.output.path;
  out["output"] = output;
  if (config.calibration) out["calibration"] = calibration_json(*config.calibration);
  if (config.tradeoff) out["tradeoff"] = tradeoff_json(*config.tradeoff);
  return out;
}

namespace {

double resolved_threshold(const PolicyConfig& config) {
  if (config.threshold) return *config.threshold;
  if (config.gamma) return set_threshold(*config.gamma).threshold;
  throw ValidationError("policy", "set threshold or gamma");
}

}  // namespace

ResolvedPolicy resolve_policy(const PolicyConfig& config, const Scenario& scenario) {
  const int m = static_cast<int>(scenario.models.size());
  const double threshold = resolved_threshold(config);
  ResolvedPolicy out;
  out.label = config.label.empty() ? std::string(to_string(config.variant)) : config.label;

  auto check_keys = [](const std::map<int, double>& values, int lo, int hi, const char* name) {
    for (const auto& [k, v] : values) {
      if (k < lo || k > hi) {
        throw ValidationError(fmt::format("policy.{}.{}", name, k), fmt::format("level must lie in [{}, {}]", lo, hi));
      }
    }
  };

  switch (config.variant) {
    case PolicyVariant::cusum: {
      const int which = config.experiment.value_or(m);
      if (which < 1 || which > m) throw ValidationError("policy.experiment", fmt::format("must lie in [1, {}]", m));
      const auto& src = scenario.models[static_cast<std::size_t>(which) - 1];
      out.models.emplace_back(1, src.pre(), src.post());
      out.policy = PolicyParams::cusum(threshold);
      break;
    }
    case PolicyVariant::me_cusum:
    case PolicyVariant::de_me_cusum: {
      const bool de = config.variant == PolicyVariant::de_me_cusum;
      auto params = PolicyParams::make(m, threshold, de);
      check_keys(config.scales, de ? 1 : 2, m, "scales");
      check_keys(config.budgets, de ? 0 : 1, m - 1, "budgets");
      for (const auto& [k, v] : config.scales) params.set_scale(k, v);
      for (const auto& [k, v] : config.budgets) params.set_budget(k, v);
      params.idle_drift = config.idle_drift;
      params.top_truncation = config.top_truncation;
      params.validate();
      out.models = scenario.models;
      out.policy = params;
      break;
    }
    case PolicyVariant::rss: {
      if (m != 2) throw ValidationError("scenario.experiments", "rss needs exactly two experiments");
      RssParams params{threshold, config.p_hi};
      params.validate();
      out.models = scenario.models;
      out.policy = params;
      break;
    }
  }
  return out;
}

CalibrationTarget resolve_target(const CalibrationConfig& config, int experiments) {
  CalibrationTarget target;
  target.gamma = config.gamma;
  target.data_efficient = config.data_efficient;
  target.betas.assign(static_cast<std::size_t>(experiments) + 1, 0.0);
  for (const auto& [k, v] : config.betas) {
    if (k < 1 || k > experiments) {
      throw ValidationError(fmt::format("calibration.betas.{}", k), fmt::format("must lie in [1, {}]", experiments));
    }
    target.betas[static_cast<std::size_t>(k)] = v;
  }
  try {
    target.validate();
  } catch (const ValidationError& e) {
    std::vector<FieldIssue> issues = e.issues();
    for (auto& issue : issues) issue.field = "calibration." + issue.field;
    throw ValidationError(std::move(issues));
  }
  return target;
}

}  // namespace qcd
