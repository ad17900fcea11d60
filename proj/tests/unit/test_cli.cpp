#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcd/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kTwo = R"([
  {"pre": {"family": "gaussian", "mean": 0, "std": 1}, "post": {"family": "gaussian", "mean": 0.75, "std": 1}},
  {"pre": {"family": "gaussian", "mean": 0, "std": 1}, "post": {"family": "gaussian", "mean": 1.0, "std": 1}}
])";

const char* kThree = R"([
  {"pre": {"family": "gaussian", "mean": 0, "std": 1}, "post": {"family": "gaussian", "mean": 0.5, "std": 1}},
  {"pre": {"family": "gaussian", "mean": 0, "std": 1}, "post": {"family": "gaussian", "mean": 0.75, "std": 1}},
  {"pre": {"family": "gaussian", "mean": 0, "std": 1}, "post": {"family": "gaussian", "mean": 1.0, "std": 1}}
])";

struct Result {
  int code;
  std::string out;
  std::string err;
};

class Workspace {
 public:
  Workspace() : dir_(fs::temp_directory_path() / fs::path("qcd-cli-" + std::to_string(counter_++))) {
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }

  std::string write(const std::string& name, const json& doc) const {
    const auto path = dir_ / name;
    std::ofstream(path) << doc.dump(2);
    return path.string();
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

 private:
  static inline int counter_ = 0;
  fs::path dir_;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = qcd::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

json two_experiment(double scale, double budget) {
  return json{{"scenario", {{"experiments", json::parse(kTwo)}, {"change_point", 50}}},
              {"policy", {{"variant", "me-cusum"}, {"gamma", 1000}, {"scales", {{"2", scale}}}, {"budgets", {{"1", budget}}}}},
              {"simulation", {{"seed", 7}}},
              {"output", {{"format", "csv"}}}};
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("trace is byte-identical for the same seed") {
    Workspace ws;
    const auto cfg = ws.write("c.json", two_experiment(1.0, 2.0));
    REQUIRE(run({"trace", "--config", cfg, "--output", ws.path("a.csv")}).code == 0);
    REQUIRE(run({"trace", "--config", cfg, "--output", ws.path("b.csv")}).code == 0);
    CHECK(slurp(ws.path("a.csv")) == slurp(ws.path("b.csv")));
    REQUIRE(run({"trace", "--config", cfg, "--seed", "8", "--output", ws.path("c.csv")}).code == 0);
    CHECK(slurp(ws.path("a.csv")) != slurp(ws.path("c.csv")));
  }

  TEST_CASE("the top experiment runs exactly when the prior statistic is non-negative") {
    Workspace ws;
    const auto cfg = ws.write("c.json", two_experiment(1.0, 2.0));
    for (const char* seed : {"1", "2", "3", "4"}) {
      const auto r = run({"trace", "--config", cfg, "--seed", seed});
      REQUIRE(r.code == 0);
      const auto rows = csv_rows(r.out);
      REQUIRE(rows.size() > 2);
      CHECK(rows[0] == std::vector<std::string>{"n", "level", "action", "observation", "statistic", "event"});
      double prior = 0.0;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK((rows[i][1] == "2") == (prior >= 0.0));
        prior = std::stod(rows[i][4]);
      }
    }
  }

  TEST_CASE("data-efficient trace contains idle climbs of the drift") {
    Workspace ws;
    json doc{{"scenario", {{"experiments", json::parse(kThree)}, {"change_point", 50}}},
             {"policy",
              {{"variant", "de-me-cusum"},
               {"gamma", 1000},
               {"scales", {{"1", 1.0}, {"2", 1.0}, {"3", 1.0}}},
               {"budgets", {{"0", 4.0}, {"1", 3.0}, {"2", 2.0}}},
               {"idle_drift", 0.1}}},
             {"output", {{"format", "csv"}}}};
    const auto cfg = ws.write("c.json", doc);
    int idle_rises = 0;
    for (const char* seed : {"1", "2", "3"}) {
      const auto rows = csv_rows(run({"trace", "--config", cfg, "--seed", seed}).out);
      for (std::size_t i = 2; i < rows.size(); ++i) {
        if (rows[i][2] == "idle" && rows[i - 1][2] == "idle" && rows[i][5].empty()) {
          CHECK(std::stod(rows[i][4]) - std::stod(rows[i - 1][4]) == doctest::Approx(0.1));
          ++idle_rises;
        }
      }
    }
    CHECK(idle_rises > 0);
  }

  TEST_CASE("validation failures exit 1 with field diagnostics") {
    Workspace ws;
    auto doc = two_experiment(1.0, 2.0);
    doc["policy"]["scales"]["2"] = -1.0;
    const auto r = run({"trace", "--config", ws.write("bad.json", doc)});
    CHECK(r.code == 1);
    CHECK(r.err.find("scales.2") != std::string::npos);
    CHECK(run({"trace", "--config", ws.path("missing.json")}).code == 1);
    CHECK(run({"bogus"}).code == 1);
  }

  TEST_CASE("wadd reports simulated mean and penalty separately") {
    Workspace ws;
    auto doc = two_experiment(1.0, 2.0);
    doc["scenario"]["change_point"] = 1;
    doc["output"]["format"] = "json";
    const auto r = run({"evaluate", "wadd", "--config", ws.write("c.json", doc), "--trials", "200", "--gamma", "100"});
    REQUIRE(r.code == 0);
    const auto out = json::parse(r.out);
    CHECK(out["penalty"] == 2.0);
    CHECK(out["total"]["mean"].get<double>() ==
          doctest::Approx(out["simulated"]["mean"].get<double>() + 2.0));
    CHECK(out["config"]["simulation"]["trials"] == 200);
    CHECK(out["seed"] == 7);
  }

  TEST_CASE("arlfa respects the false-alarm level") {
    Workspace ws;
    auto doc = two_experiment(1.0, 2.0);
    doc["scenario"]["change_point"] = "inf";
    doc["output"]["format"] = "json";
    const auto r = run({"evaluate", "arlfa", "--config", ws.write("c.json", doc), "--trials", "300"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["mean"].get<double>() >= 1000.0);
  }

  TEST_CASE("strict mode promotes safety-horizon hits") {
    Workspace ws;
    auto doc = two_experiment(1.0, 2.0);
    doc["scenario"]["change_point"] = "inf";
    doc["simulation"]["safety_horizon"] = 20;
    const auto cfg = ws.write("c.json", doc);
    const auto lax = run({"evaluate", "arlfa", "--config", cfg, "--trials", "20"});
    CHECK(lax.code == 0);
    CHECK(lax.err.find("safety horizon") != std::string::npos);
    CHECK(run({"evaluate", "arlfa", "--config", cfg, "--trials", "20", "--strict"}).code == 2);
  }

  TEST_CASE("por output has a row per experiment") {
    Workspace ws;
    auto doc = two_experiment(1.0, 2.0);
    doc["scenario"]["change_point"] = "inf";
    doc["simulation"]["horizon"] = 20000;
    const auto r = run({"evaluate", "por", "--config", ws.write("c.json", doc), "--trials", "2"});
    REQUIRE(r.code == 0);
    const auto rows = csv_rows(r.out);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"experiment", "por", "por_se"});
    CHECK(r.out.find("# config: ") == 0);
  }

  TEST_CASE("calibrate rejects an infeasible target") {
    Workspace ws;
    json doc{{"scenario", {{"experiments", json::parse(kThree)}}},
             {"calibration", {{"gamma", 1000}, {"betas", {{"1", 0.5}, {"2", 0.4}, {"3", 0.4}}}}}};
    const auto r = run({"calibrate", "--config", ws.write("c.json", doc)});
    CHECK(r.code == 1);
    CHECK(r.err.find("calibration") != std::string::npos);
  }

  TEST_CASE("calibrate emits a table row") {
    Workspace ws;
    json doc{{"scenario", {{"experiments", json::parse(kTwo)}}},
             {"calibration", {{"gamma", 1000}, {"betas", {{"1", 0.5}, {"2", 0.5}}}}},
             {"output", {{"format", "csv"}}}};
    const auto r = run({"calibrate", "--config", ws.write("c.json", doc)});
    REQUIRE(r.code == 0);
    const auto rows = csv_rows(r.out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].front() == "beta_1");
  }

  TEST_CASE("single-point tradeoff grid gives one row") {
    Workspace ws;
    json doc{{"scenario", {{"experiments", json::parse(kTwo)}, {"change_point", 1}}},
             {"policy", {{"variant", "cusum"}, {"experiment", 2}}},
             {"tradeoff", {{"gammas", {50}}}},
             {"simulation", {{"trials", 100}}},
             {"output", {{"format", "csv"}}}};
    const auto r = run({"tradeoff", "--config", ws.write("c.json", doc)});
    REQUIRE(r.code == 0);
    const auto rows = csv_rows(r.out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"gamma", "log_arlfa", "wadd", "wadd_se"});
  }

  TEST_CASE("multiple tradeoff curves go to separate files") {
    Workspace ws;
    json doc{{"scenario", {{"experiments", json::parse(kTwo)}, {"change_point", 1}}},
             {"tradeoff",
              {{"gammas", {20, 40}},
               {"policies",
                {{{"variant", "cusum"}, {"label", "cusum"}, {"experiment", 2}},
                 {{"variant", "rss"}, {"label", "rss"}, {"p_hi", 0.5}}}}}},
             {"simulation", {{"trials", 50}}},
             {"output", {{"format", "csv"}}}};
    const auto r = run({"tradeoff", "--config", ws.write("c.json", doc), "--output", ws.path("curve.csv")});
    REQUIRE(r.code == 0);
    CHECK(csv_rows(slurp(ws.path("curve.cusum.csv"))).size() == 3);
    CHECK(csv_rows(slurp(ws.path("curve.rss.csv"))).size() == 3);
  }
}
