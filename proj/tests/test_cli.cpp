#include "doctest.h"

#include "geobvp/cli.hpp"
#include "geobvp/errors.hpp"
#include "geobvp/geodesic.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace geobvp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kScenarios = GEOBVP_SCENARIO_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "geobvp_test_cli" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json base() {
  return json::parse(R"({"version": 1, "name": "t", "metric": {"name": "euclidean", "dim": 2},
                         "boundary": {"kind": "point_pair", "p": [0, 0], "q": [1, 0]}})");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_quiet(const std::string& sub, const fs::path& scenario, const fs::path& out, RunOptions o = {}) {
  std::ostringstream log;
  return run(sub, scenario.string(), out.string(), o, log);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("scenario validation rejects malformed input") {
  CHECK_NOTHROW(parse_scenario(base()));
  auto expect_config = [](json j) {
    try {
      parse_scenario(j);
      FAIL("accepted invalid scenario: " << j.dump());
    } catch (const GeoError& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
    }
  };
  json j = base();
  j["colour"] = 1;
  expect_config(j);
  j = base();
  j.erase("version");
  expect_config(j);
  j = base();
  j["version"] = 2;
  expect_config(j);
  j = base();
  j["solver"] = {{"segments", 8}};
  expect_config(j);
  j = base();
  j["solver"] = {{"tol", 0.0}};
  expect_config(j);
  j = base();
  j["solver"] = {{"rtol", -1e-9}};
  expect_config(j);
  j = base();
  j["solver"] = {{"L_max", 0.0}};
  expect_config(j);
  j = base();
  j["solver"] = {{"segments", "many"}};
  expect_config(j);
  j = base();
  j["solver"] = {{"seeds", {{"spread", 2}}}};
  expect_config(j);
  j = base();
  j["experiment"] = {{"meshes", {64, 8}}};
  expect_config(j);
  j = base();
  j["metric"]["name"] = "hyperbolic";
  expect_config(j);
  j = base();
  j["boundary"]["kind"] = "ring";
  expect_config(j);
}

TEST_CASE("config failures map to exit code 2") {
  const fs::path dir = scratch("config");
  std::ofstream(dir / "bad.json") << R"({"version": 1, "name": "x"})";
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK(run_quiet("solve", dir / "bad.json", dir / "o1") == kExitConfig);
  CHECK(run_quiet("solve", dir / "broken.json", dir / "o2") == kExitConfig);
  CHECK(run_quiet("solve", dir / "missing.json", dir / "o3") == kExitConfig);
  CHECK(run_quiet("bogus", kScenarios / "flat_pair.json", dir / "o4") == kExitConfig);
  CHECK(run_quiet("solve", kScenarios / "flat_pair.json", dir / "o5", RunOptions{std::nullopt, 8}) == kExitConfig);
}

TEST_CASE("every shipped scenario parses") {
  for (const auto& e : fs::directory_iterator(kScenarios)) {
    CAPTURE(e.path().string());
    CHECK_NOTHROW(load_scenario(e.path().string()));
  }
}

TEST_CASE("solve on a flat point pair writes one solution and a manifest") {
  const fs::path out = scratch("flat");
  REQUIRE(run_quiet("solve", kScenarios / "flat_pair.json", out) == kExitOk);
  const auto rows = read_csv(out / "solutions.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][0] == "id");
  CHECK(fs::exists(out / "curves" / "curve_0.csv"));
  const json m = json::parse(slurp(out / "manifest.json"));
  CHECK(m["subcommand"] == "solve");
  CHECK(m["exit_code"] == 0);
  CHECK(m["seed"] == 1);
  CHECK(m["outputs"].size() == 3);
  // Length of the chord (0,0)-(1,0.5).
  CHECK(std::stod(rows[1][1]) == doctest::Approx(std::sqrt(1.25)).epsilon(1e-10));
}

TEST_CASE("admissibility on the diagonal is not applicable") {
  const fs::path out = scratch("diag");
  REQUIRE(run_quiet("admissibility", kScenarios / "diagonal.json", out) == kExitOk);
  const json a = json::parse(slurp(out / "admissibility.json"));
  CHECK(a["verdict"] == "not_applicable");
  CHECK(a["applicable"] == false);
  const json m = json::parse(slurp(out / "manifest.json"));
  CHECK_FALSE(m["warnings"].empty());
}

TEST_CASE("curve CSV round trip preserves the geodesic residual") {
  const fs::path out = scratch("roundtrip");
  const fs::path scen = kScenarios / "sphere_antipodal.json";
  REQUIRE(run_quiet("solve", scen, out) == kExitOk);
  const Scenario sc = load_scenario(scen.string());
  const auto rows = read_csv(out / "solutions.csv");
  REQUIRE(rows.size() >= 2);
  const auto& header = rows[0];
  const auto col = static_cast<std::size_t>(std::find(header.begin(), header.end(), "geodesic_residual") - header.begin());
  REQUIRE(col < header.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double recorded = std::stod(rows[i][col]);
    const auto curve =
        load_curve_csv((out / "curves" / ("curve_" + rows[i][0] + ".csv")).string(), sc.g.periods());
    CHECK(curve.segments() == sc.solver.shooting.segments);
    CHECK(geodesic_residual(sc.g, curve) <= 2.0 * recorded);
  }
}

TEST_CASE("all seeds failing to converge gives exit code 3") {
  const fs::path dir = scratch("noconv");
  json j = json::parse(slurp(kScenarios / "sphere_long_arc.json"));
  j["solver"]["max_iters"] = 1;
  j["solver"]["tol"] = 1e-14;
  j["solver"].erase("initial");
  std::ofstream(dir / "s.json") << j.dump();
  CHECK(run_quiet("solve", dir / "s.json", dir / "out") == kExitNoConvergence);
  const json m = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["exit_code"] == kExitNoConvergence);
}

TEST_CASE("identical scenario and seed give identical manifests") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  REQUIRE(run_quiet("scan", kScenarios / "sphere_focal.json", a) == kExitOk);
  REQUIRE(run_quiet("scan", kScenarios / "sphere_focal.json", b) == kExitOk);
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  const fs::path c = scratch("det_c");
  REQUIRE(run_quiet("scan", kScenarios / "sphere_focal.json", c, RunOptions{99, std::nullopt}) == kExitOk);
  const json m = json::parse(slurp(c / "manifest.json"));
  CHECK(m["seed"] == 99);
}
