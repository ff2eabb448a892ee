#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fedminimax/cli.hpp"
#include "synthetic_manifest.hpp"

using namespace fedminimax;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream(p) << j.dump(2);
}

json small_config() {
  return {{"problem",
           {{"generator",
             {{"class_tag", "NC_SC"}, {"n", 2}, {"d1", 2}, {"d2", 2}, {"sigma", 0.1}, {"seed", 1}}}}},
          {"schedule", {{"eta_x", 0.01}, {"eta_y", 0.05}}},
          {"sync", {{"tau", 2}, {"T", 20}}},
          {"seeds", {0, 1}},
          {"output_dir", "c_out"}};
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({}).code == 1);
  CHECK(run({"run", "--config"}).code == 1);
  CHECK(run({"fit", "--axis", "T", "missing_manifest.json"}).code == 1);
  CHECK(run({"accept", "no-such-suite"}).code == 1);
  const Result r = run({"run", "--config", "does_not_exist.json"});
  CHECK(r.code == 1);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("help exits 0") { CHECK(run({"--help"}).code == 0); }

TEST_CASE("fit prints the slope of a synthetic power law") {
  write_synthetic_manifest("c_fit", {1000, 2000, 4000, 8000, 16000}, 3,
                           [](double T, int) { return 1.0 / std::sqrt(T); });
  const Result r = run({"fit", "--axis", "T", "--metric", "grad_phi_sq", "--reducer", "mean",
                        "c_fit/manifest.json"});
  CHECK(r.code == 0);
  const auto pos = r.out.find("slope ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.out.substr(pos + 6)) == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(r.out.find("(burn-in)") != std::string::npos);
}

TEST_CASE("gen-problem writes a loadable problem") {
  write_json("c_gen/params.json", {{"class_tag", "NC_PL"}, {"n", 3}, {"d1", 3}, {"d2", 3}});
  const Result r = run({"gen-problem", "--config", "c_gen/params.json", "--out",
                        "c_gen/problem.json", "--seed", "5"});
  CHECK(r.code == 0);
  std::ifstream in("c_gen/problem.json");
  const auto p = problem_from_json(json::parse(in));
  CHECK(p.n() == 3);
  CHECK(p.class_tag() == ProblemClass::kNcPl);
  CHECK(p.seed() == 5);

  const Result v = run({"verify", "--config", "c_gen/problem.json", "--samples", "200"});
  CHECK(v.code == 0);
  const json report = json::parse(v.out);
  CHECK(report["assumptions"]["pl_ok"] == true);
  for (const auto& c : report["oracle_checks"]) CHECK(c["passed"] == true);

  CHECK(run({"gen-problem", "--config", "c_gen/problem.json", "--seed", "1"}).code == 1);
}

TEST_CASE("sweep and run with overrides") {
  write_json("c_cfg/config.json", small_config());
  Result r = run({"sweep", "--config", "c_cfg/config.json", "--out", "c_sweep", "--threads",
                  "2", "--metric-stride", "5"});
  CHECK(r.code == 0);
  CHECK(r.err.find("flag overrides") != std::string::npos);
  std::ifstream in("c_sweep/manifest.json");
  const json m = json::parse(in);
  CHECK(m["overrides"]["output_dir"]["flag"] == "c_sweep");
  CHECK(m["overrides"]["metric_stride"]["flag"] == 5);
  CHECK(m["cells"][0]["csv_files"].size() == 2);

  r = run({"run", "--config", "c_cfg/config.json", "--out", "c_run", "--seed", "9"});
  CHECK(r.code == 0);
  CHECK(fs::exists("c_run/cell0000_seed9.csv"));

  json multi = small_config();
  multi["sweep"] = {{"tau", {1, 2}}};
  write_json("c_cfg/multi.json", multi);
  CHECK(run({"run", "--config", "c_cfg/multi.json"}).code == 1);
}

TEST_CASE("accept") {
  Result r = run({"accept", "--list"});
  CHECK(r.code == 0);
  for (const char* id : {"tau1-equivalence", "theorem1-rate", "linear-speedup",
                         "sync-error-law", "moreau-gradient", "pl-growth",
                         "snapshot-semantics", "momentum-mixing", "momentum-parity",
                         "determinism"}) {
    CHECK(r.out.find(id) != std::string::npos);
  }
  r = run({"accept", "tau1-equivalence", "--out", "c_accept"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("PASS tau1-equivalence", 0) == 0);
}
