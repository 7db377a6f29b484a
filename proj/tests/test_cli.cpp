// End-to-end runs of the command-line tool.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("parsys_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(PARSYS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string scenario(const std::string& name) { return std::string(PARSYS_SCENARIO_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

fs::path write_config(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Cli, SneibergExample) {
  const auto out = scratch("sneiberg");
  ASSERT_EQ(run("sneiberg --config " + scenario("sneiberg.json") + " --out " + out.string()), 0);
  const json r = load(out / "report.json");
  EXPECT_NEAR(r["radius"].get<double>(), 1.0 / 36, 1e-15);
  EXPECT_NEAR(r["inverse_bound"].get<double>(), 8.0, 1e-15);
}

TEST(Cli, AnalyzeIdentity) {
  const auto out = scratch("analyze");
  ASSERT_EQ(run("analyze-tensor --config " + scenario("analyze_identity.json") + " --out " + out.string()), 0);
  const json r = load(out / "report.json");
  EXPECT_NEAR(r["gamma_legendre"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(r["gamma_lh"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(r["gamma_garding"].get<double>(), 1.0, 1e-8);
  EXPECT_TRUE(r["flags"]["garding_ok"].get<bool>());
}

TEST(Cli, MalformedConfigWritesNothing) {
  const auto dir = scratch("malformed");
  const auto cfg = write_config(dir / "cfg.json", "{\"command\": \"sneiberg\", \"params\": {");
  const auto out = dir / "out";
  EXPECT_EQ(run("sneiberg --config " + cfg.string() + " --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, UnknownKeyIsRejected) {
  const auto dir = scratch("unknown");
  const auto cfg = write_config(
      dir / "cfg.json", R"({"command": "sneiberg", "params": {"theta": 0.5, "beta": 1, "gamma": 1}, "colour": 1})");
  const auto out = dir / "out";
  EXPECT_EQ(run("sneiberg --config " + cfg.string() + " --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, InvalidParameterIsRejected) {
  const auto dir = scratch("theta");
  const auto cfg = write_config(dir / "cfg.json", R"({"command": "sneiberg", "params": {"theta": 1.5, "beta": 1, "gamma": 1}})");
  EXPECT_EQ(run("sneiberg --config " + cfg.string() + " --out " + (dir / "out").string()), 2);
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Cli, CommandMismatchIsRejected) {
  const auto out = scratch("mismatch");
  EXPECT_EQ(run("lions --config " + scenario("sneiberg.json") + " --out " + out.string()), 2);
}

TEST(Cli, SolverFailureWritesDiagnostic) {
  const auto dir = scratch("failure");
  const auto cfg = write_config(dir / "cfg.json", R"({
    "command": "solve-quasilinear",
    "params": {"mesh": {"n": 4}, "time": {"T": 1, "N": 4},
               "coefficients": {"name": "constant"}, "forcing": {"name": "linear_mass", "c": 10000},
               "initial": "sine", "mode": "continuation"}})");
  const auto out = dir / "out";
  EXPECT_EQ(run("solve-quasilinear --config " + cfg.string() + " --out " + out.string()), 3);
  ASSERT_TRUE(fs::exists(out / "diagnostic.json"));
  const json d = load(out / "diagnostic.json");
  EXPECT_EQ(d["reason"], "window_under_resolved");
  EXPECT_EQ(d["command"], "solve-quasilinear");
}

TEST(Cli, RerunsAreByteIdentical) {
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  const std::string cfg = scenario("quasilinear_continuation.json");
  ASSERT_EQ(run("solve-quasilinear --config " + cfg + " --out " + a.string()), 0);
  ASSERT_EQ(run("solve-quasilinear --config " + cfg + " --out " + b.string()), 0);
  for (const auto& e : fs::directory_iterator(a)) {
    const auto other = b / e.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path().filename();
  }
  const json r = load(a / "report.json");
  EXPECT_EQ(r["windows"].size(), 22u);
}

TEST(Cli, SeedControlsRandomFamilies) {
  const auto a = scratch("seed_a"), b = scratch("seed_b"), c = scratch("seed_c");
  const std::string cfg = scenario("lions.json");
  ASSERT_EQ(run("lions --config " + cfg + " --out " + a.string()), 0);
  ASSERT_EQ(run("lions --config " + cfg + " --out " + b.string() + " --seed 7"), 0);
  ASSERT_EQ(run("lions --config " + cfg + " --out " + c.string() + " --seed 8"), 0);
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  EXPECT_NE(slurp(a / "report.json"), slurp(c / "report.json"));
  EXPECT_TRUE(load(a / "report.json")["all_pass"].get<bool>());
}

TEST(Cli, ShippedScenariosRun) {
  for (const auto& [cmd, file] : std::vector<std::pair<std::string, std::string>>{
           {"geometry-check", "geometry_lshape.json"},
           {"solve-parabolic", "heat_mms.json"},
           {"chemotaxis", "chemotaxis_coercive.json"}}) {
    const auto out = scratch(cmd);
    EXPECT_EQ(run(cmd + " --config " + scenario(file) + " --out " + out.string()), 0) << cmd;
    EXPECT_TRUE(fs::exists(out / "report.json") || fs::exists(out / "summary.json")) << cmd;
  }
}
