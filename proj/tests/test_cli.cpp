#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "pgflow/cli.hpp"
#include "pgflow/field_io.hpp"
#include "support.hpp"

using namespace pgflow;

namespace {

struct CliRun {
  int status = -1;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "pgflow");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.status = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string write_config(const std::string& dir, const std::string& name, const std::string& text) {
  const std::string path = dir + "/" + name;
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("solve with a unit running cost reports J = T") {
  const std::string dir = testing::scratch_dir("cli_solve");
  const std::string cfg = write_config(dir, "run.cfg",
                                       "problem = constant\nhorizon = 0.3\nn_t = 9\nn_x = 16\n"
                                       "constant.sigma = 0.5\nconstant.running_cost = 1\n");
  const CliRun r = run({"solve", "--config", cfg, "--out", dir + "/out"});
  CHECK(r.status == kExitOk);
  REQUIRE(r.out.rfind("J = ", 0) == 0);
  CHECK(std::stod(r.out.substr(4)) == doctest::Approx(0.3).epsilon(1e-12));
  const ScalarField v = load_scalar_field(dir + "/out/value.ctrlfld", 0.3);
  CHECK(v.at(0, 3) == doctest::Approx(0.3));
  CHECK(std::filesystem::exists(dir + "/out/density.ctrlfld"));
  CHECK(std::filesystem::exists(dir + "/out/solver_report.csv"));
  CHECK(slurp(dir + "/out/solve_summary.csv").rfind("# config_digest=", 0) == 0);
}

TEST_CASE("configuration errors exit with status 2 and name the key") {
  const std::string dir = testing::scratch_dir("cli_config");
  const CliRun missing = run({"solve", "--config", write_config(dir, "a.cfg", "horizon = 0.2\n")});
  CHECK(missing.status == kExitConfig);
  CHECK(missing.err.find("'problem'") != std::string::npos);

  const CliRun unknown = run({"flow", "--config", write_config(dir, "b.cfg", "problem = quartic_trap\nflow.dtua = 1\n")});
  CHECK(unknown.status == kExitConfig);
  CHECK(unknown.err.find("flow.dtua") != std::string::npos);

  const CliRun range = run({"solve", "--config", write_config(dir, "c.cfg", "problem = quartic_trap\nn_x = 2\n")});
  CHECK(range.status == kExitConfig);

  CHECK(run({"solve"}).status == kExitConfig);
  CHECK(run({"bogus"}).status == kExitConfig);
  CHECK(run({"solve", "--config", dir + "/none.cfg"}).status == kExitConfig);
}

TEST_CASE("verify lists its criteria") {
  const CliRun r = run({"verify", "--list"});
  CHECK(r.status == kExitOk);
  int lines = 0;
  for (char c : r.out) lines += c == '\n';
  CHECK(lines == 8);
}

TEST_CASE("an unattainable tolerance makes verify fail with status 1") {
  const std::string dir = testing::scratch_dir("cli_verify");
  const std::string cfg = write_config(dir, "v.cfg", "verify.criteria = 8\nverify.order_min_ratio = 100\n");
  const CliRun r = run({"verify", "--config", cfg, "--out", dir + "/out"});
  CHECK(r.status == kExitNumeric);
  CHECK(r.out.find("FAIL") != std::string::npos);
  CHECK(std::filesystem::exists(dir + "/out/verify.csv"));

  const std::string ok = write_config(dir, "w.cfg", "verify.criteria = 8\n");
  CHECK(run({"verify", "--config", ok, "--out", dir + "/ok"}).status == kExitOk);
}

TEST_CASE("flow that runs out of steps still succeeds") {
  const std::string dir = testing::scratch_dir("cli_flow");
  const std::string cfg = write_config(dir, "f.cfg",
                                       "problem = quartic_trap\nn_t = 9\nn_x = 16\nflow.dtau = 0.5\n"
                                       "flow.max_steps = 3\nflow.stall_window = 0\nflow.stop_grad_norm = 0\n");
  const CliRun r = run({"flow", "--config", cfg, "--out", dir + "/out"});
  CHECK(r.status == kExitOk);
  CHECK(r.out.find("stop: maxed after 3 steps") == 0);
  std::istringstream trace(slurp(dir + "/out/trace.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(trace, line)) rows += line.empty() || line[0] == '#' ? 0 : 1;
  CHECK(rows == 5);
  CHECK(std::filesystem::exists(dir + "/out/control.ctrlfld"));
}

TEST_CASE("a CFL failure exits with status 1") {
  const std::string dir = testing::scratch_dir("cli_cfl");
  const std::string cfg = write_config(dir, "c.cfg",
                                       "problem = quartic_trap\nn_t = 3\nn_x = 32\n"
                                       "solver.max_substeps_per_level = 1\n");
  const CliRun r = run({"solve", "--config", cfg, "--out", dir + "/out"});
  CHECK(r.status == kExitNumeric);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("simulate dumps are identical across thread counts and seeded from the CLI") {
  const std::string dir = testing::scratch_dir("cli_sim");
  const std::string cfg = write_config(dir, "s.cfg",
                                       "problem = controlled_diffusion_demo\nn_t = 9\nn_x = 16\n"
                                       "sampler.n_paths = 300\nsampler.n_steps = 10\nseed = 5\n");
  CHECK(run({"simulate", "--config", cfg, "--out", dir + "/a", "--threads", "1"}).status == kExitOk);
  CHECK(run({"simulate", "--config", cfg, "--out", dir + "/b", "--threads", "3"}).status == kExitOk);
  CHECK(run({"simulate", "--config", cfg, "--out", dir + "/c", "--seed", "6"}).status == kExitOk);
  const std::string a = slurp(dir + "/a/batch.ctrltrj");
  CHECK(!a.empty());
  CHECK(a == slurp(dir + "/b/batch.ctrltrj"));
  CHECK(a != slurp(dir + "/c/batch.ctrltrj"));
  CHECK(slurp(dir + "/a/estimate.csv") != slurp(dir + "/c/estimate.csv"));
}

TEST_CASE("the seed override enters the digest") {
  std::istringstream is("problem = quartic_trap\nseed = 1\n");
  const KeyValueConfig kv = KeyValueConfig::parse(is);
  const std::string two = "2";
  const RunConfig plain = parse_run_config(kv, true);
  const RunConfig seeded = parse_run_config(kv, true, &two);
  CHECK(seeded.seed == 2);
  CHECK(plain.digest != seeded.digest);
}
