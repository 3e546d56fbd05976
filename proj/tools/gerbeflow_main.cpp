// gerbeflow: config-driven experiments for the torus soliton system.
//
//   gerbeflow verify            --config run.ini [--out DIR]
//   gerbeflow solve-constraints --config run.ini [--out DIR]
//   gerbeflow evolve            --config run.ini --state state.gfld [--out DIR]
//   gerbeflow calibrate         --config run.ini [--out DIR]
//
// Exit codes: 0 success, 1 configuration error, 2 verification failure,
// 3 numerical abort, 4 inconclusive calibration.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gerbeflow/runner.hpp"

namespace {

int read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::fprintf(stderr, "error: cannot open config file '%s'\n", path.c_str());
    return 1;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"torus experiments for the generalized soliton system"};
  app.require_subcommand(1);

  std::string config_path;
  std::string state_path;
  std::string out_override;

  CLI::App* verify = app.add_subcommand("verify", "run the identity and exactness suite");
  CLI::App* solve = app.add_subcommand("solve-constraints", "build constraint-satisfying initial data");
  CLI::App* evolve = app.add_subcommand("evolve", "march a stored state and record residuals");
  CLI::App* calibrate = app.add_subcommand("calibrate", "select the propagation-identity coefficients");
  for (CLI::App* sub : {verify, solve, evolve, calibrate}) {
    sub->add_option("--config", config_path, "experiment configuration (INI)")->required();
    sub->add_option("--out", out_override, "override the [io] output directory");
  }
  evolve->add_option("--state", state_path, "initial state (.gfld)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  long threads = 1;
  if (const char* tv = std::getenv("GERBEFLOW_THREADS")) {
    const std::string s(tv);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), threads);
    if (ec != std::errc() || p != s.data() + s.size() || threads < 1) {
      std::fprintf(stderr, "error: GERBEFLOW_THREADS must be a positive integer, got '%s'\n", tv);
      return 1;
    }
  }

  std::string text;
  if (int rc = read_file(config_path, text); rc != 0) return rc;
  auto cfg_r = gf::parse_config_text(text, config_path);
  if (!cfg_r.ok()) {
    std::fprintf(stderr, "error: %s\n", cfg_r.err().message.c_str());
    return 1;
  }
  gf::experiment_config cfg = cfg_r.value();
  if (!out_override.empty()) {
    cfg.has_io = true;
    cfg.out = out_override;
  }

  if (verify->parsed()) return gf::run_verify(cfg, threads);
  if (solve->parsed()) return gf::run_solve_constraints(cfg);
  if (evolve->parsed()) return gf::run_evolve(cfg, state_path);
  return gf::run_calibrate(cfg);
}
