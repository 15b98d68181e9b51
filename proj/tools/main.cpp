#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dtcbc/export.hpp"
#include "dtcbc/harness.hpp"
#include "dtcbc/verification.hpp"

namespace {

using namespace dtcbc;

constexpr int exit_ok = 0;
constexpr int exit_error = 1;
constexpr int exit_violation = 2;    // safety violated in a filtered run
constexpr int exit_infeasible = 3;   // certificate infeasible or model falsified

harness::RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParamsError("config " + path + ": " + e.what());
  }
  return harness::parse_config(j);
}

void info(const std::string& line) {
  if (harness::log_level() >= harness::LogLevel::Info)
    std::fprintf(stderr, "[info] %s\n", line.c_str());
}

std::string out_dir_for(const harness::RunConfig& cfg, const std::string& override_dir) {
  const std::string dir = override_dir.empty() ? cfg.out_dir : override_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
  return dir;
}

int violation_exit(const harness::RunConfig& cfg, double min_B) {
  if (cfg.controller != harness::Controller::NominalOnly && min_B < -1e-9) {
    info("safety violated in a filtered run: min B = " + std::to_string(min_B));
    return exit_violation;
  }
  return exit_ok;
}

int run_sim(const std::string& config_path, long long seed, const std::string& out_override) {
  harness::RunConfig cfg = load_config(config_path);
  const std::string dir = out_dir_for(cfg, out_override);
  if (seed >= 0) {
    harness::TrajectoryLog log =
        harness::run_episode(cfg, static_cast<std::uint64_t>(seed));
    const std::string stem = dir + "/trajectory_seed" + std::to_string(seed);
    exporter::write_csv(log, stem + ".csv");
    exporter::write_json(log, stem + ".json");
    exporter::write_svg(log, stem + ".svg");
    info("seed " + std::to_string(seed) + ": min B = " + std::to_string(log.min_B) +
         ", energy = " + std::to_string(log.energy) + ", wrote " + stem + ".{csv,json,svg}");
    return violation_exit(cfg, log.min_B);
  }
  harness::EnvelopeReport rep = harness::run_monte_carlo(cfg);
  for (const harness::TrajectoryLog& log : rep.logs)
    exporter::write_csv(log, dir + "/trajectory_seed" + std::to_string(log.seed) + ".csv");
  exporter::write_envelope_json(rep, dir + "/envelope.json");
  exporter::write_svg(rep, dir + "/envelope.svg");
  info(std::to_string(rep.logs.size()) + " seeds: min B over all = " +
       std::to_string(rep.safety_floor) + ", wrote " + dir + "/envelope.{json,svg}");
  return violation_exit(cfg, rep.safety_floor);
}

int run_compare(const std::string& config_path, const std::string& out_override) {
  harness::RunConfig cfg = load_config(config_path);
  const std::string dir = out_dir_for(cfg, out_override);
  harness::ComparisonReport rep = harness::compare_controllers(cfg);
  exporter::write_comparison_json(rep, dir + "/comparison.json");
  for (const harness::ControllerSummary* s : {&rep.raCBF, &rep.rCBF, &rep.nominal}) {
    if (!s->failure.empty()) {
      info(s->name + ": FAILED (" + s->failure + ")");
    } else {
      info(s->name + ": min B = " + std::to_string(s->overall_min_B) +
           ", mean energy = " + std::to_string(s->mean_energy));
    }
  }
  info("wrote " + dir + "/comparison.json");
  for (const harness::ControllerSummary* s : {&rep.raCBF, &rep.rCBF})
    if (!s->failure.empty()) return exit_infeasible;
  if (rep.raCBF.overall_min_B < -1e-9 || rep.rCBF.overall_min_B < -1e-9)
    return exit_violation;
  return exit_ok;
}

int run_estimate(const std::string& config_path, const std::string& out_override) {
  harness::RunConfig cfg = load_config(config_path);
  const std::string dir = out_dir_for(cfg, out_override);
  harness::EnvelopeReport rep = harness::run_monte_carlo(cfg);

  nlohmann::json j = exporter::envelope_to_json(rep);
  double beta_ratio = 0.0, err_ratio = 0.0;
  nlohmann::json beta1 = nlohmann::json::array();
  nlohmann::json beta2 = nlohmann::json::array();
  const int T = rep.T;
  for (int t = 0; t <= T; ++t) {
    double b1 = 0.0, b2 = 0.0;
    for (const harness::TrajectoryLog& log : rep.logs) {
      b1 += log.records[t].beta1 / rep.logs.size();
      b2 += log.records[t].beta2 / rep.logs.size();
    }
    beta1.push_back(b1);
    beta2.push_back(b2);
  }
  harness::ModelBundle bundle = harness::build_bundle(cfg);
  for (const harness::TrajectoryLog& log : rep.logs) {
    beta_ratio += log.records[T].beta1 / log.records[0].beta1 / rep.logs.size();
    const double e0 = (log.records[0].theta_hat - bundle.theta_true).norm();
    const double eT = (log.records[T].theta_hat - bundle.theta_true).norm();
    err_ratio += (e0 > 0.0 ? eT / e0 : 0.0) / rep.logs.size();
  }
  j["beta1_mean"] = beta1;
  j["beta2_mean"] = beta2;
  j["beta1_final_over_initial"] = beta_ratio;
  j["estimate_error_final_over_initial"] = err_ratio;
  std::ofstream out(dir + "/estimate.json");
  if (!out) throw IoError("cannot open for writing: " + dir + "/estimate.json");
  out << j.dump(2) << "\n";
  info("mean beta1 shrink = " + std::to_string(beta_ratio) +
       ", mean estimate error ratio = " + std::to_string(err_ratio) + ", wrote " + dir +
       "/estimate.json");
  return exit_ok;
}

int run_verify(const std::string& suite, const std::string& out_path) {
  std::vector<verification::CheckReport> reports = verification::run_suite(suite);
  nlohmann::json j = nlohmann::json::array();
  bool all_pass = true;
  for (const verification::CheckReport& rep : reports) {
    j.push_back(verification::report_to_json(rep));
    all_pass = all_pass && rep.pass;
    info(rep.name + ": " + (rep.pass ? "PASS" : "FAIL") + " (slack " +
         std::to_string(rep.slack) + ") " + rep.detail);
  }
  if (out_path.empty()) {
    std::cout << j.dump(2) << std::endl;
  } else {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    out << j.dump(2) << "\n";
    info("wrote " + out_path);
  }
  return all_pass ? exit_ok : exit_error;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"safe-control toolkit: set-membership estimation, adaptive safety "
               "certificates, minimally invasive input filtering"};
  app.require_subcommand(1);

  std::string sim_config, sim_out;
  long long sim_seed = -1;
  CLI::App* sim = app.add_subcommand("sim", "run filtered closed-loop episodes");
  sim->add_option("--config", sim_config, "JSON run configuration")
      ->required()
      ->check(CLI::ExistingFile);
  sim->add_option("--seed", sim_seed, "run a single episode with this seed");
  sim->add_option("--out", sim_out, "output directory (default from config)");

  std::string cmp_config, cmp_out;
  CLI::App* cmp = app.add_subcommand("compare",
                                     "adaptive vs fixed-set vs unfiltered controllers");
  cmp->add_option("--config", cmp_config, "JSON run configuration")
      ->required()
      ->check(CLI::ExistingFile);
  cmp->add_option("--out", cmp_out, "output directory (default from config)");

  std::string est_config, est_out;
  CLI::App* est = app.add_subcommand("estimate", "parameter-estimation replay and metrics");
  est->add_option("--config", est_config, "JSON run configuration")
      ->required()
      ->check(CLI::ExistingFile);
  est->add_option("--out", est_out, "output directory (default from config)");

  std::string suite = "all", verify_out;
  CLI::App* verify = app.add_subcommand("verify", "numeric checks of the safety theory");
  verify->add_option("--suite", suite, "all | invariance | robustness | oracles")
      ->check(CLI::IsMember({"all", "invariance", "robustness", "oracles"}));
  verify->add_option("--out", verify_out, "write the JSON report here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return run_sim(sim_config, sim_seed, sim_out);
    if (*cmp) return run_compare(cmp_config, cmp_out);
    if (*est) return run_estimate(est_config, est_out);
    if (*verify) return run_verify(suite, verify_out);
  } catch (const InfeasibleError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_infeasible;
  } catch (const ModelFalsifiedError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_infeasible;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_error;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_error;
  }
  return exit_error;
}
