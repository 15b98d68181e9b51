#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dtcbc/export.hpp"
#include "dtcbc/harness.hpp"

using Catch::Approx;
using namespace dtcbc;

namespace {

harness::RunConfig small_cfg(int T) {
  harness::RunConfig cfg;
  cfg.T = T;
  cfg.seeds = {0, 1};
  return cfg;
}

bool same(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

bool same_vec(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) return false;
  for (int i = 0; i < a.size(); ++i)
    if (!same(a(i), b(i))) return false;
  return true;
}

bool same_record(const harness::Record& a, const harness::Record& b) {
  return a.t == b.t && same_vec(a.x, b.x) && same_vec(a.u_nom, b.u_nom) &&
         same_vec(a.u_safe, b.u_safe) && a.modified == b.modified && same_vec(a.w, b.w) &&
         same_vec(a.theta_hat, b.theta_hat) && same(a.beta1, b.beta1) &&
         same(a.beta2, b.beta2) && same_vec(a.delta, b.delta) && same(a.B, b.B) &&
         same(a.margin, b.margin) && same(a.B_rt, b.B_rt) &&
         same(a.B_bar_rt, b.B_bar_rt) && same(a.V, b.V) && a.set_rows == b.set_rows;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::string tmp_path(const std::string& name) {
  return std::string("/tmp/dtcbc_test_") + name;
}

}  // namespace

TEST_CASE("config parsing: defaults and overrides") {
  SECTION("empty object keeps every default") {
    harness::RunConfig cfg = harness::parse_config(nlohmann::json::object());
    CHECK(cfg.model == "acc");
    CHECK(cfg.controller == harness::Controller::RaCbfAdaptiveNominal);
    CHECK(cfg.variant == certificates::MarginVariant::Adaptive);
    CHECK(cfg.p == 2);
    CHECK(cfg.gamma_alpha == 0.035);
    CHECK(cfg.kappa == 1000.0);
    CHECK(cfg.barrier_margin == 0.0);
    CHECK(cfg.T == 200);
    REQUIRE(cfg.seeds.size() == 20);
    CHECK(cfg.seeds.front() == 0);
    CHECK(cfg.seeds.back() == 19);
    CHECK(cfg.disturbance_mode == rng::DisturbanceMode::UniformBox);
    REQUIRE(cfg.x0.size() == 2);
    CHECK(cfg.x0(0) == 18.0);
    CHECK(cfg.x0(1) == 60.0);
    CHECK(cfg.v_ref == 30.0);
    CHECK(cfg.tracking_gain == 0.5);
    CHECK(cfg.acc.u_max == Approx(0.3 * 1650.0 * 9.81));
  }

  SECTION("every documented field is overridable") {
    nlohmann::json j = {
        {"controller", "nominal_only"},
        {"variant", "error_bound"},
        {"p", 1},
        {"gamma_alpha", 0.05},
        {"kappa", 500.0},
        {"barrier_margin", 2.5},
        {"T", 10},
        {"seeds", {3, 4, 5}},
        {"disturbance_mode", "zero"},
        {"x0", {30.0, 40.0}},
        {"theta_hat0", {0.3, 12.0}},
        {"v_ref", 25.0},
        {"tracking_gain", 0.7},
        {"out_dir", "elsewhere"},
        {"acc", {{"u_max", 5.0e4}, {"w_v", 0.2}, {"theta_true", {0.2, 13.0}}}}};
    harness::RunConfig cfg = harness::parse_config(j);
    CHECK(cfg.controller == harness::Controller::NominalOnly);
    CHECK(cfg.variant == certificates::MarginVariant::ErrorBound);
    CHECK(cfg.p == 1);
    CHECK(cfg.gamma_alpha == 0.05);
    CHECK(cfg.kappa == 500.0);
    CHECK(cfg.barrier_margin == 2.5);
    CHECK(cfg.T == 10);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 4, 5});
    CHECK(cfg.disturbance_mode == rng::DisturbanceMode::Zero);
    CHECK(cfg.x0(0) == 30.0);
    CHECK(cfg.theta_hat0(1) == 12.0);
    CHECK(cfg.v_ref == 25.0);
    CHECK(cfg.tracking_gain == 0.7);
    CHECK(cfg.out_dir == "elsewhere");
    CHECK(cfg.acc.u_max == 5.0e4);
    CHECK(cfg.acc.w_v == 0.2);
    CHECK(cfg.acc.theta_true(1) == 13.0);
  }

  SECTION("invalid fields are rejected") {
    CHECK_THROWS_AS(harness::parse_config({{"p", 3}}), InvalidParamsError);
    CHECK_THROWS_AS(harness::parse_config({{"T", -1}}), InvalidParamsError);
    CHECK_THROWS_AS(harness::parse_config({{"kappa", 0.0}}), InvalidParamsError);
    CHECK_THROWS_AS(harness::parse_config({{"model", "bicycle"}}), InvalidParamsError);
    CHECK_THROWS_AS(harness::parse_config({{"controller", "mpc"}}), InvalidParamsError);
    CHECK_THROWS_AS(harness::parse_config({{"variant", "worst_case"}}), InvalidParamsError);
    CHECK_THROWS_AS(harness::parse_config({{"seeds", nlohmann::json::array()}}),
                    InvalidParamsError);
    CHECK_THROWS_AS(harness::parse_config({{"disturbance_mode", "gaussian"}}),
                    InvalidParamsError);
  }

  SECTION("scalar demo preset") {
    harness::RunConfig cfg = harness::parse_config({{"model", "scalar_demo"}});
    CHECK(cfg.custom.n == 1);
    CHECK(cfg.x0.size() == 1);
    CHECK(cfg.x0(0) == 3.0);
    harness::ModelBundle bundle = harness::build_bundle(cfg);
    CHECK(bundle.model.n == 1);
    CHECK(bundle.theta_hat0(0) == Approx(0.5));
    CHECK(bundle.barrier.B(Eigen::VectorXd::Constant(1, 3.0)) == Approx(2.0));
  }
}

TEST_CASE("episode determinism: identical config and seed give identical logs") {
  harness::RunConfig cfg = small_cfg(30);
  harness::TrajectoryLog a = harness::run_episode(cfg, 5);
  harness::TrajectoryLog b = harness::run_episode(cfg, 5);
  REQUIRE(a.records.size() == 31);
  REQUIRE(b.records.size() == 31);
  for (std::size_t t = 0; t < a.records.size(); ++t)
    REQUIRE(same_record(a.records[t], b.records[t]));
  CHECK(a.energy == b.energy);
  CHECK(a.min_B == b.min_B);
  CHECK(a.min_u == b.min_u);
  CHECK(a.first_violation == b.first_violation);
  CHECK(a.rng_algorithm == "splitmix64-v1");
}

TEST_CASE("causality: truncating the horizon preserves the input prefix") {
  harness::RunConfig cfg = small_cfg(60);
  harness::TrajectoryLog full = harness::run_episode(cfg, 3);
  const int cuts[10] = {1, 5, 12, 23, 34, 41, 47, 53, 57, 59};
  for (const int cut : cuts) {
    harness::RunConfig shorter = cfg;
    shorter.T = cut;
    harness::TrajectoryLog part = harness::run_episode(shorter, 3);
    REQUIRE(part.records.size() == static_cast<std::size_t>(cut) + 1);
    for (int t = 0; t < cut; ++t) {
      REQUIRE(same_vec(part.records[t].u_safe, full.records[t].u_safe));
      REQUIRE(same_vec(part.records[t].x, full.records[t].x));
    }
    REQUIRE(same_vec(part.records[cut].x, full.records[cut].x));
  }
}

TEST_CASE("zero-length episode logs the start state only") {
  harness::RunConfig cfg = small_cfg(0);
  harness::TrajectoryLog log = harness::run_episode(cfg, 0);
  REQUIRE(log.records.size() == 1);
  const harness::Record& r = log.records[0];
  CHECK(r.t == 0);
  CHECK(std::isnan(r.u_nom(0)));
  CHECK(std::isnan(r.u_safe(0)));
  CHECK(r.B == Approx(60.0 - 1.8 * 18.0));
  CHECK(log.first_violation == -1);
  harness::EnvelopeReport rep = harness::fold_envelopes({log});
  CHECK(rep.T == 0);
  CHECK(rep.B_min(0) == rep.B_max(0));
}

TEST_CASE("algorithm order: bound, estimate, certify, filter, step") {
  harness::RunConfig cfg = small_cfg(5);
  harness::TrajectoryLog log = harness::run_episode(cfg, 0);
  REQUIRE(log.phase_trace.size() == 25);
  const char* expected[5] = {"beta", "estimate", "safe_set", "filter", "step"};
  for (std::size_t i = 0; i < log.phase_trace.size(); ++i)
    REQUIRE(log.phase_trace[i] == expected[i % 5]);
}

TEST_CASE("perfect knowledge, no disturbance: filter matches the exact-parameter certificate") {
  harness::RunConfig cfg = small_cfg(40);
  cfg.acc.w_v = 0.0;
  cfg.acc.w_d = 0.0;
  cfg.acc.theta_lo = cfg.acc.theta_true;
  cfg.acc.theta_hi = cfg.acc.theta_true;
  cfg.disturbance_mode = rng::DisturbanceMode::Zero;
  harness::TrajectoryLog log = harness::run_episode(cfg, 0);

  dynamics::SystemModel model = dynamics::acc_model(cfg.acc);
  certificates::BarrierSpec spec = certificates::headway_barrier(
      0.0, cfg.gamma_alpha, cfg.kappa * Eigen::MatrixXd::Identity(2, 2));
  const Eigen::VectorXd theta_star = cfg.acc.theta_true;
  estimation::EstimatorState exact =
      estimation::make_estimator(theta_star, cfg.acc.theta_box());

  Eigen::VectorXd x = cfg.x0;
  for (int t = 0; t < cfg.T; ++t) {
    const harness::Record& r = log.records[t];
    CHECK(r.beta1 <= 1e-9);  // degenerate set: bound collapses up to lp tolerance
    CHECK(r.beta2 <= 1e-9);
    REQUIRE(r.theta_hat.isApprox(theta_star, 1e-12));
    CHECK(r.B_rt == Approx(r.B).margin(1e-18));

    certificates::HalfspaceExtras extras;
    extras.theta_star = &theta_star;
    certificates::SafeInputSet set = certificates::safe_input_halfspace(
        spec, model, x, exact, cfg.p, certificates::MarginVariant::RobustOracle, extras);
    Eigen::VectorXd u_nom =
        filter::nominal_tracking(cfg.acc, x, cfg.v_ref, cfg.tracking_gain);
    filter::FilterResult fr = filter::filter_solve(set, u_nom);
    REQUIRE(r.u_nom(0) == Approx(u_nom(0)).margin(1e-12));
    REQUIRE(r.u_safe(0) == Approx(fr.u_safe(0)).margin(1e-9));
    x = dynamics::step(model, x, fr.u_safe, Eigen::VectorXd::Zero(2), cfg.acc.theta_true);
    REQUIRE(log.records[t + 1].x.isApprox(x, 1e-12));
  }
}

TEST_CASE("monte carlo envelopes") {
  SECTION("duplicated seeds collapse min and max") {
    harness::RunConfig cfg = small_cfg(25);
    cfg.seeds = {7, 7};
    harness::EnvelopeReport rep = harness::run_monte_carlo(cfg);
    REQUIRE(rep.logs.size() == 2);
    CHECK(rep.x_min == rep.x_max);
    CHECK(rep.x_min == rep.x_mean);
    CHECK(rep.u_min == rep.u_max);
    CHECK(rep.B_min == rep.B_max);
    CHECK(rep.th_min == rep.th_max);
    CHECK(rep.safety_floor == rep.logs[0].min_B);
  }

  SECTION("fewer than two seeds is rejected") {
    harness::RunConfig cfg = small_cfg(5);
    cfg.seeds = {0};
    CHECK_THROWS_AS(harness::run_monte_carlo(cfg), InvalidParamsError);
  }

  SECTION("envelopes bound every seed pointwise") {
    harness::RunConfig cfg = small_cfg(30);
    cfg.seeds = {0, 1, 2, 3, 4};
    harness::EnvelopeReport rep = harness::run_monte_carlo(cfg);
    REQUIRE(rep.logs.size() == 5);
    for (const harness::TrajectoryLog& log : rep.logs) {
      for (int t = 0; t <= cfg.T; ++t) {
        const harness::Record& r = log.records[t];
        for (int i = 0; i < 2; ++i) {
          CHECK(r.x(i) >= rep.x_min(t, i));
          CHECK(r.x(i) <= rep.x_max(t, i));
        }
        CHECK(r.B >= rep.B_min(t));
        CHECK(r.B <= rep.B_max(t));
        if (t < cfg.T) {
          CHECK(r.u_safe(0) >= rep.u_min(t, 0));
          CHECK(r.u_safe(0) <= rep.u_max(t, 0));
        }
      }
      CHECK(log.records.back().beta1 <= log.records.front().beta1 + 1e-12);
    }
    for (int t = 0; t <= cfg.T; ++t) {
      CHECK(rep.B_mean(t) >= rep.B_min(t) - 1e-12);
      CHECK(rep.B_mean(t) <= rep.B_max(t) + 1e-12);
    }
  }
}

TEST_CASE("controller comparison on shared disturbances") {
  harness::RunConfig cfg = small_cfg(60);
  harness::ComparisonReport rep = harness::compare_controllers(cfg);
  CHECK(rep.raCBF.name == "raCBF_adaptive_nominal");
  CHECK(rep.rCBF.name == "rCBF_fixed_nominal");
  CHECK(rep.nominal.name == "nominal_only");
  REQUIRE(rep.raCBF.failure.empty());
  REQUIRE(rep.rCBF.failure.empty());
  REQUIRE(rep.nominal.failure.empty());
  REQUIRE(rep.raCBF.min_B.size() == 2);
  REQUIRE(rep.nominal.first_violation.size() == 2);
  CHECK(rep.raCBF.overall_min_B >= -1e-9);
  CHECK(rep.rCBF.overall_min_B >= -1e-9);
  for (const int fv : rep.raCBF.first_violation) CHECK(fv == -1);
  // the unfiltered tracker overshoots the safe headway on this horizon
  for (const int fv : rep.nominal.first_violation) CHECK(fv >= 0);
  for (const double e : rep.nominal.energy) CHECK(e == 0.0);
  for (const double e : rep.rCBF.energy) CHECK(e > 0.0);
}

TEST_CASE("failures carry context") {
  SECTION("infeasible certificate names the step") {
    harness::RunConfig cfg = small_cfg(200);
    cfg.gamma_alpha = 0.2;
    cfg.kappa = 100.0;
    REQUIRE_THROWS_AS(harness::run_episode(cfg, 0), InfeasibleError);
    try {
      harness::run_episode(cfg, 0);
    } catch (const InfeasibleError& e) {
      CHECK(std::string(e.what()).find("(step ") != std::string::npos);
    }
  }

  SECTION("monte carlo failures name the seed and keep the type") {
    harness::RunConfig cfg = small_cfg(200);
    cfg.gamma_alpha = 0.2;
    cfg.kappa = 100.0;
    try {
      harness::run_monte_carlo(cfg);
      FAIL("expected an infeasible certificate");
    } catch (const InfeasibleError& e) {
      CHECK(std::string(e.what()).rfind("seed ", 0) == 0);
    }
  }

  SECTION("comparison records the failing controller and keeps the rest") {
    harness::RunConfig cfg = small_cfg(200);
    cfg.gamma_alpha = 0.2;
    cfg.kappa = 100.0;
    harness::ComparisonReport rep = harness::compare_controllers(cfg);
    CHECK_FALSE(rep.raCBF.failure.empty());
    CHECK(rep.nominal.failure.empty());
    REQUIRE(rep.nominal.min_B.size() == 2);
  }

  SECTION("start outside the certified set is reported, not fatal") {
    harness::RunConfig cfg = small_cfg(20);
    cfg.x0 = Eigen::Vector2d(30.0, 40.0);
    cfg.acc.u_max = 5.0e4;
    harness::TrajectoryLog log = harness::run_episode(cfg, 0);
    REQUIRE_FALSE(log.warnings.empty());
    CHECK(log.warnings[0].find("B(x0)") != std::string::npos);
    harness::TrajectoryLog ok = harness::run_episode(small_cfg(5), 0);
    CHECK(ok.warnings.empty());
  }
}

TEST_CASE("csv export") {
  harness::RunConfig cfg = small_cfg(20);
  harness::TrajectoryLog log = harness::run_episode(cfg, 1);
  const std::string path = tmp_path("log.csv");
  exporter::write_csv(log, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 22);  // header + T+1 records
  CHECK(lines[0] ==
        "t,v,d,u_nom,u_safe,w_v,w_d,B,margin,B_rt,B_bar_rt,V_t,"
        "theta_hat_1,theta_hat_2,beta1,beta2,set_rows");

  SECTION("values round-trip at full precision") {
    for (const std::size_t row : {std::size_t(1), std::size_t(6), std::size_t(21)}) {
      const harness::Record& r = log.records[row - 1];
      std::vector<std::string> cells = split_csv(lines[row]);
      REQUIRE(cells.size() == 17);
      CHECK(std::stoi(cells[0]) == r.t);
      CHECK(same(std::strtod(cells[1].c_str(), nullptr), r.x(0)));
      CHECK(same(std::strtod(cells[2].c_str(), nullptr), r.x(1)));
      CHECK(same(std::strtod(cells[3].c_str(), nullptr), r.u_nom(0)));
      CHECK(same(std::strtod(cells[4].c_str(), nullptr), r.u_safe(0)));
      CHECK(same(std::strtod(cells[5].c_str(), nullptr), r.w(0)));
      CHECK(same(std::strtod(cells[6].c_str(), nullptr), r.w(1)));
      CHECK(same(std::strtod(cells[7].c_str(), nullptr), r.B));
      CHECK(same(std::strtod(cells[8].c_str(), nullptr), r.margin));
      CHECK(same(std::strtod(cells[9].c_str(), nullptr), r.B_rt));
      CHECK(same(std::strtod(cells[10].c_str(), nullptr), r.B_bar_rt));
      CHECK(same(std::strtod(cells[11].c_str(), nullptr), r.V));
      CHECK(same(std::strtod(cells[12].c_str(), nullptr), r.theta_hat(0)));
      CHECK(same(std::strtod(cells[13].c_str(), nullptr), r.theta_hat(1)));
      CHECK(same(std::strtod(cells[14].c_str(), nullptr), r.beta1));
      CHECK(same(std::strtod(cells[15].c_str(), nullptr), r.beta2));
      CHECK(std::stoi(cells[16]) == r.set_rows);
    }
  }

  SECTION("empty log gives a header-only file") {
    harness::TrajectoryLog empty;
    const std::string epath = tmp_path("empty.csv");
    exporter::write_csv(empty, epath);
    std::ifstream ein(epath);
    std::vector<std::string> elines;
    while (std::getline(ein, line)) elines.push_back(line);
    REQUIRE(elines.size() == 1);
    CHECK(elines[0] == std::string(exporter::csv_header));
  }

  SECTION("unwritable path raises an io error") {
    CHECK_THROWS_AS(exporter::write_csv(log, "/nonexistent_dir_zz/x.csv"), IoError);
  }
}

TEST_CASE("json export mirrors the log exactly") {
  harness::RunConfig cfg = small_cfg(15);
  harness::TrajectoryLog log = harness::run_episode(cfg, 2);
  const std::string path = tmp_path("log.json");
  exporter::write_json(log, path);
  harness::TrajectoryLog back = exporter::read_json(path);

  CHECK(back.seed == log.seed);
  CHECK(back.rng_algorithm == log.rng_algorithm);
  CHECK(back.controller == log.controller);
  CHECK(same(back.energy, log.energy));
  CHECK(same(back.min_B, log.min_B));
  CHECK(same(back.min_u, log.min_u));
  CHECK(back.first_violation == log.first_violation);
  REQUIRE(back.records.size() == log.records.size());
  for (std::size_t t = 0; t < log.records.size(); ++t)
    REQUIRE(same_record(back.records[t], log.records[t]));

  // serialization is deterministic
  const std::string path2 = tmp_path("log2.json");
  exporter::write_json(back, path2);
  std::ifstream a(path), b(path2);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("svg export") {
  harness::RunConfig cfg = small_cfg(25);
  harness::EnvelopeReport rep = harness::run_monte_carlo(cfg);
  const std::string path = tmp_path("plot.svg");
  exporter::write_svg(rep, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string svg = ss.str();
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.rfind("</svg>") != std::string::npos);
  std::size_t panels = 0, pos = 0;
  while ((pos = svg.find("<rect x='", pos)) != std::string::npos) {
    ++panels;
    pos += 1;
  }
  CHECK(panels == 5);
  CHECK(svg.find("v (speed)") != std::string::npos);
  CHECK(svg.find("d (headway)") != std::string::npos);
  CHECK(svg.find("B (certificate)") != std::string::npos);
  CHECK(svg.find("u (applied input)") != std::string::npos);
  CHECK(svg.find("theta_hat (estimates)") != std::string::npos);
  CHECK(svg.find("theta_hat_2") != std::string::npos);
  CHECK(svg.find("<polygon") != std::string::npos);

  exporter::write_svg(rep.logs[0], tmp_path("plot_one.svg"));
  std::ifstream one(tmp_path("plot_one.svg"));
  CHECK(one.good());
  CHECK_THROWS_AS(exporter::write_svg(rep, "/nonexistent_dir_zz/x.svg"), IoError);
}

TEST_CASE("envelope json serialization") {
  harness::RunConfig cfg = small_cfg(10);
  harness::EnvelopeReport rep = harness::run_monte_carlo(cfg);
  nlohmann::json j = exporter::envelope_to_json(rep);
  CHECK(j.at("rng_algorithm") == "splitmix64-v1");
  CHECK(j.at("T") == 10);
  REQUIRE(j.at("envelopes").contains("min"));
  REQUIRE(j.at("envelopes").contains("max"));
  REQUIRE(j.at("envelopes").contains("mean"));
  CHECK(j.at("envelopes").at("min").at("B").size() == 11);
  CHECK(j.at("envelopes").at("mean").at("theta_hat").size() == 2);

  harness::ComparisonReport cr = harness::compare_controllers(small_cfg(20));
  nlohmann::json cj = exporter::comparison_to_json(cr);
  REQUIRE(cj.contains("raCBF_adaptive_nominal"));
  CHECK(cj.at("nominal_only").at("energy").size() == 2);
}
