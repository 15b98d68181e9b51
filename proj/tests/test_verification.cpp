#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "dtcbc/verification.hpp"

using Catch::Approx;
using namespace dtcbc;

namespace {

harness::RunConfig acc_cfg(int T) {
  harness::RunConfig cfg;
  cfg.T = T;
  cfg.seeds = {0, 1};
  return cfg;
}

harness::RunConfig unsafe_start_cfg(int T) {
  harness::RunConfig cfg = acc_cfg(T);
  cfg.x0 = Eigen::Vector2d(30.0, 40.0);  // B(x0) = 40 - 54 = -14
  cfg.acc.u_max = 5.0e4;
  return cfg;
}

}  // namespace

TEST_CASE("sequential invariance checker") {
  SECTION("perfect knowledge, no disturbance: descent holds with slack") {
    harness::RunConfig cfg = acc_cfg(60);
    cfg.acc.w_v = 0.0;
    cfg.acc.w_d = 0.0;
    cfg.acc.theta_lo = cfg.acc.theta_true;
    cfg.acc.theta_hi = cfg.acc.theta_true;
    cfg.disturbance_mode = rng::DisturbanceMode::Zero;
    harness::ModelBundle bundle = harness::build_bundle(cfg);
    harness::TrajectoryLog log = harness::run_episode(cfg, 0);
    verification::CheckReport rep = verification::check_sequential_invariance(
        log, bundle.theta_true, bundle.barrier);
    CHECK(rep.pass);
    CHECK(rep.slack >= -1e-9);
    CHECK(rep.offending == -1);
  }

  SECTION("filtered adaptive runs pass under disturbances") {
    harness::RunConfig cfg = acc_cfg(120);
    harness::ModelBundle bundle = harness::build_bundle(cfg);
    for (const std::uint64_t seed : {0ull, 1ull, 2ull}) {
      harness::TrajectoryLog log = harness::run_episode(cfg, seed);
      verification::CheckReport rep = verification::check_sequential_invariance(
          log, bundle.theta_true, bundle.barrier);
      INFO("seed " << seed);
      CHECK(rep.pass);
      CHECK(rep.slack >= -1e-9);
    }
  }

  SECTION("the unfiltered tracker fails with the offending step") {
    harness::RunConfig cfg = acc_cfg(60);
    cfg.controller = harness::Controller::NominalOnly;
    harness::ModelBundle bundle = harness::build_bundle(cfg);
    harness::TrajectoryLog log = harness::run_episode(cfg, 0);
    verification::CheckReport rep = verification::check_sequential_invariance(
        log, bundle.theta_true, bundle.barrier);
    REQUIRE_FALSE(rep.pass);
    CHECK(rep.offending >= 0);
    CHECK(rep.slack < 0.0);
    CHECK(rep.detail.find("negative") != std::string::npos);
  }
}

TEST_CASE("energy descent checker") {
  SECTION("start inside: vacuous pass") {
    harness::RunConfig cfg = acc_cfg(30);
    harness::ModelBundle bundle = harness::build_bundle(cfg);
    harness::TrajectoryLog log = harness::run_episode(cfg, 0);
    verification::CheckReport rep =
        verification::check_energy_descent(log, bundle.theta_true, bundle.barrier);
    CHECK(rep.pass);
    CHECK(rep.detail.find("vacuous") != std::string::npos);
  }

  SECTION("unsafe start recovers under the adaptive filter") {
    harness::RunConfig cfg = unsafe_start_cfg(200);
    harness::ModelBundle bundle = harness::build_bundle(cfg);
    harness::TrajectoryLog log = harness::run_episode(cfg, 0);
    verification::CheckReport rep =
        verification::check_energy_descent(log, bundle.theta_true, bundle.barrier);
    CHECK(rep.pass);
    CHECK(rep.slack >= -1e-9);
    CHECK(rep.detail.find("outside steps") != std::string::npos);
  }

  SECTION("unsafe start recovers under the interval-width filter") {
    harness::RunConfig cfg = unsafe_start_cfg(200);
    cfg.variant = certificates::MarginVariant::ErrorBound;
    harness::ModelBundle bundle = harness::build_bundle(cfg);
    harness::TrajectoryLog log = harness::run_episode(cfg, 1);
    verification::CheckReport rep = verification::check_energy_descent(
        log, bundle.theta_true, bundle.barrier,
        certificates::MarginVariant::ErrorBound);
    CHECK(rep.pass);
    CHECK(rep.name == "energy_descent_error_bound");
  }

  SECTION("negative control: the unfiltered tracker does not recover") {
    harness::RunConfig cfg = unsafe_start_cfg(60);
    cfg.controller = harness::Controller::NominalOnly;
    harness::ModelBundle bundle = harness::build_bundle(cfg);
    harness::TrajectoryLog log = harness::run_episode(cfg, 0);
    verification::CheckReport rep =
        verification::check_energy_descent(log, bundle.theta_true, bundle.barrier);
    REQUIRE_FALSE(rep.pass);
    CHECK(rep.offending >= 0);
  }
}

TEST_CASE("randomized descent check on scalar systems") {
  SECTION("500 random systems produce no counterexamples") {
    verification::CheckReport rep = verification::check_randomized_descent(500, 7);
    CHECK(rep.pass);
    CHECK(rep.slack >= -1e-9);
    CHECK(rep.detail.find("0 counterexamples") != std::string::npos);
  }

  SECTION("halving the estimation-error term is caught") {
    verification::CheckReport rep =
        verification::check_randomized_descent(500, 7, true);
    REQUIRE_FALSE(rep.pass);
    CHECK(rep.offending >= 0);
    CHECK(rep.detail.find("first: {") != std::string::npos);
  }

  SECTION("deterministic for a fixed seed") {
    verification::CheckReport a = verification::check_randomized_descent(100, 11);
    verification::CheckReport b = verification::check_randomized_descent(100, 11);
    CHECK(a.slack == b.slack);
    CHECK(a.detail == b.detail);
  }

  SECTION("degenerate disturbance and singleton parameters: deterministic descent") {
    dynamics::SystemModel model = dynamics::scalar_model(0.9, 0.1, 0.3, 0.0, 1.0, 1e9, 0.0);
    certificates::BarrierSpec spec = certificates::affine_barrier(
        Eigen::VectorXd::Constant(1, 1.0), 0.0, 0.2,
        10.0 * Eigen::MatrixXd::Identity(1, 1));
    const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 0.5);
    estimation::EstimatorState view =
        estimation::make_estimator(theta, geometry::Polytope::box(theta, theta));
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 2.0);
    certificates::SafeInputSet set = certificates::safe_input_halfspace(
        spec, model, x, view, 2, certificates::MarginVariant::Adaptive);
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, -set.a_0 / set.a_u(0));
    REQUIRE(set.margin_at(u) == Approx(0.0).margin(1e-12));
    const Eigen::VectorXd xp = dynamics::step(model, x, u, Eigen::VectorXd::Zero(1), theta);
    CHECK(spec.B(xp) >= spec.B(x) - certificates::alpha_eval(spec, spec.B(x)) - 1e-12);
  }
}

TEST_CASE("oracle cross-checks") {
  verification::CheckReport rep = verification::check_oracles();
  CHECK(rep.pass);
  CHECK(rep.slack >= 0.0);
  verification::CheckReport again = verification::check_oracles();
  CHECK(again.slack == rep.slack);
}

TEST_CASE("suite runner") {
  SECTION("unknown suite is rejected") {
    CHECK_THROWS_AS(verification::run_suite("everything"), InvalidParamsError);
  }

  SECTION("robustness suite passes end to end") {
    std::vector<verification::CheckReport> reports = verification::run_suite("robustness");
    REQUIRE(reports.size() == 4);
    for (const verification::CheckReport& rep : reports) {
      INFO(rep.name << ": " << rep.detail);
      CHECK(rep.pass);
      CHECK(rep.name.find("energy_descent") == 0);
    }
  }

  SECTION("reports serialize") {
    verification::CheckReport rep = verification::check_randomized_descent(20, 3);
    nlohmann::json j = verification::report_to_json(rep);
    CHECK(j.at("name") == "descent_randomized");
    CHECK(j.at("pass").is_boolean());
    CHECK(j.at("slack").is_number());
  }
}
