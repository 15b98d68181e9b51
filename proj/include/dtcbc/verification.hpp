#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtcbc/certificates.hpp"
#include "dtcbc/dynamics.hpp"
#include "dtcbc/errors.hpp"
#include "dtcbc/estimation.hpp"
#include "dtcbc/filter.hpp"
#include "dtcbc/harness.hpp"
#include "dtcbc/rng.hpp"

namespace dtcbc::verification {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Outcome of one checker. Slack keeps the sign convention of the source
/// inequality: nonnegative means the inequality held everywhere.
struct CheckReport {
  std::string name;
  bool pass = false;
  double slack = 0.0;
  int offending = -1;  // step or sample index, -1 if none
  std::string detail;
};

inline nlohmann::json report_to_json(const CheckReport& r) {
  return {{"name", r.name},
          {"pass", r.pass},
          {"slack", r.slack},
          {"offending", r.offending},
          {"detail", r.detail}};
}

namespace detail {

inline double quad_err(const certificates::BarrierSpec& spec, const VectorXd& e) {
  return spec.quad_error(e);
}

}  // namespace detail

/// Replays a logged run against the oracle parameter: B(x_t) must stay
/// nonnegative and the certified value must obey the one-step decrease
/// B_rt_{t+1}(x_{t+1}) >= B_rt_t(x_t) - alpha(B_rt_t(x_t)). Both quantities
/// are recomputed from the logged states and estimates, not trusted from
/// the log's own derived columns.
inline CheckReport check_sequential_invariance(const harness::TrajectoryLog& log,
                                               const VectorXd& theta_star,
                                               const certificates::BarrierSpec& spec) {
  CheckReport rep;
  rep.name = "sequential_invariance";
  const double tol = 1e-9;
  double slack = std::numeric_limits<double>::infinity();
  rep.pass = true;
  const std::size_t N = log.records.size();
  std::vector<double> B_rt(N);
  for (std::size_t t = 0; t < N; ++t) {
    const harness::Record& r = log.records[t];
    const double B = spec.B(r.x);
    B_rt[t] = B - detail::quad_err(spec, VectorXd(r.theta_hat - theta_star));
    if (B < -tol && rep.pass) {
      rep.pass = false;
      rep.offending = r.t;
      rep.detail = "B(x_t) negative at step " + std::to_string(r.t) +
                   " (B = " + std::to_string(B) + ")";
    }
    slack = std::min(slack, B);
  }
  for (std::size_t t = 0; t + 1 < N; ++t) {
    const double decay = B_rt[t] - certificates::alpha_eval(spec, B_rt[t]);
    const double gap = B_rt[t + 1] - decay;
    slack = std::min(slack, gap);
    if (gap < -tol && rep.pass) {
      rep.pass = false;
      rep.offending = static_cast<int>(t);
      rep.detail = "descent violated between steps " + std::to_string(t) + " and " +
                   std::to_string(t + 1);
    }
  }
  rep.slack = slack;
  if (rep.pass) rep.detail = "B and certified-value descent hold on all steps";
  return rep;
}

/// Distance-to-safety energy V_t = max(0, -B_rt_t(x_t)). While the state is
/// outside the certified set the energy must strictly decrease, and it must
/// fall below tol_conv by the end of the horizon. The error-bound variant
/// reads the logged interval-width certificate value instead of the oracle
/// one.
inline CheckReport check_energy_descent(
    const harness::TrajectoryLog& log, const VectorXd& theta_star,
    const certificates::BarrierSpec& spec,
    certificates::MarginVariant variant = certificates::MarginVariant::Adaptive,
    double tol_conv = 1e-3) {
  CheckReport rep;
  rep.name = variant == certificates::MarginVariant::ErrorBound
                 ? "energy_descent_error_bound"
                 : "energy_descent";
  const std::size_t N = log.records.size();
  std::vector<double> value(N);
  for (std::size_t t = 0; t < N; ++t) {
    const harness::Record& r = log.records[t];
    if (variant == certificates::MarginVariant::ErrorBound) {
      value[t] = r.B_bar_rt;
    } else {
      value[t] = spec.B(r.x) - detail::quad_err(spec, VectorXd(r.theta_hat - theta_star));
    }
  }
  rep.pass = true;
  double slack = std::numeric_limits<double>::infinity();
  int outside_steps = 0;
  for (std::size_t t = 0; t + 1 < N; ++t) {
    const double V = std::max(0.0, -value[t]);
    if (V <= 0.0) continue;
    ++outside_steps;
    const double V_next = std::max(0.0, -value[t + 1]);
    const double drop = V_next - V;  // must be <= alpha(B_rt) < 0
    const double bound = certificates::alpha_eval(spec, value[t]);
    slack = std::min(slack, bound - drop);
    if ((drop > bound + 1e-9 || drop > -1e-12) && rep.pass) {
      rep.pass = false;
      rep.offending = static_cast<int>(t);
      rep.detail = "energy failed to decrease at step " + std::to_string(t);
    }
  }
  const double terminal = std::max(0.0, -value[N - 1]);
  if (outside_steps > 0 && terminal >= tol_conv && rep.pass) {
    rep.pass = false;
    rep.offending = static_cast<int>(N) - 1;
    rep.detail = "terminal energy " + std::to_string(terminal) + " above " +
                 std::to_string(tol_conv);
  }
  if (outside_steps == 0) {
    rep.detail = "never outside the certified set (vacuous)";
    slack = 0.0;
  } else if (rep.pass) {
    rep.detail = std::to_string(outside_steps) + " outside steps, terminal energy " +
                 std::to_string(terminal);
  }
  rep.slack = std::isfinite(slack) ? slack : 0.0;
  return rep;
}

namespace detail {

struct ScalarInstance {
  double a, b, p0, p1, gc;        // dynamics
  double theta_lo, theta_hi;      // parameter box
  double w_bar;                   // disturbance half width
  double c, bB;                   // barrier c x + bB
  double gamma, kappa;
  double theta_hat, delta, x, u;
};

inline nlohmann::json instance_to_json(const ScalarInstance& s) {
  return {{"a", s.a},           {"b", s.b},
          {"p0", s.p0},         {"p1", s.p1},
          {"g", s.gc},          {"theta_lo", s.theta_lo},
          {"theta_hi", s.theta_hi}, {"w_bar", s.w_bar},
          {"c", s.c},           {"bB", s.bB},
          {"gamma", s.gamma},   {"kappa", s.kappa},
          {"theta_hat", s.theta_hat}, {"delta", s.delta},
          {"x", s.x},           {"u", s.u}};
}

inline double uniform(rng::SplitMix64& gen, double lo, double hi) {
  return lo + gen.next_double() * (hi - lo);
}

}  // namespace detail

/// Draws random scalar systems, a state on the certified side, and an input
/// on the certificate boundary, then verifies the one-step decrease of the
/// certified value exhaustively over the vertices of the disturbance and
/// parameter sets; exact because the stepped barrier is affine in w and
/// concave (here affine) in theta. `mutate` halves the estimation-error
/// term of the certificate and must produce counterexamples.
inline CheckReport check_randomized_descent(int num_systems, std::uint64_t seed,
                                             bool mutate = false) {
  CheckReport rep;
  rep.name = mutate ? "descent_randomized_mutated" : "descent_randomized";
  rng::SplitMix64 gen{seed};
  int counterexamples = 0;
  double slack = std::numeric_limits<double>::infinity();
  nlohmann::json first_case;
  for (int k = 0; k < num_systems; ++k) {
    detail::ScalarInstance s;
    // resample until the input direction has authority on the barrier
    do {
      s.a = detail::uniform(gen, -1.05, 1.05);
      s.b = detail::uniform(gen, -1.0, 1.0);
      s.p0 = detail::uniform(gen, -1.0, 1.0);
      s.p1 = detail::uniform(gen, -0.5, 0.5);
      s.gc = detail::uniform(gen, -2.0, 2.0);
      s.c = detail::uniform(gen, -2.0, 2.0);
    } while (std::abs(s.gc * s.c) < 1e-3);
    s.bB = detail::uniform(gen, -1.0, 1.0);
    s.theta_lo = detail::uniform(gen, -2.0, 0.0);
    s.theta_hi = s.theta_lo + detail::uniform(gen, 0.0, 2.0);
    s.w_bar = detail::uniform(gen, 0.0, 0.3);
    s.gamma = detail::uniform(gen, 0.05, 0.9);
    s.kappa = detail::uniform(gen, 1.0, 100.0);
    s.theta_hat = detail::uniform(gen, s.theta_lo, s.theta_hi);
    s.delta = detail::uniform(gen, s.theta_lo, s.theta_hi) - s.theta_hat;

    dynamics::SystemModel model =
        dynamics::scalar_model(s.a, s.b, s.p0, s.p1, s.gc, 1e9, s.w_bar);
    certificates::BarrierSpec spec = certificates::affine_barrier(
        VectorXd::Constant(1, s.c), s.bB, s.gamma,
        s.kappa * MatrixXd::Identity(1, 1));
    geometry::Polytope Theta = geometry::Polytope::box(
        VectorXd::Constant(1, s.theta_lo), VectorXd::Constant(1, s.theta_hi));

    const double beta =
        std::max(s.theta_hi - s.theta_hat, s.theta_hat - s.theta_lo);
    const double lambda = spec.lambda_min;

    // state with certified value >= 0: pick B(x) above the largest possible
    // parametric-error quadratic so B_rt(x) >= lift for every theta* in the box
    const double lift = detail::uniform(gen, 0.0, 2.0);
    const double level = 0.5 * beta * beta / s.kappa + lift;
    s.x = (level - s.bB) / s.c;
    const VectorXd x = VectorXd::Constant(1, s.x);

    // adaptive margin as an affine function of u
    estimation::EstimatorState view = estimation::make_estimator(
        VectorXd::Constant(1, s.theta_hat), Theta);
    view.delta = VectorXd::Constant(1, s.delta);
    certificates::SafeInputSet set = certificates::safe_input_halfspace(
        spec, model, x, view, 2, certificates::MarginVariant::Adaptive);
    double a_0 = set.a_0;
    if (mutate) {
      // negative control: put half the estimation-error term back
      const double phin = std::abs(s.p0 + s.p1 * s.x);
      const double E = (spec.L_B * phin + std::abs(s.delta) / lambda) * beta +
                       0.5 * s.delta * s.delta / lambda;
      a_0 += 0.5 * E;
    }
    const double a_u = set.a_u(0);
    const double inset = detail::uniform(gen, 0.0, 0.5);
    s.u = (-a_0 + inset * std::abs(a_u)) / a_u;  // margin == inset * |a_u| >= 0
    const VectorXd u = VectorXd::Constant(1, s.u);

    // exhaustive vertices of W and Theta
    bool bad = false;
    for (const double w : {-s.w_bar, s.w_bar}) {
      for (const double th : {s.theta_lo, s.theta_hi}) {
        const VectorXd theta = VectorXd::Constant(1, th);
        const VectorXd xp =
            dynamics::step(model, x, u, VectorXd::Constant(1, w), theta);
        const double eps_t = s.theta_hat - th;
        const double eps_n = s.theta_hat + s.delta - th;
        const double B_rt_t =
            spec.B(x) - 0.5 * eps_t * eps_t / s.kappa;
        const double B_rt_n =
            spec.B(xp) - 0.5 * eps_n * eps_n / s.kappa;
        const double gap =
            B_rt_n - (B_rt_t - certificates::alpha_eval(spec, B_rt_t));
        slack = std::min(slack, gap);
        if (gap < -1e-9) bad = true;
      }
    }
    if (bad) {
      ++counterexamples;
      if (first_case.is_null()) {
        first_case = detail::instance_to_json(s);
        rep.offending = k;
      }
    }
  }
  rep.pass = counterexamples == 0;
  rep.slack = slack;
  rep.detail = std::to_string(counterexamples) + " counterexamples in " +
               std::to_string(num_systems) + " systems";
  if (!first_case.is_null()) rep.detail += "; first: " + first_case.dump();
  return rep;
}

/// Cross-validates the numeric back ends against brute force: parameter
/// bounds against vertex enumeration, the input filter against a fine grid,
/// and the disturbance-free estimator against monotone error decay.
inline CheckReport check_oracles(std::uint64_t seed = 2024) {
  CheckReport rep;
  rep.name = "oracles";
  rng::SplitMix64 gen{seed};
  double slack = std::numeric_limits<double>::infinity();
  rep.pass = true;
  auto fail = [&rep](const std::string& why, int idx) {
    if (rep.pass) {
      rep.pass = false;
      rep.detail = why;
      rep.offending = idx;
    }
  };

  // (a) beta via LP / signed LP vs vertex brute force, 1000 random 2-D sets
  for (int k = 0; k < 1000 && rep.pass; ++k) {
    Eigen::Vector2d lo{detail::uniform(gen, -2.0, 0.0), detail::uniform(gen, -2.0, 0.0)};
    Eigen::Vector2d hi{lo(0) + detail::uniform(gen, 0.1, 3.0),
                       lo(1) + detail::uniform(gen, 0.1, 3.0)};
    geometry::Polytope P = geometry::Polytope::box(lo, hi);
    // random extra cut that keeps the box center feasible
    Eigen::Vector2d dir{detail::uniform(gen, -1.0, 1.0), detail::uniform(gen, -1.0, 1.0)};
    if (dir.norm() > 1e-6) {
      const Eigen::Vector2d center = 0.5 * (lo + hi);
      MatrixXd H(P.rows() + 1, 2);
      VectorXd h(P.rows() + 1);
      H.topRows(P.rows()) = P.H;
      h.head(P.rows()) = P.h;
      H.row(P.rows()) = dir.transpose();
      h(P.rows()) = dir.dot(center) + detail::uniform(gen, 0.05, 1.0);
      P = geometry::Polytope(H, h);
    }
    Eigen::Vector2d anchor{detail::uniform(gen, lo(0), hi(0)),
                           detail::uniform(gen, lo(1), hi(1))};
    if (!P.contains(anchor)) continue;
    const double b1 = geometry::max_norm_distance(P, anchor, 1);
    const double b2 = geometry::max_norm_distance(P, anchor, 2);
    double v1 = 0.0, v2 = 0.0;
    for (const VectorXd& v : geometry::enumerate_vertices(P)) {
      v1 = std::max(v1, (v - anchor).lpNorm<1>());
      v2 = std::max(v2, (v - anchor).norm());
    }
    slack = std::min(slack, 1e-9 - std::abs(b1 - v1));
    slack = std::min(slack, 1e-9 - std::abs(b2 - v2));
    if (std::abs(b1 - v1) > 1e-9 || std::abs(b2 - v2) > 1e-9)
      fail("bound mismatch vs vertex brute force", k);
    if (b2 > b1 + 1e-12 || b1 > std::sqrt(2.0) * b2 + 1e-9)
      fail("norm ordering violated", k);
  }

  // (b) filter vs 1e-4 grid search, 50 random scalar halfspaces
  for (int k = 0; k < 50 && rep.pass; ++k) {
    const double lim = detail::uniform(gen, 0.5, 5.0);
    certificates::SafeInputSet set;
    set.a_u = VectorXd::Constant(1, detail::uniform(gen, -2.0, 2.0));
    if (std::abs(set.a_u(0)) < 1e-3) set.a_u(0) = 1.0;
    set.a_0 = detail::uniform(gen, -1.5 * lim * std::abs(set.a_u(0)),
                              1.5 * lim * std::abs(set.a_u(0)));
    set.U = geometry::Polytope::box(VectorXd::Constant(1, -lim),
                                    VectorXd::Constant(1, lim));
    const double u_nom = detail::uniform(gen, -2.0 * lim, 2.0 * lim);
    double best = std::numeric_limits<double>::quiet_NaN();
    double best_dist = std::numeric_limits<double>::infinity();
    for (double u = -lim; u <= lim + 1e-12; u += 1e-4) {
      if (set.a_u(0) * u + set.a_0 < 0.0) continue;
      const double dist = std::abs(u - u_nom);
      if (dist < best_dist) {
        best_dist = dist;
        best = u;
      }
    }
    try {
      filter::FilterResult fr = filter::filter_solve(set, VectorXd::Constant(1, u_nom));
      if (std::isnan(best)) {
        fail("filter found an input where the grid found none", k);
      } else {
        slack = std::min(slack, 1e-3 - std::abs(fr.u_safe(0) - best));
        if (std::abs(fr.u_safe(0) - best) > 1e-3) fail("filter vs grid mismatch", k);
      }
    } catch (const InfeasibleError&) {
      // the grid may hold a point within solver tolerance of the boundary
      if (!std::isnan(best) && set.a_u(0) * best + set.a_0 > 1e-6)
        fail("filter infeasible but the grid found a certified input", k);
    }
  }

  // (c) disturbance-free estimator error is monotone, 100 random systems
  for (int k = 0; k < 100 && rep.pass; ++k) {
    const double a = detail::uniform(gen, -1.05, 1.05);
    const double b = detail::uniform(gen, -0.5, 0.5);
    const double p0 = detail::uniform(gen, -1.0, 1.0);
    const double p1 = detail::uniform(gen, -0.5, 0.5);
    const double gc = detail::uniform(gen, 0.5, 2.0);
    dynamics::SystemModel model = dynamics::scalar_model(a, b, p0, p1, gc, 5.0, 0.0);
    const double th_lo = detail::uniform(gen, -1.0, 0.0);
    const double th_hi = th_lo + detail::uniform(gen, 0.2, 2.0);
    const double th_star = detail::uniform(gen, th_lo, th_hi);
    estimation::EstimatorState est = estimation::make_estimator(
        VectorXd::Constant(1, detail::uniform(gen, th_lo, th_hi)),
        geometry::Polytope::box(VectorXd::Constant(1, th_lo),
                                VectorXd::Constant(1, th_hi)));
    VectorXd x = VectorXd::Constant(1, detail::uniform(gen, -1.0, 1.0));
    VectorXd x_prev = x, u_prev = VectorXd::Zero(1);
    double err = std::abs(est.theta_hat(0) - th_star);
    for (int t = 0; t < 50 && rep.pass; ++t) {
      const VectorXd u = VectorXd::Constant(1, detail::uniform(gen, -1.0, 1.0));
      est = (t == 0) ? estimation::estimator_step(est, model, x, u_prev, x)
                     : estimation::estimator_step(est, model, x_prev, u_prev, x);
      const double e = std::abs(est.theta_hat(0) - th_star);
      slack = std::min(slack, err - e + 1e-12);
      if (e > err + 1e-12) fail("estimator error increased without disturbance", k);
      err = e;
      x_prev = x;
      u_prev = u;
      x = dynamics::step(model, x, u, VectorXd::Zero(1), VectorXd::Constant(1, th_star));
      if (std::abs(x(0)) > 1e5) break;
    }
  }

  rep.slack = std::isfinite(slack) ? slack : 0.0;
  if (rep.pass)
    rep.detail = "bounds vs vertices, filter vs grid, estimator monotonicity all hold";
  return rep;
}

/// Named suites used by the command-line `verify` entry point.
inline std::vector<CheckReport> run_suite(const std::string& name) {
  std::vector<CheckReport> out;
  const bool all = name == "all";
  if (!all && name != "invariance" && name != "robustness" && name != "oracles")
    throw InvalidParamsError("unknown suite: " + name);
  if (all || name == "invariance") {
    harness::RunConfig cfg;
    cfg.T = 200;
    cfg.seeds = {0, 1, 2, 3, 4};
    for (const std::uint64_t seed : cfg.seeds) {
      harness::TrajectoryLog log = harness::run_episode(cfg, seed);
      harness::ModelBundle bundle = harness::build_bundle(cfg);
      CheckReport rep =
          check_sequential_invariance(log, bundle.theta_true, bundle.barrier);
      rep.name += "_seed" + std::to_string(seed);
      out.push_back(rep);
    }
    out.push_back(check_randomized_descent(500, 7));
    CheckReport neg = check_randomized_descent(500, 7, true);
    neg.pass = !neg.pass;  // the mutated certificate must produce counterexamples
    neg.name += "_negative_control";
    out.push_back(neg);
  }
  if (all || name == "robustness") {
    harness::RunConfig cfg;
    cfg.T = 200;
    cfg.seeds = {0, 1};
    cfg.x0 = Eigen::Vector2d(30.0, 40.0);
    cfg.acc.u_max = 5.0e4;
    harness::ModelBundle bundle = harness::build_bundle(cfg);
    for (const std::uint64_t seed : cfg.seeds) {
      harness::TrajectoryLog log = harness::run_episode(cfg, seed);
      CheckReport rep = check_energy_descent(log, bundle.theta_true, bundle.barrier);
      rep.name += "_seed" + std::to_string(seed);
      out.push_back(rep);
    }
    harness::RunConfig ecfg = cfg;
    ecfg.variant = certificates::MarginVariant::ErrorBound;
    for (const std::uint64_t seed : ecfg.seeds) {
      harness::TrajectoryLog log = harness::run_episode(ecfg, seed);
      CheckReport rep =
          check_energy_descent(log, bundle.theta_true, bundle.barrier,
                               certificates::MarginVariant::ErrorBound);
      rep.name += "_seed" + std::to_string(seed);
      out.push_back(rep);
    }
  }
  if (all || name == "oracles") {
    out.push_back(check_oracles());
  }
  return out;
}

}  // namespace dtcbc::verification
