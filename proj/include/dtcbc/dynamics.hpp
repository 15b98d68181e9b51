#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>

#include "dtcbc/errors.hpp"
#include "dtcbc/geometry.hpp"

namespace dtcbc::dynamics {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Input-affine discrete-time system
///   x+ = f0(x) - phi(x)^T theta + g(x) u + w,  u in U, w in W.
///
/// phi_T(x) returns the n x q matrix phi(x)^T; W is stored in the normalized
/// halfspace form H_w w <= 1 so the set-membership update can reuse H_w
/// directly. phi is evaluated fresh at every state; nothing is cached.
struct SystemModel {
  int n = 0;  // state dim
  int m = 0;  // input dim
  int q = 0;  // parameter dim
  std::function<VectorXd(const VectorXd&)> f0;
  std::function<MatrixXd(const VectorXd&)> phi_T;
  std::function<MatrixXd(const VectorXd&)> g;
  geometry::Polytope U;      // admissible inputs
  geometry::Polytope W;      // disturbance set, H_w w <= 1
  geometry::Polytope X;      // state box; leaving it aborts a simulation
  double w_bar = 0.0;        // max_{w in W} |w|_2

  VectorXd f(const VectorXd& x, const VectorXd& u, const VectorXd& theta) const {
    return f0(x) - phi_T(x) * theta + g(x) * u;
  }
};

/// Cruise-control constants. theta = (mu_aero, v_f): aerodynamic drag
/// coefficient of the ego vehicle and (unknown) lead-vehicle speed.
struct AccParams {
  double M = 1650.0;       // effective mass, kg
  double F_roll = 0.1;     // Coulomb friction, N
  double mu_vis = 5.0;     // viscous coefficient, N s/m
  double dt = 0.1;         // sampling period, s
  Eigen::Vector2d theta_true{0.25, 14.0};
  Eigen::Vector2d theta_lo{0.1, 10.0};
  Eigen::Vector2d theta_hi{0.4, 20.0};
  double w_v = 0.5;        // speed disturbance bound, m/s^2
  double w_d = 0.5;        // gap disturbance bound, m/s
  double u_max = 0.3 * 1650.0 * 9.81;   // |u| <= u_max, N
  Eigen::Vector2d x_lo{-10.0, -500.0};  // state box (v, d)
  Eigen::Vector2d x_hi{80.0, 1000.0};

  geometry::Polytope theta_box() const {
    return geometry::Polytope::box(theta_lo, theta_hi);
  }

  void validate() const {
    if (!(dt > 0.0)) throw InvalidParamsError("AccParams: dt must be positive");
    if (!(M > 0.0) || !(F_roll > 0.0) || !(mu_vis > 0.0))
      throw InvalidParamsError("AccParams: physical constants must be positive");
    if (w_v < 0.0 || w_d < 0.0 || !(u_max > 0.0))
      throw InvalidParamsError("AccParams: bounds must be nonnegative");
    if (!theta_box().contains(theta_true))
      throw InvalidParamsError("AccParams: theta_true outside theta_box");
  }

  /// Longitudinal resistance F_r(v) = F_roll + mu_vis v + mu_aero v^2.
  double resistance(double v, double mu_aero) const {
    return F_roll + mu_vis * v + mu_aero * v * v;
  }
};

/// One transition of the affine composition. Pure arithmetic; callers are
/// responsible for u in U and w in W.
inline VectorXd step(const SystemModel& model, const VectorXd& x, const VectorXd& u,
                     const VectorXd& w, const VectorXd& theta) {
  if (x.size() != model.n || u.size() != model.m || w.size() != model.n ||
      theta.size() != model.q)
    throw DimensionError("step: argument dimensions do not match the model");
  return model.f(x, u, theta) + w;
}

/// Centered disturbance box |w_i| <= half_i in normalized form, tolerating
/// zero half widths (those coordinates are pinned to 0).
inline geometry::Polytope disturbance_box(const VectorXd& half) {
  const int n = static_cast<int>(half.size());
  MatrixXd H = MatrixXd::Zero(2 * n, n);
  VectorXd h(2 * n);
  for (int i = 0; i < n; ++i) {
    if (half(i) < 0.0) throw InvalidParamsError("disturbance_box: negative half width");
    const double scale = half(i) > 0.0 ? 1.0 / half(i) : 1.0;
    H(2 * i, i) = scale;
    H(2 * i + 1, i) = -scale;
    h(2 * i) = half(i) > 0.0 ? 1.0 : 0.0;
    h(2 * i + 1) = h(2 * i);
  }
  return geometry::Polytope(std::move(H), std::move(h));
}

/// Forward-Euler cruise-control model with state x = (v, d):
///   v+ = v - (dt/M)(F_roll + mu_vis v + mu_aero v^2) + (dt/M) u + w_v dt
///   d+ = d + dt (v_f - v) + w_d dt
/// The unknown terms are carried by -phi(x)^T theta with
/// phi(x)^T = [[(dt/M) v^2, 0], [0, -dt]].
inline SystemModel acc_model(const AccParams& params) {
  params.validate();
  SystemModel model;
  model.n = 2;
  model.m = 1;
  model.q = 2;
  const double dt = params.dt;
  const double M = params.M;
  const double F_roll = params.F_roll;
  const double mu_vis = params.mu_vis;
  model.f0 = [dt, M, F_roll, mu_vis](const VectorXd& x) {
    VectorXd y(2);
    y(0) = x(0) - (dt / M) * (F_roll + mu_vis * x(0));
    y(1) = x(1) - dt * x(0);
    return y;
  };
  model.phi_T = [dt, M](const VectorXd& x) {
    MatrixXd P = MatrixXd::Zero(2, 2);
    P(0, 0) = (dt / M) * x(0) * x(0);
    P(1, 1) = -dt;
    return P;
  };
  model.g = [dt, M](const VectorXd&) {
    MatrixXd G(2, 1);
    G << dt / M, 0.0;
    return G;
  };
  model.U = geometry::Polytope::box(Eigen::VectorXd::Constant(1, -params.u_max),
                                    Eigen::VectorXd::Constant(1, params.u_max));
  Eigen::Vector2d hw{params.w_v * dt, params.w_d * dt};
  model.W = disturbance_box(hw);
  model.X = geometry::Polytope::box(params.x_lo, params.x_hi);
  model.w_bar = hw.norm();
  return model;
}

/// One-step prediction residual r_t = x_t - f0(x_{t-1}) - g(x_{t-1}) u_{t-1}.
/// When the data came from the model with parameter theta*, the identity
/// r_t + phi(x_{t-1})^T theta* = w_{t-1} in W holds.
inline VectorXd residual(const SystemModel& model, const VectorXd& x_prev,
                         const VectorXd& u_prev, const VectorXd& x) {
  if (x_prev.size() != model.n || x.size() != model.n || u_prev.size() != model.m)
    throw DimensionError("residual: argument dimensions do not match the model");
  return x - model.f0(x_prev) - model.g(x_prev) * u_prev;
}

/// Scalar helper model used by tests and the randomized descent checker:
/// f0 = a x + b, phi^T = p0 + p1 x, g = gc, all scalars.
inline SystemModel scalar_model(double a, double b, double p0, double p1, double gc,
                                double u_abs, double w_abs) {
  SystemModel model;
  model.n = 1;
  model.m = 1;
  model.q = 1;
  model.f0 = [a, b](const VectorXd& x) {
    VectorXd y(1);
    y(0) = a * x(0) + b;
    return y;
  };
  model.phi_T = [p0, p1](const VectorXd& x) {
    MatrixXd P(1, 1);
    P(0, 0) = p0 + p1 * x(0);
    return P;
  };
  model.g = [gc](const VectorXd&) {
    MatrixXd G(1, 1);
    G(0, 0) = gc;
    return G;
  };
  model.U = geometry::Polytope::box(Eigen::VectorXd::Constant(1, -u_abs),
                                    Eigen::VectorXd::Constant(1, u_abs));
  model.W = disturbance_box(Eigen::VectorXd::Constant(1, w_abs));
  model.w_bar = w_abs;
  model.X = geometry::Polytope::box(Eigen::VectorXd::Constant(1, -1e6),
                                    Eigen::VectorXd::Constant(1, 1e6));
  return model;
}

}  // namespace dtcbc::dynamics
