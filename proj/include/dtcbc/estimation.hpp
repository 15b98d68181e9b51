#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "dtcbc/dynamics.hpp"
#include "dtcbc/errors.hpp"
#include "dtcbc/geometry.hpp"

namespace dtcbc::estimation {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double mu_max = 1e3;       // learning-rate cap
inline constexpr int prune_period = 20;     // LP redundancy sweep cadence

/// Online estimator state at step t. The point estimate always lies in the
/// set estimate; delta is the most recent increment of the point estimate.
/// beta1/beta2 cache the worst-case 1- and 2-norm errors over Theta.
struct EstimatorState {
  int t = 0;
  VectorXd theta_hat;
  geometry::Polytope Theta;
  VectorXd delta;
  mutable double beta1 = std::numeric_limits<double>::quiet_NaN();
  mutable double beta2 = std::numeric_limits<double>::quiet_NaN();
};

inline EstimatorState make_estimator(const VectorXd& theta_hat0,
                                     const geometry::Polytope& Theta0) {
  if (theta_hat0.size() != Theta0.dim())
    throw DimensionError("make_estimator: estimate/set dimension mismatch");
  if (!Theta0.contains(theta_hat0, geometry::tol_feas))
    throw InvalidParamsError("make_estimator: theta_hat0 outside Theta0");
  EstimatorState s;
  s.t = 0;
  s.theta_hat = theta_hat0;
  s.Theta = Theta0;
  s.delta = VectorXd::Zero(theta_hat0.size());
  return s;
}

/// Worst-case p-norm parameter error beta_t(p) = max over Theta of
/// |theta - theta_hat|_p, computed lazily and cached.
inline double bounds(const EstimatorState& state, int p) {
  if (p != 1 && p != 2) throw InvalidParamsError("bounds: p must be 1 or 2");
  double& cache = p == 1 ? state.beta1 : state.beta2;
  if (std::isnan(cache)) {
    try {
      cache = geometry::max_norm_distance(state.Theta, state.theta_hat, p);
    } catch (const EmptySetError&) {
      throw EmptySetError("bounds: empty set estimate");
    }
  }
  return cache;
}

/// Parameters consistent with the newest transition:
///   {theta : H_w phi(x_prev)^T theta <= h_w - H_w r_t},
/// one row per disturbance facet.
inline geometry::Polytope non_falsified_set(const dynamics::SystemModel& model,
                                            const VectorXd& x_prev, const VectorXd& u_prev,
                                            const VectorXd& x) {
  const VectorXd r = dynamics::residual(model, x_prev, u_prev, x);
  const MatrixXd phi_T = model.phi_T(x_prev);
  MatrixXd H = model.W.H * phi_T;
  VectorXd h = model.W.h - model.W.H * r;
  return geometry::Polytope(std::move(H), std::move(h));
}

/// Intersection update of the set estimate. Emptiness means no parameter in
/// Theta_t explains the data with w in W: the standing assumptions are
/// falsified and the run must surface it.
inline geometry::Polytope update_set(const geometry::Polytope& Theta,
                                     const geometry::Polytope& Delta) {
  geometry::Polytope next = geometry::intersect(Theta, Delta);
  if (next.is_empty())
    throw ModelFalsifiedError("update_set: set estimate became empty");
  return next;
}

/// Recursive least-squares prior
///   theta - mu * phi(x_prev) (x - f(x_prev, u_prev; theta)).
/// Requires 0 < mu < 1/|phi|^2 (any positive mu when phi = 0), which makes
/// the zero-disturbance error map a contraction.
inline VectorXd rls_prior(const VectorXd& theta_hat, const dynamics::SystemModel& model,
                          const VectorXd& x_prev, const VectorXd& u_prev, const VectorXd& x,
                          double mu) {
  const MatrixXd phi_T = model.phi_T(x_prev);
  const double phi_norm = phi_T.jacobiSvd().singularValues()(0);
  if (!(mu > 0.0) || (phi_norm > 0.0 && !(mu < 1.0 / (phi_norm * phi_norm))))
    throw LearningRateError("rls_prior: mu outside (0, 1/|phi|^2)");
  const VectorXd pred_err = x - dynamics::step(model, x_prev, u_prev,
                                               VectorXd::Zero(model.n), theta_hat);
  return theta_hat - mu * (phi_T.transpose() * pred_err);
}

/// One estimator update consuming the newest transition (x_prev, u_prev, x).
/// Order: falsification cut, intersection, RLS prior with
/// mu = min(0.5/|phi|^2, mu_max), projection onto the new set. At t = 0 the
/// update is trivial (nothing has been observed when the estimate for step 1
/// is formed): the set, estimate and increment carry over unchanged.
inline EstimatorState estimator_step(const EstimatorState& state,
                                     const dynamics::SystemModel& model,
                                     const VectorXd& x_prev, const VectorXd& u_prev,
                                     const VectorXd& x) {
  EstimatorState next;
  next.t = state.t + 1;
  if (state.t == 0) {
    next.theta_hat = state.theta_hat;
    next.Theta = state.Theta;
    next.delta = VectorXd::Zero(state.theta_hat.size());
    next.beta1 = state.beta1;
    next.beta2 = state.beta2;
    return next;
  }
  geometry::Polytope Theta_next =
      update_set(state.Theta, non_falsified_set(model, x_prev, u_prev, x));
  if (next.t % prune_period == 0) Theta_next = geometry::prune_redundant(Theta_next);

  const MatrixXd phi_T = model.phi_T(x_prev);
  const double phi_norm = phi_T.jacobiSvd().singularValues()(0);
  VectorXd prior;
  if (phi_norm > 0.0) {
    const double mu = std::min(0.5 / (phi_norm * phi_norm), mu_max);
    prior = rls_prior(state.theta_hat, model, x_prev, u_prev, x, mu);
  } else {
    prior = state.theta_hat;
  }
  next.theta_hat = geometry::project(Theta_next, prior);
  next.delta = next.theta_hat - state.theta_hat;
  next.Theta = std::move(Theta_next);
  return next;
}

/// Per-coordinate widths of the set estimate (the error bounds of the
/// interval-hull variant).
inline VectorXd interval_widths(const geometry::Polytope& Theta) {
  VectorXd eta(Theta.dim());
  for (int i = 0; i < Theta.dim(); ++i) {
    auto [lo, hi] = geometry::coordinate_range(Theta, i);
    eta(i) = hi - lo;
  }
  return eta;
}

}  // namespace dtcbc::estimation
