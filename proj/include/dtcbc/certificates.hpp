#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "dtcbc/dynamics.hpp"
#include "dtcbc/errors.hpp"
#include "dtcbc/estimation.hpp"
#include "dtcbc/geometry.hpp"

namespace dtcbc::certificates {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Barrier description: B with its Lipschitz constant, the linear decay rate
/// alpha(r) = gamma_alpha * r, and the adaptation weight Gamma.
/// For affine B(x) = c.x + b the constant is exact: L_B = |c|_2.
struct BarrierSpec {
  std::function<double(const VectorXd&)> B;
  bool affine = false;
  VectorXd c;
  double b = 0.0;
  double L_B = 0.0;
  double gamma_alpha = 0.2;
  MatrixXd Gamma;
  double lambda_min = 0.0;

  double quad_error(const VectorXd& e) const {
    return 0.5 * e.dot(Gamma.llt().solve(e));
  }
};

namespace detail {

inline void set_gamma_matrix(BarrierSpec& spec, const MatrixXd& Gamma) {
  if (Gamma.rows() != Gamma.cols()) throw InvalidParamsError("barrier: Gamma not square");
  if (!Gamma.isApprox(Gamma.transpose(), 1e-12))
    throw InvalidParamsError("barrier: Gamma not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Gamma);
  spec.lambda_min = eig.eigenvalues().minCoeff();
  if (!(spec.lambda_min > 0.0))
    throw InvalidParamsError("barrier: Gamma not positive definite");
  spec.Gamma = Gamma;
}

}  // namespace detail

inline BarrierSpec affine_barrier(const VectorXd& c, double b, double gamma_alpha,
                                  const MatrixXd& Gamma) {
  BarrierSpec spec;
  spec.affine = true;
  spec.c = c;
  spec.b = b;
  spec.B = [c, b](const VectorXd& x) { return c.dot(x) + b; };
  spec.L_B = c.norm();
  spec.gamma_alpha = gamma_alpha;
  detail::set_gamma_matrix(spec, Gamma);
  return spec;
}

inline BarrierSpec lipschitz_barrier(std::function<double(const VectorXd&)> B, double L_B,
                                     double gamma_alpha, const MatrixXd& Gamma) {
  if (!(L_B >= 0.0)) throw InvalidParamsError("barrier: negative Lipschitz constant");
  BarrierSpec spec;
  spec.affine = false;
  spec.B = std::move(B);
  spec.L_B = L_B;
  spec.gamma_alpha = gamma_alpha;
  detail::set_gamma_matrix(spec, Gamma);
  return spec;
}

/// Headway barrier B(x) = d - 1.8 v - a for the cruise-control state (v, d).
inline BarrierSpec headway_barrier(double a, double gamma_alpha, const MatrixXd& Gamma) {
  VectorXd c(2);
  c << -1.8, 1.0;
  return affine_barrier(c, -a, gamma_alpha, Gamma);
}

/// Linear decay rate alpha(r) = gamma * r: odd, strictly increasing, and
/// sublinear on r > 0 exactly when gamma lies in (0, 1).
inline double alpha_eval(const BarrierSpec& spec, double r) {
  if (!(spec.gamma_alpha > 0.0) || !(spec.gamma_alpha < 1.0))
    throw InvalidRateError("alpha_eval: gamma outside (0,1)");
  return spec.gamma_alpha * r;
}

/// Certificate for a known parameter: requires the barrier not to decay
/// faster than alpha even under the worst admissible disturbance.
/// Nonnegative margin certifies u as safe at x for every w in W.
inline double robust_cbc_margin(const BarrierSpec& spec, const dynamics::SystemModel& model,
                                const VectorXd& x, const VectorXd& u,
                                const VectorXd& theta_star) {
  const double Bx = spec.B(x);
  return spec.B(model.f(x, u, theta_star)) - Bx - spec.L_B * model.w_bar +
         alpha_eval(spec, Bx);
}

namespace detail {

inline double spectral_norm(const MatrixXd& A) {
  return A.jacobiSvd().singularValues()(0);
}

/// Shared core of the adaptive-family margins: predicted barrier under the
/// point estimate, minus the disturbance and estimation-error allowances,
/// plus the decayed, tightened current barrier.
inline double adaptive_margin_core(const BarrierSpec& spec,
                                   const dynamics::SystemModel& model, const VectorXd& x,
                                   const VectorXd& u, const VectorXd& theta_hat,
                                   double beta, const VectorXd& delta, double tighten) {
  const double Bx = spec.B(x);
  const double phi_norm = spectral_norm(model.phi_T(x));
  const double lam = spec.lambda_min;
  const double E = (spec.L_B * phi_norm + delta.norm() / lam) * beta +
                   delta.squaredNorm() / (2.0 * lam);
  return spec.B(model.f(x, u, theta_hat)) - Bx - spec.L_B * model.w_bar - E +
         alpha_eval(spec, Bx - tighten);
}

}  // namespace detail

/// Certificate under an evolving estimate: est must supply the current point
/// estimate, the worst-case p-norm error over the set estimate, and the
/// increment the estimator is about to apply.
inline double adaptive_cbc_margin(const BarrierSpec& spec, const dynamics::SystemModel& model,
                                  const VectorXd& x, const VectorXd& u,
                                  const estimation::EstimatorState& est, int p) {
  const double beta = estimation::bounds(est, p);
  return detail::adaptive_margin_core(spec, model, x, u, est.theta_hat, beta, est.delta,
                                      beta * beta / (2.0 * spec.lambda_min));
}

/// Non-adaptive robustification: a constant nominal estimate with the error
/// bound taken over the full prior set and no increment.
inline double worst_case_cbc_margin(const BarrierSpec& spec,
                                    const dynamics::SystemModel& model, const VectorXd& x,
                                    const VectorXd& u, const VectorXd& theta_nom,
                                    const geometry::Polytope& Theta_full, int p) {
  if (!Theta_full.contains(theta_nom, geometry::tol_feas))
    throw InvalidParamsError("worst_case_cbc_margin: theta_nom outside Theta_full");
  const double beta = geometry::max_norm_distance(Theta_full, theta_nom, p);
  return detail::adaptive_margin_core(spec, model, x, u, theta_nom, beta,
                                      VectorXd::Zero(theta_nom.size()),
                                      beta * beta / (2.0 * spec.lambda_min));
}

/// Interval-hull variant: the estimation-error allowance is built from the
/// per-coordinate widths eta of the set estimate and their one-step change.
/// The width product uses |eta|_2 for the scalar coefficient.
inline double error_bound_cbc_margin(const BarrierSpec& spec,
                                     const dynamics::SystemModel& model, const VectorXd& x,
                                     const VectorXd& u, const VectorXd& theta_hat,
                                     const VectorXd& eta_t, const VectorXd& eta_next) {
  const double Bx = spec.B(x);
  const double phi_norm = detail::spectral_norm(model.phi_T(x));
  const double lam = spec.lambda_min;
  const VectorXd delta_eta = eta_next - eta_t;
  const double E = (spec.L_B * phi_norm + delta_eta.norm() / lam) * eta_t.norm() +
                   delta_eta.squaredNorm() / (2.0 * lam);
  return spec.B(model.f(x, u, theta_hat)) - Bx - spec.L_B * model.w_bar - E +
         alpha_eval(spec, Bx - eta_t.squaredNorm() / (2.0 * lam));
}

/// Barrier diagnostics at a state. B_rt discounts the barrier by the
/// (oracle-only) parameter-error energy; B_bar_rt uses the interval widths
/// instead; V is the constraint-violation energy of B_rt.
struct BarrierValues {
  double B = 0.0;
  double B_rt = 0.0;
  double B_bar_rt = 0.0;
  double V = 0.0;
};

inline BarrierValues barrier_values(const BarrierSpec& spec, const VectorXd& x,
                                    const estimation::EstimatorState& est,
                                    const VectorXd* theta_star) {
  BarrierValues out;
  out.B = spec.B(x);
  out.B_bar_rt = out.B - spec.quad_error(estimation::interval_widths(est.Theta));
  if (theta_star == nullptr)
    throw OracleUnavailableError("barrier_values: oracle parameter required for B_rt, V");
  const VectorXd err = est.theta_hat - *theta_star;
  out.B_rt = out.B - spec.quad_error(err);
  out.V = out.B_rt >= 0.0 ? 0.0 : -out.B_rt;
  return out;
}

enum class MarginVariant { Adaptive, WorstCase, ErrorBound, RobustOracle };

inline MarginVariant parse_variant(const std::string& s) {
  if (s == "adaptive") return MarginVariant::Adaptive;
  if (s == "worst_case") return MarginVariant::WorstCase;
  if (s == "error_bound") return MarginVariant::ErrorBound;
  if (s == "robust_oracle") return MarginVariant::RobustOracle;
  throw InvalidParamsError("unknown margin variant: " + s);
}

/// Safe inputs as one halfspace intersected with U: margin(u) = a_u.u + a_0.
/// Valid because B is affine and the model is input-affine, making every
/// margin above affine in u with the common slope a_u = g(x)^T c.
struct SafeInputSet {
  VectorXd a_u;
  double a_0 = 0.0;
  geometry::Polytope U;

  double margin_at(const VectorXd& u) const { return a_u.dot(u) + a_0; }

  /// {u in U : margin(u) >= 0} in halfspace form.
  geometry::Polytope feasible_polytope() const {
    MatrixXd H(1, a_u.size());
    H.row(0) = -a_u.transpose();
    VectorXd h(1);
    h << a_0;
    return geometry::intersect(U, geometry::Polytope(H, h));
  }
};

struct HalfspaceExtras {
  const VectorXd* eta_next = nullptr;     // ErrorBound: widths after the update
  const VectorXd* theta_star = nullptr;   // RobustOracle: true parameter
};

inline SafeInputSet safe_input_halfspace(const BarrierSpec& spec,
                                         const dynamics::SystemModel& model,
                                         const VectorXd& x,
                                         const estimation::EstimatorState& est, int p,
                                         MarginVariant variant,
                                         const HalfspaceExtras& extras = {}) {
  if (!spec.affine)
    throw NonAffineBarrierError("safe_input_halfspace: barrier is not affine");
  SafeInputSet out;
  out.a_u = model.g(x).transpose() * spec.c;
  out.U = model.U;
  const VectorXd u0 = VectorXd::Zero(model.m);
  switch (variant) {
    case MarginVariant::Adaptive:
      out.a_0 = adaptive_cbc_margin(spec, model, x, u0, est, p);
      break;
    case MarginVariant::WorstCase: {
      const double beta = estimation::bounds(est, p);
      out.a_0 = detail::adaptive_margin_core(spec, model, x, u0, est.theta_hat, beta,
                                             VectorXd::Zero(est.theta_hat.size()),
                                             beta * beta / (2.0 * spec.lambda_min));
      break;
    }
    case MarginVariant::ErrorBound: {
      if (extras.eta_next == nullptr)
        throw InvalidParamsError("safe_input_halfspace: eta_next required");
      const VectorXd eta_t = estimation::interval_widths(est.Theta);
      out.a_0 = error_bound_cbc_margin(spec, model, x, u0, est.theta_hat, eta_t,
                                       *extras.eta_next);
      break;
    }
    case MarginVariant::RobustOracle:
      if (extras.theta_star == nullptr)
        throw InvalidParamsError("safe_input_halfspace: theta_star required");
      out.a_0 = robust_cbc_margin(spec, model, x, u0, *extras.theta_star);
      break;
  }
  return out;
}

}  // namespace dtcbc::certificates
