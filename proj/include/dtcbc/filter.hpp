#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "dtcbc/certificates.hpp"
#include "dtcbc/dynamics.hpp"
#include "dtcbc/errors.hpp"
#include "dtcbc/estimation.hpp"
#include "dtcbc/geometry.hpp"

namespace dtcbc::filter {

using Eigen::VectorXd;

inline constexpr double tol_margin = 1e-9;
/// Infeasibility is declared only after re-checking at this looser tolerance,
/// so LP round-off near an empty intersection cannot raise a false alarm.
inline constexpr double tol_infeasible = 1e-7;

struct FilterResult {
  VectorXd u_safe;
  bool modified = false;
  double margin_before = 0.0;
  double margin_after = 0.0;
  certificates::SafeInputSet constraint;
};

/// Minimally invasive safety filter: the Euclidean projection of u_nom onto
/// {u in U : margin(u) >= 0}. Inputs already certified pass through
/// unchanged; an empty intersection is surfaced as Infeasible, never
/// silently relaxed.
inline FilterResult filter_solve(const certificates::SafeInputSet& safe_set,
                                 const VectorXd& u_nom) {
  if (u_nom.size() != safe_set.a_u.size())
    throw DimensionError("filter_solve: input dimension mismatch");
  FilterResult out;
  out.constraint = safe_set;
  out.margin_before = safe_set.margin_at(u_nom);
  if (out.margin_before >= 0.0 && safe_set.U.contains(u_nom, geometry::tol_feas)) {
    out.u_safe = u_nom;
    out.modified = false;
    out.margin_after = out.margin_before;
    return out;
  }
  geometry::Polytope feasible = safe_set.feasible_polytope();
  try {
    out.u_safe = geometry::project(feasible, u_nom);
  } catch (const EmptySetError&) {
    // re-check: the largest achievable margin over U decides
    try {
      auto best = geometry::lp_solve(safe_set.a_u, safe_set.U, geometry::LpSense::Max);
      const double max_margin = best.value + safe_set.a_0;
      if (max_margin < -tol_infeasible)
        throw InfeasibleError("filter_solve: no admissible input satisfies the certificate");
      out.u_safe = best.point;
    } catch (const InfeasibleError&) {
      throw;
    } catch (const Error&) {
      throw InfeasibleError("filter_solve: admissible input set is empty");
    }
  }
  out.margin_after = safe_set.margin_at(out.u_safe);
  out.modified = (out.u_safe - u_nom).norm() > tol_margin;
  if (!out.modified) out.u_safe = u_nom;
  return out;
}

/// Proportional speed tracker linearized through the known resistance:
///   u = clamp_U(M k (v_ref - v) + F_r(v)).
/// With the reference above the lead speed it deliberately pushes toward the
/// headway boundary, which is what the filtered experiments need.
inline VectorXd nominal_tracking(const dynamics::AccParams& params, const VectorXd& x,
                                 double v_ref, double gain) {
  if (!(gain > 0.0)) throw InvalidParamsError("nominal_tracking: gain must be positive");
  const double raw =
      params.M * gain * (v_ref - x(0)) + params.resistance(x(0), params.theta_true(0));
  VectorXd u(1);
  u << std::clamp(raw, -params.u_max, params.u_max);
  return u;
}

/// Certainty-equivalence tracker: identical shape, but the resistance is
/// evaluated with the current drag estimate instead of the true value.
inline VectorXd nominal_ce(const dynamics::AccParams& params, const VectorXd& x,
                           const estimation::EstimatorState& est, double v_ref, double gain) {
  if (!(gain > 0.0)) throw InvalidParamsError("nominal_ce: gain must be positive");
  const double raw =
      params.M * gain * (v_ref - x(0)) + params.resistance(x(0), est.theta_hat(0));
  VectorXd u(1);
  u << std::clamp(raw, -params.u_max, params.u_max);
  return u;
}

}  // namespace dtcbc::filter
