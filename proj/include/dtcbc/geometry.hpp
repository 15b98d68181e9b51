#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "dtcbc/errors.hpp"

namespace dtcbc::geometry {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double tol_feas = 1e-9;
inline constexpr double tol_lp = 1e-9;
inline constexpr double tol_vertex = 1e-7;

/// Convex polytope in halfspace form {x : H x <= h}.
///
/// Values are immutable after construction and safe to share across threads.
struct Polytope {
  MatrixXd H;
  VectorXd h;

  Polytope() = default;
  Polytope(MatrixXd H_in, VectorXd h_in) : H(std::move(H_in)), h(std::move(h_in)) {
    if (H.rows() != h.size()) throw DimensionError("Polytope: H rows != h size");
  }

  int dim() const { return static_cast<int>(H.cols()); }
  int rows() const { return static_cast<int>(H.rows()); }

  /// Axis-aligned box {x : lo <= x <= hi}.
  static Polytope box(const VectorXd& lo, const VectorXd& hi) {
    if (lo.size() != hi.size()) throw DimensionError("box: lo/hi size mismatch");
    const int n = static_cast<int>(lo.size());
    MatrixXd H = MatrixXd::Zero(2 * n, n);
    VectorXd h(2 * n);
    for (int i = 0; i < n; ++i) {
      H(2 * i, i) = 1.0;
      h(2 * i) = hi(i);
      H(2 * i + 1, i) = -1.0;
      h(2 * i + 1) = lo(i) == 0.0 ? 0.0 : -lo(i);
    }
    return Polytope(std::move(H), std::move(h));
  }

  /// Centered box |x_i| <= half_width_i in the normalized form H x <= 1.
  static Polytope normalized_box(const VectorXd& half_width) {
    const int n = static_cast<int>(half_width.size());
    MatrixXd H = MatrixXd::Zero(2 * n, n);
    VectorXd h = VectorXd::Ones(2 * n);
    for (int i = 0; i < n; ++i) {
      if (!(half_width(i) > 0.0)) throw InvalidParamsError("normalized_box: nonpositive half width");
      H(2 * i, i) = 1.0 / half_width(i);
      H(2 * i + 1, i) = -1.0 / half_width(i);
    }
    return Polytope(std::move(H), std::move(h));
  }

  bool contains(const VectorXd& x, double tol = tol_feas) const {
    if (x.size() != dim()) throw DimensionError("contains: point dimension mismatch");
    if (rows() == 0) return true;
    return ((H * x - h).array() <= tol).all();
  }

  bool is_empty() const;
};

enum class LpSense { Max, Min };

struct LpResult {
  VectorXd point;
  double value = 0.0;
};

namespace detail {

/// Full-tableau simplex iterations with Bland's rule.
/// Minimizes c over {y >= 0 : rows of (T | rhs) hold with the current basis}.
/// Returns false when the objective is unbounded below.
inline bool simplex_iterate(MatrixXd& T, VectorXd& rhs, const VectorXd& c,
                            std::vector<int>& basis) {
  const int m = static_cast<int>(T.rows());
  const int N = static_cast<int>(T.cols());
  const int iter_cap = 50 * (m + N) + 200;
  for (int iter = 0; iter < iter_cap; ++iter) {
    VectorXd cB(m);
    for (int i = 0; i < m; ++i) cB(i) = c(basis[i]);
    int enter = -1;
    for (int j = 0; j < N; ++j) {
      const double r = c(j) - cB.dot(T.col(j));
      if (r < -tol_lp) {
        enter = j;
        break;  // Bland: smallest improving index
      }
    }
    if (enter < 0) return true;
    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      if (T(i, enter) > 1e-11) {
        const double ratio = rhs(i) / T(i, enter);
        if (ratio < best - 1e-12 ||
            (ratio < best + 1e-12 && (leave < 0 || basis[i] < basis[leave]))) {
          best = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) return false;
    const double piv = T(leave, enter);
    T.row(leave) /= piv;
    rhs(leave) /= piv;
    for (int i = 0; i < m; ++i) {
      if (i == leave) continue;
      const double f = T(i, enter);
      if (f != 0.0) {
        T.row(i) -= f * T.row(leave);
        rhs(i) -= f * rhs(leave);
      }
    }
    basis[leave] = enter;
  }
  throw Error("simplex: iteration cap exceeded");
}

/// Phase-1 setup shared by lp_solve and feasibility queries.
/// Variables are laid out as [x+ (n), x- (n), slack (m), artificial (k)].
struct Phase1 {
  MatrixXd T;
  VectorXd rhs;
  std::vector<int> basis;
  int n = 0, m = 0;
  int n_slack = 0, n_art = 0;
  bool feasible = false;

  Phase1(const Polytope& P) {
    n = P.dim();
    m = P.rows();
    n_slack = m;
    std::vector<int> art_rows;
    for (int i = 0; i < m; ++i)
      if (P.h(i) < 0.0) art_rows.push_back(i);
    n_art = static_cast<int>(art_rows.size());
    const int N = 2 * n + n_slack + n_art;
    T = MatrixXd::Zero(m, N);
    rhs = VectorXd(m);
    basis.assign(m, -1);
    int art = 0;
    for (int i = 0; i < m; ++i) {
      const double s = P.h(i) < 0.0 ? -1.0 : 1.0;
      T.block(i, 0, 1, n) = s * P.H.row(i);
      T.block(i, n, 1, n) = -s * P.H.row(i);
      T(i, 2 * n + i) = s;
      rhs(i) = s * P.h(i);
      if (s < 0.0) {
        T(i, 2 * n + n_slack + art) = 1.0;
        basis[i] = 2 * n + n_slack + art;
        ++art;
      } else {
        basis[i] = 2 * n + i;
      }
    }
    if (n_art == 0) {
      feasible = true;
      return;
    }
    VectorXd c1 = VectorXd::Zero(N);
    for (int j = 2 * n + n_slack; j < N; ++j) c1(j) = 1.0;
    simplex_iterate(T, rhs, c1, basis);  // bounded below by 0, never unbounded
    double p1 = 0.0;
    for (int i = 0; i < m; ++i)
      if (basis[i] >= 2 * n + n_slack) p1 += rhs(i);
    feasible = p1 <= 1e-8;
    if (!feasible) return;
    drop_artificials();
  }

  /// Pivot lingering zero-valued artificials out of the basis and delete
  /// their columns; rows that cannot be pivoted are redundant and removed.
  void drop_artificials() {
    const int art_begin = 2 * n + n_slack;
    std::vector<int> keep_rows;
    for (int i = 0; i < static_cast<int>(T.rows()); ++i) {
      if (basis[i] < art_begin) {
        keep_rows.push_back(i);
        continue;
      }
      int piv_col = -1;
      for (int j = 0; j < art_begin; ++j) {
        if (std::abs(T(i, j)) > 1e-9) {
          piv_col = j;
          break;
        }
      }
      if (piv_col < 0) continue;  // all-zero row, drop
      const double piv = T(i, piv_col);
      T.row(i) /= piv;
      rhs(i) /= piv;
      for (int r = 0; r < static_cast<int>(T.rows()); ++r) {
        if (r == i) continue;
        const double f = T(r, piv_col);
        if (f != 0.0) {
          T.row(r) -= f * T.row(i);
          rhs(r) -= f * rhs(i);
        }
      }
      basis[i] = piv_col;
      keep_rows.push_back(i);
    }
    if (keep_rows.size() != static_cast<size_t>(T.rows())) {
      MatrixXd T2(keep_rows.size(), T.cols());
      VectorXd r2(keep_rows.size());
      std::vector<int> b2;
      for (size_t k = 0; k < keep_rows.size(); ++k) {
        T2.row(static_cast<int>(k)) = T.row(keep_rows[k]);
        r2(static_cast<int>(k)) = rhs(keep_rows[k]);
        b2.push_back(basis[keep_rows[k]]);
      }
      T = std::move(T2);
      rhs = std::move(r2);
      basis = std::move(b2);
    }
    MatrixXd T2 = T.leftCols(art_begin);
    T = std::move(T2);
  }

  VectorXd extract_x() const {
    VectorXd x = VectorXd::Zero(n);
    for (int i = 0; i < static_cast<int>(basis.size()); ++i) {
      if (basis[i] < n)
        x(basis[i]) += rhs(i);
      else if (basis[i] < 2 * n)
        x(basis[i] - n) -= rhs(i);
    }
    return x;
  }
};

}  // namespace detail

/// Solve max/min objective.x over P with a dense two-phase simplex.
///
/// Bland's rule guarantees termination; intended for dim <= 16 and a few
/// dozen rows. Throws InfeasibleError / UnboundedError.
inline LpResult lp_solve(const VectorXd& objective, const Polytope& P, LpSense sense) {
  if (objective.size() != P.dim()) throw DimensionError("lp_solve: objective dimension mismatch");
  if (P.dim() > 16) throw DimensionTooLargeError("lp_solve: dim > 16");
  detail::Phase1 ph(P);
  if (!ph.feasible) throw InfeasibleError("lp_solve: empty polytope");
  const int n = ph.n;
  VectorXd c = VectorXd::Zero(ph.T.cols());
  const double sign = sense == LpSense::Max ? -1.0 : 1.0;
  c.head(n) = sign * objective;
  c.segment(n, n) = -sign * objective;
  if (!detail::simplex_iterate(ph.T, ph.rhs, c, ph.basis))
    throw UnboundedError("lp_solve: objective unbounded");
  LpResult out;
  out.point = ph.extract_x();
  out.value = objective.dot(out.point);
  return out;
}

/// Some feasible point of P, or nullopt when P is empty.
inline std::optional<VectorXd> feasible_point(const Polytope& P) {
  detail::Phase1 ph(P);
  if (!ph.feasible) return std::nullopt;
  return ph.extract_x();
}

inline bool Polytope::is_empty() const { return !feasible_point(*this).has_value(); }

/// Halfspace concatenation; membership in the result is membership in both.
inline Polytope intersect(const Polytope& P, const Polytope& Q) {
  if (P.dim() != Q.dim()) throw DimensionError("intersect: dimension mismatch");
  MatrixXd H(P.rows() + Q.rows(), P.dim());
  VectorXd h(P.rows() + Q.rows());
  H << P.H, Q.H;
  h << P.h, Q.h;
  return Polytope(std::move(H), std::move(h));
}

/// All vertices of a bounded polytope with dim <= 3, via feasible
/// intersections of dim-subsets of facets. Duplicates within tol_vertex are
/// merged; the result is sorted lexicographically.
inline std::vector<VectorXd> enumerate_vertices(const Polytope& P) {
  const int n = P.dim();
  if (n > 3) throw DimensionTooLargeError("enumerate_vertices: dim > 3");
  if (P.is_empty()) throw EmptySetError("enumerate_vertices: empty polytope");
  for (int i = 0; i < n; ++i) {
    VectorXd e = VectorXd::Zero(n);
    e(i) = 1.0;
    try {
      lp_solve(e, P, LpSense::Max);
      lp_solve(e, P, LpSense::Min);
    } catch (const UnboundedError&) {
      throw UnboundedPolytopeError("enumerate_vertices: unbounded polytope");
    }
  }
  std::vector<VectorXd> verts;
  std::vector<int> idx(n);
  const int m = P.rows();
  std::vector<int> comb(n);
  // iterate over all n-subsets of rows
  for (int i = 0; i < n; ++i) comb[i] = i;
  auto advance = [&]() -> bool {
    int i = n - 1;
    while (i >= 0 && comb[i] == m - n + i) --i;
    if (i < 0) return false;
    ++comb[i];
    for (int j = i + 1; j < n; ++j) comb[j] = comb[j - 1] + 1;
    return true;
  };
  if (m >= n && n >= 1) {
    do {
      MatrixXd A(n, n);
      VectorXd b(n);
      for (int i = 0; i < n; ++i) {
        A.row(i) = P.H.row(comb[i]);
        b(i) = P.h(comb[i]);
      }
      Eigen::FullPivLU<MatrixXd> lu(A);
      lu.setThreshold(1e-10);
      if (lu.rank() < n) continue;
      VectorXd v = lu.solve(b);
      if (!v.allFinite() || !P.contains(v, tol_feas)) continue;
      bool dup = false;
      for (const auto& w : verts) {
        if ((w - v).lpNorm<Eigen::Infinity>() <= tol_vertex) {
          dup = true;
          break;
        }
      }
      if (!dup) verts.push_back(std::move(v));
    } while (advance());
  }
  std::sort(verts.begin(), verts.end(), [](const VectorXd& a, const VectorXd& b) {
    for (int i = 0; i < a.size(); ++i) {
      if (a(i) < b(i) - 1e-15) return true;
      if (a(i) > b(i) + 1e-15) return false;
    }
    return false;
  });
  return verts;
}

/// max over theta in P of |theta - anchor|_p for p in {1, 2}.
///
/// p = 1 runs 2^dim signed LPs (any dim the LP supports); p = 2 maximizes the
/// norm over the vertex set, exact for dim <= 3 since the maximum of a convex
/// function over a polytope is attained at a vertex.
inline double max_norm_distance(const Polytope& P, const VectorXd& anchor, int p) {
  if (anchor.size() != P.dim()) throw DimensionError("max_norm_distance: anchor dimension mismatch");
  const int n = P.dim();
  if (p == 1) {
    double best = -std::numeric_limits<double>::infinity();
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      VectorXd sigma(n);
      for (int i = 0; i < n; ++i) sigma(i) = (mask >> i) & 1u ? 1.0 : -1.0;
      LpResult r;
      try {
        r = lp_solve(sigma, P, LpSense::Max);
      } catch (const InfeasibleError&) {
        throw EmptySetError("max_norm_distance: empty polytope");
      }
      best = std::max(best, r.value - sigma.dot(anchor));
    }
    return std::max(best, 0.0);
  }
  if (p == 2) {
    if (n > 3) throw DimensionTooLargeError("max_norm_distance: p=2 requires dim <= 3");
    const auto verts = enumerate_vertices(P);
    double best = 0.0;
    for (const auto& v : verts) best = std::max(best, (v - anchor).norm());
    return best;
  }
  throw InvalidParamsError("max_norm_distance: p must be 1 or 2");
}

/// Euclidean projection of z onto P (primal active-set on the facets).
/// The projection is unique by strict convexity of the distance.
inline VectorXd project(const Polytope& P, const VectorXd& z) {
  if (z.size() != P.dim()) throw DimensionError("project: point dimension mismatch");
  if (P.contains(z, tol_feas)) return z;
  auto start = feasible_point(P);
  if (!start) throw EmptySetError("project: empty polytope");
  VectorXd x = *start;
  std::vector<int> active;
  const int n = P.dim();
  const int cap = 60 * (P.rows() + n) + 100;
  for (int iter = 0; iter < cap; ++iter) {
    const int k = static_cast<int>(active.size());
    VectorXd target;
    VectorXd lambda = VectorXd::Zero(k);
    if (k == 0) {
      target = z;
    } else {
      MatrixXd Ha(k, n);
      VectorXd ha(k);
      for (int i = 0; i < k; ++i) {
        Ha.row(i) = P.H.row(active[i]);
        ha(i) = P.h(active[i]);
      }
      // projection of z onto the affine set Ha y = ha
      Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(Ha * Ha.transpose());
      lambda = cod.solve(Ha * z - ha);
      target = z - Ha.transpose() * lambda;
    }
    VectorXd p = target - x;
    if (p.lpNorm<Eigen::Infinity>() <= 1e-11) {
      int drop = -1;
      for (int i = 0; i < k; ++i) {
        if (lambda(i) < -1e-9) {
          drop = i;
          break;  // Bland-style smallest index
        }
      }
      if (drop < 0) return x;
      active.erase(active.begin() + drop);
      continue;
    }
    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < P.rows(); ++i) {
      if (std::find(active.begin(), active.end(), i) != active.end()) continue;
      const double dir = P.H.row(i).dot(p);
      if (dir > 1e-12) {
        const double a = (P.h(i) - P.H.row(i).dot(x)) / dir;
        if (a < alpha - 1e-15) {
          alpha = a;
          blocking = i;
        }
      }
    }
    x += std::max(alpha, 0.0) * p;
    if (blocking >= 0) active.push_back(blocking);
  }
  throw Error("project: iteration cap exceeded");
}

/// (min, max) of coordinate i over P via two LPs.
inline std::pair<double, double> coordinate_range(const Polytope& P, int i) {
  if (i < 0 || i >= P.dim()) throw DimensionError("coordinate_range: index out of range");
  VectorXd e = VectorXd::Zero(P.dim());
  e(i) = 1.0;
  try {
    const double lo = lp_solve(e, P, LpSense::Min).value;
    const double hi = lp_solve(e, P, LpSense::Max).value;
    return {lo, hi};
  } catch (const InfeasibleError&) {
    throw EmptySetError("coordinate_range: empty polytope");
  }
}

/// Remove redundant rows. Membership is unchanged; each dropped row i
/// satisfies max{H_i x : remaining rows, H_i x <= h_i + 1} <= h_i + tol_feas.
inline Polytope prune_redundant(const Polytope& P) {
  const int m = P.rows();
  std::vector<int> keep;
  for (int i = 0; i < m; ++i) keep.push_back(i);
  for (int i = 0; i < m; ++i) {
    auto pos = std::find(keep.begin(), keep.end(), i);
    if (pos == keep.end()) continue;
    MatrixXd H(static_cast<int>(keep.size()), P.dim());
    VectorXd h(static_cast<int>(keep.size()));
    int r = 0;
    for (int j : keep) {
      if (j == i) {
        H.row(r) = P.H.row(i);
        h(r) = P.h(i) + 1.0;  // relaxed copy keeps the test LP bounded
      } else {
        H.row(r) = P.H.row(j);
        h(r) = P.h(j);
      }
      ++r;
    }
    const VectorXd obj = P.H.row(i).transpose();
    try {
      const double v = lp_solve(obj, Polytope(H, h), LpSense::Max).value;
      if (v <= P.h(i) + tol_feas) keep.erase(pos);
    } catch (const InfeasibleError&) {
      break;  // empty set: leave rows as they are
    }
  }
  MatrixXd H(static_cast<int>(keep.size()), P.dim());
  VectorXd h(static_cast<int>(keep.size()));
  for (size_t k = 0; k < keep.size(); ++k) {
    H.row(static_cast<int>(k)) = P.H.row(keep[k]);
    h(static_cast<int>(k)) = P.h(keep[k]);
  }
  return Polytope(std::move(H), std::move(h));
}

}  // namespace dtcbc::geometry
