#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtcbc/errors.hpp"
#include "dtcbc/geometry.hpp"

namespace dtcbc::rng {

/// Identifier recorded in exported logs so envelopes can be reproduced
/// on any platform.
inline constexpr const char* algorithm_id = "splitmix64-v1";

/// SplitMix64: tiny, seedable, portable 64-bit generator.
struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}

  std::uint64_t next_u64() {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
};

enum class DisturbanceMode { Zero, UniformBox, VertexAdversarial };

namespace detail {

/// Per-coordinate [lo, hi] when every row of H constrains one coordinate,
/// i.e. the set is an axis-aligned box. Throws otherwise.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> box_bounds(const geometry::Polytope& W) {
  const int n = W.dim();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int r = 0; r < W.rows(); ++r) {
    int nz = -1;
    for (int j = 0; j < n; ++j) {
      if (W.H(r, j) != 0.0) {
        if (nz >= 0) throw UnsupportedError("sample_disturbance: uniform mode needs a box");
        nz = j;
      }
    }
    if (nz < 0) {
      if (W.h(r) < 0.0) throw EmptySetError("sample_disturbance: infeasible zero row");
      continue;
    }
    const double bound = W.h(r) / W.H(r, nz);
    if (W.H(r, nz) > 0.0)
      hi(nz) = std::min(hi(nz), bound);
    else
      lo(nz) = std::max(lo(nz), bound);
  }
  for (int j = 0; j < n; ++j) {
    if (!std::isfinite(lo(j)) || !std::isfinite(hi(j)) || lo(j) > hi(j))
      throw UnsupportedError("sample_disturbance: box is unbounded or empty");
  }
  return {lo, hi};
}

}  // namespace detail

/// Draws disturbances from W. UniformBox consumes dim(W) doubles per draw in
/// coordinate order; VertexAdversarial cycles the (sorted) vertex list.
struct DisturbanceSampler {
  DisturbanceMode mode = DisturbanceMode::UniformBox;
  SplitMix64 gen;
  Eigen::VectorXd lo, hi;
  std::vector<Eigen::VectorXd> vertices;
  std::size_t vertex_cursor = 0;
  int n = 0;

  DisturbanceSampler(const geometry::Polytope& W, std::uint64_t seed, DisturbanceMode m)
      : mode(m), gen(seed), n(W.dim()) {
    if (mode == DisturbanceMode::UniformBox) {
      auto [l, h] = detail::box_bounds(W);
      lo = l;
      hi = h;
    } else if (mode == DisturbanceMode::VertexAdversarial) {
      vertices = geometry::enumerate_vertices(W);
    }
  }

  Eigen::VectorXd next() {
    switch (mode) {
      case DisturbanceMode::Zero:
        return Eigen::VectorXd::Zero(n);
      case DisturbanceMode::UniformBox: {
        Eigen::VectorXd w(n);
        for (int i = 0; i < n; ++i) w(i) = lo(i) + gen.next_double() * (hi(i) - lo(i));
        return w;
      }
      case DisturbanceMode::VertexAdversarial: {
        const Eigen::VectorXd& v = vertices[vertex_cursor % vertices.size()];
        ++vertex_cursor;
        return v;
      }
    }
    throw InvalidParamsError("sample_disturbance: unknown mode");
  }
};

inline Eigen::VectorXd sample_disturbance(DisturbanceSampler& sampler) { return sampler.next(); }

inline DisturbanceMode parse_disturbance_mode(const std::string& s) {
  if (s == "zero") return DisturbanceMode::Zero;
  if (s == "uniform_box") return DisturbanceMode::UniformBox;
  if (s == "vertex_adversarial") return DisturbanceMode::VertexAdversarial;
  throw InvalidParamsError("unknown disturbance mode: " + s);
}

}  // namespace dtcbc::rng
