#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <future>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dtcbc/certificates.hpp"
#include "dtcbc/dynamics.hpp"
#include "dtcbc/errors.hpp"
#include "dtcbc/estimation.hpp"
#include "dtcbc/filter.hpp"
#include "dtcbc/geometry.hpp"
#include "dtcbc/rng.hpp"

namespace dtcbc::harness {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

/// Level from DTCBF_LOG_LEVEL in {quiet, info, debug}; anything else or
/// unset means info.
inline LogLevel log_level() {
  const char* env = std::getenv("DTCBF_LOG_LEVEL");
  if (env == nullptr) return LogLevel::Info;
  const std::string s(env);
  if (s == "quiet") return LogLevel::Quiet;
  if (s == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

enum class Controller { RaCbfAdaptiveNominal, RCbfFixedNominal, NominalOnly };

inline Controller parse_controller(const std::string& s) {
  if (s == "raCBF_adaptive_nominal") return Controller::RaCbfAdaptiveNominal;
  if (s == "rCBF_fixed_nominal") return Controller::RCbfFixedNominal;
  if (s == "nominal_only") return Controller::NominalOnly;
  throw InvalidParamsError("unknown controller: " + s);
}

inline std::string controller_name(Controller c) {
  switch (c) {
    case Controller::RaCbfAdaptiveNominal: return "raCBF_adaptive_nominal";
    case Controller::RCbfFixedNominal: return "rCBF_fixed_nominal";
    case Controller::NominalOnly: return "nominal_only";
  }
  return "?";
}

/// General affine family for non-benchmark models:
///   f0(x) = A x + b,  phi(x)^T = Phi0 + sum_i x_i Phi1[i],  g(x) = G.
struct CustomAffine {
  int n = 1, m = 1, q = 1;
  MatrixXd A;
  VectorXd b;
  MatrixXd Phi0;
  std::vector<MatrixXd> Phi1;
  MatrixXd G;
  VectorXd u_lo, u_hi;
  VectorXd w_half;
  VectorXd x_lo, x_hi;
  VectorXd theta_lo, theta_hi, theta_true;
  VectorXd barrier_c;
  double barrier_b = 0.0;
};

struct RunConfig {
  std::string model = "acc";
  dynamics::AccParams acc;
  CustomAffine custom;
  Controller controller = Controller::RaCbfAdaptiveNominal;
  certificates::MarginVariant variant = certificates::MarginVariant::Adaptive;
  int p = 2;
  double gamma_alpha = 0.035;   // linear decay rate of the certificate
  double kappa = 1000.0;        // Gamma = kappa * I
  double barrier_margin = 0.0;  // a in B = d - 1.8 v - a
  int T = 200;
  std::vector<std::uint64_t> seeds;
  rng::DisturbanceMode disturbance_mode = rng::DisturbanceMode::UniformBox;
  VectorXd x0;
  VectorXd theta_hat0;
  double v_ref = 30.0;
  double tracking_gain = 0.5;  // 1/s
  std::string out_dir = "out";

  RunConfig() {
    seeds.resize(20);
    for (int i = 0; i < 20; ++i) seeds[i] = static_cast<std::uint64_t>(i);
    x0 = VectorXd(2);
    x0 << 18.0, 60.0;
  }
};

namespace detail {

inline VectorXd json_vector(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidParamsError("config: expected an array");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

inline MatrixXd json_matrix(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw InvalidParamsError("config: expected an array of rows");
  MatrixXd m(j.size(), j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != j[0].size()) throw InvalidParamsError("config: ragged matrix");
    for (std::size_t c = 0; c < j[r].size(); ++c)
      m(static_cast<int>(r), static_cast<int>(c)) = j[r][c].get<double>();
  }
  return m;
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_if_vec(const nlohmann::json& j, const char* key, VectorXd& out) {
  if (j.contains(key)) out = json_vector(j.at(key));
}

}  // namespace detail

/// Parses the JSON configuration with full defaulting: every field of the
/// benchmark and of the certificate is overridable, a missing field keeps
/// its default.
inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig cfg;
  detail::read_if(j, "model", cfg.model);
  if (cfg.model != "acc" && cfg.model != "scalar_demo" && cfg.model != "custom_affine")
    throw InvalidParamsError("config: model must be acc, scalar_demo or custom_affine");
  if (j.contains("controller")) cfg.controller = parse_controller(j.at("controller"));
  if (j.contains("variant")) cfg.variant = certificates::parse_variant(j.at("variant"));
  if (cfg.variant != certificates::MarginVariant::Adaptive &&
      cfg.variant != certificates::MarginVariant::ErrorBound)
    throw InvalidParamsError("config: variant must be adaptive or error_bound");
  detail::read_if(j, "p", cfg.p);
  if (cfg.p != 1 && cfg.p != 2) throw InvalidParamsError("config: p must be 1 or 2");
  detail::read_if(j, "gamma_alpha", cfg.gamma_alpha);
  detail::read_if(j, "kappa", cfg.kappa);
  if (!(cfg.kappa > 0.0)) throw InvalidParamsError("config: kappa must be positive");
  detail::read_if(j, "barrier_margin", cfg.barrier_margin);
  detail::read_if(j, "T", cfg.T);
  if (cfg.T < 0) throw InvalidParamsError("config: T must be nonnegative");
  if (j.contains("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());
  }
  if (cfg.seeds.empty()) throw InvalidParamsError("config: seeds must be non-empty");
  if (j.contains("disturbance_mode"))
    cfg.disturbance_mode = rng::parse_disturbance_mode(j.at("disturbance_mode"));
  detail::read_if_vec(j, "x0", cfg.x0);
  detail::read_if_vec(j, "theta_hat0", cfg.theta_hat0);
  detail::read_if(j, "v_ref", cfg.v_ref);
  detail::read_if(j, "tracking_gain", cfg.tracking_gain);
  detail::read_if(j, "out_dir", cfg.out_dir);

  if (j.contains("acc")) {
    const auto& a = j.at("acc");
    detail::read_if(a, "M", cfg.acc.M);
    detail::read_if(a, "F_roll", cfg.acc.F_roll);
    detail::read_if(a, "mu_vis", cfg.acc.mu_vis);
    detail::read_if(a, "dt", cfg.acc.dt);
    if (a.contains("theta_true")) cfg.acc.theta_true = detail::json_vector(a.at("theta_true"));
    if (a.contains("theta_lo")) cfg.acc.theta_lo = detail::json_vector(a.at("theta_lo"));
    if (a.contains("theta_hi")) cfg.acc.theta_hi = detail::json_vector(a.at("theta_hi"));
    detail::read_if(a, "w_v", cfg.acc.w_v);
    detail::read_if(a, "w_d", cfg.acc.w_d);
    detail::read_if(a, "u_max", cfg.acc.u_max);
    if (a.contains("x_lo")) cfg.acc.x_lo = detail::json_vector(a.at("x_lo"));
    if (a.contains("x_hi")) cfg.acc.x_hi = detail::json_vector(a.at("x_hi"));
  }

  if (cfg.model == "scalar_demo") {
    CustomAffine& c = cfg.custom;
    c.n = c.m = c.q = 1;
    c.A = MatrixXd::Identity(1, 1);
    c.b = VectorXd::Zero(1);
    c.Phi0 = MatrixXd::Zero(1, 1);
    c.Phi1 = {MatrixXd::Identity(1, 1)};
    c.G = MatrixXd::Identity(1, 1);
    c.u_lo = VectorXd::Constant(1, -5.0);
    c.u_hi = VectorXd::Constant(1, 5.0);
    c.w_half = VectorXd::Constant(1, 0.05);
    c.x_lo = VectorXd::Constant(1, -100.0);
    c.x_hi = VectorXd::Constant(1, 100.0);
    c.theta_lo = VectorXd::Constant(1, 0.0);
    c.theta_hi = VectorXd::Constant(1, 1.0);
    c.theta_true = VectorXd::Constant(1, 0.6);
    c.barrier_c = VectorXd::Constant(1, 1.0);
    c.barrier_b = -1.0;
    if (cfg.x0.size() != 1) {
      cfg.x0 = VectorXd::Constant(1, 3.0);
    }
  } else if (cfg.model == "custom_affine") {
    if (!j.contains("custom")) throw InvalidParamsError("config: custom model block missing");
    const auto& c = j.at("custom");
    CustomAffine& out = cfg.custom;
    out.A = detail::json_matrix(c.at("A"));
    out.n = static_cast<int>(out.A.rows());
    out.b = c.contains("b") ? detail::json_vector(c.at("b")) : VectorXd::Zero(out.n);
    out.G = detail::json_matrix(c.at("G"));
    out.m = static_cast<int>(out.G.cols());
    out.Phi0 = detail::json_matrix(c.at("Phi0"));
    out.q = static_cast<int>(out.Phi0.cols());
    out.Phi1.assign(out.n, MatrixXd::Zero(out.n, out.q));
    if (c.contains("Phi1")) {
      const auto& p1 = c.at("Phi1");
      if (static_cast<int>(p1.size()) != out.n)
        throw InvalidParamsError("config: Phi1 needs one matrix per state coordinate");
      for (int i = 0; i < out.n; ++i) out.Phi1[i] = detail::json_matrix(p1[i]);
    }
    out.u_lo = detail::json_vector(c.at("u_lo"));
    out.u_hi = detail::json_vector(c.at("u_hi"));
    out.w_half = detail::json_vector(c.at("w_half"));
    out.x_lo = detail::json_vector(c.at("x_lo"));
    out.x_hi = detail::json_vector(c.at("x_hi"));
    out.theta_lo = detail::json_vector(c.at("theta_lo"));
    out.theta_hi = detail::json_vector(c.at("theta_hi"));
    out.theta_true = detail::json_vector(c.at("theta_true"));
    out.barrier_c = detail::json_vector(c.at("barrier_c"));
    detail::read_if(c, "barrier_b", out.barrier_b);
    if (cfg.x0.size() != out.n)
      throw InvalidParamsError("config: x0 dimension does not match the custom model");
  }
  return cfg;
}

struct ModelBundle {
  dynamics::SystemModel model;
  certificates::BarrierSpec barrier;
  geometry::Polytope Theta0;
  VectorXd theta_true;
  VectorXd theta_hat0;
};

inline dynamics::SystemModel build_custom_model(const CustomAffine& c) {
  dynamics::SystemModel model;
  model.n = c.n;
  model.m = c.m;
  model.q = c.q;
  const MatrixXd A = c.A;
  const VectorXd b = c.b;
  model.f0 = [A, b](const VectorXd& x) { return (A * x + b).eval(); };
  const MatrixXd Phi0 = c.Phi0;
  const std::vector<MatrixXd> Phi1 = c.Phi1;
  model.phi_T = [Phi0, Phi1](const VectorXd& x) {
    MatrixXd P = Phi0;
    for (int i = 0; i < x.size(); ++i) P += x(i) * Phi1[i];
    return P;
  };
  const MatrixXd G = c.G;
  model.g = [G](const VectorXd&) { return G; };
  model.U = geometry::Polytope::box(c.u_lo, c.u_hi);
  model.W = dynamics::disturbance_box(c.w_half);
  model.X = geometry::Polytope::box(c.x_lo, c.x_hi);
  model.w_bar = c.w_half.norm();
  return model;
}

inline ModelBundle build_bundle(const RunConfig& cfg) {
  ModelBundle out;
  const MatrixXd Gamma =
      cfg.kappa * MatrixXd::Identity(cfg.model == "acc" ? 2 : cfg.custom.q,
                                     cfg.model == "acc" ? 2 : cfg.custom.q);
  if (cfg.model == "acc") {
    out.model = dynamics::acc_model(cfg.acc);
    out.barrier = certificates::headway_barrier(cfg.barrier_margin, cfg.gamma_alpha, Gamma);
    out.Theta0 = cfg.acc.theta_box();
    out.theta_true = cfg.acc.theta_true;
    out.theta_hat0 = cfg.theta_hat0.size() == 2
                         ? cfg.theta_hat0
                         : VectorXd(0.5 * (cfg.acc.theta_lo + cfg.acc.theta_hi));
  } else {
    out.model = build_custom_model(cfg.custom);
    out.barrier = certificates::affine_barrier(cfg.custom.barrier_c, cfg.custom.barrier_b,
                                               cfg.gamma_alpha, Gamma);
    out.Theta0 = geometry::Polytope::box(cfg.custom.theta_lo, cfg.custom.theta_hi);
    out.theta_true = cfg.custom.theta_true;
    out.theta_hat0 = cfg.theta_hat0.size() == cfg.custom.q
                         ? cfg.theta_hat0
                         : VectorXd(0.5 * (cfg.custom.theta_lo + cfg.custom.theta_hi));
  }
  if (!out.Theta0.contains(out.theta_true, geometry::tol_feas))
    throw InvalidParamsError("config: theta_true outside the parameter box");
  return out;
}

struct Record {
  int t = 0;
  VectorXd x;
  VectorXd u_nom, u_safe;
  bool modified = false;
  VectorXd w;
  VectorXd theta_hat;
  double beta1 = 0.0, beta2 = 0.0;
  VectorXd delta;
  double B = 0.0, margin = 0.0, B_rt = 0.0, B_bar_rt = 0.0, V = 0.0;
  int set_rows = 0;
};

struct TrajectoryLog {
  std::uint64_t seed = 0;
  std::string rng_algorithm = rng::algorithm_id;
  std::string controller;
  std::vector<Record> records;  // T+1 entries; the last has no input fields
  double energy = 0.0;          // sum |u_safe - u_nom|^2
  double min_B = std::numeric_limits<double>::infinity();
  double min_u = std::numeric_limits<double>::infinity();
  int first_violation = -1;     // first t with B(x_t) < 0, -1 if none
  std::vector<std::string> phase_trace;  // algorithm-order instrumentation
  std::vector<std::string> warnings;
};

namespace detail {

inline double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

inline VectorXd nominal_input(const RunConfig& cfg, const ModelBundle& bundle,
                              const VectorXd& x, const estimation::EstimatorState& est) {
  if (cfg.model == "acc") {
    if (cfg.controller == Controller::RaCbfAdaptiveNominal)
      return filter::nominal_ce(cfg.acc, x, est, cfg.v_ref, cfg.tracking_gain);
    return filter::nominal_tracking(cfg.acc, x, cfg.v_ref, cfg.tracking_gain);
  }
  // non-benchmark models have no tracking objective: hold zero input
  (void)bundle;
  return VectorXd::Zero(bundle.model.m);
}

}  // namespace detail

/// One closed-loop episode. Per step the order is fixed: error bound, then
/// the estimator update the step will commit, then the safe input set, then
/// the filter, then the transition; the estimator for step t+1 only ever
/// sees data up to x_t.
inline TrajectoryLog run_episode(const RunConfig& cfg, std::uint64_t seed) {
  ModelBundle bundle = build_bundle(cfg);
  const dynamics::SystemModel& model = bundle.model;
  const certificates::BarrierSpec& spec = bundle.barrier;

  TrajectoryLog log;
  log.seed = seed;
  log.controller = controller_name(cfg.controller);

  // disturbances are a pure function of the seed, fixed before the loop
  rng::DisturbanceSampler sampler(model.W, seed, cfg.disturbance_mode);
  std::vector<VectorXd> w_seq(cfg.T);
  for (int t = 0; t < cfg.T; ++t) w_seq[t] = sampler.next();

  estimation::EstimatorState est = estimation::make_estimator(bundle.theta_hat0, bundle.Theta0);
  const estimation::EstimatorState frozen = est;  // worst-case reference view
  VectorXd x = cfg.x0;
  if (!model.X.contains(x))
    throw InvalidParamsError("run_episode: x0 outside the state box");

  {
    const double b0 = spec.B(x);
    const double beta0 = estimation::bounds(est, cfg.p);
    if (b0 < beta0 * beta0 / (2.0 * spec.lambda_min) &&
        cfg.controller != Controller::NominalOnly) {
      log.warnings.push_back(
          "x0 is outside the certified initial set: B(x0) < beta0^2 / (2 lambda_min)");
      if (log_level() >= LogLevel::Info)
        std::fprintf(stderr, "[info] seed %llu: %s\n",
                     static_cast<unsigned long long>(seed), log.warnings.back().c_str());
    }
  }

  VectorXd x_prev, u_prev;
  for (int t = 0; t < cfg.T; ++t) {
    Record rec;
    rec.t = t;
    rec.x = x;

    log.phase_trace.push_back("beta");
    rec.beta1 = estimation::bounds(est, 1);
    rec.beta2 = estimation::bounds(est, 2);

    log.phase_trace.push_back("estimate");
    estimation::EstimatorState est_next;
    try {
      est_next = (t == 0) ? estimation::estimator_step(est, model, x, VectorXd::Zero(model.m), x)
                          : estimation::estimator_step(est, model, x_prev, u_prev, x);
    } catch (const ModelFalsifiedError& e) {
      throw ModelFalsifiedError(std::string(e.what()) + " (step " + std::to_string(t) + ")");
    }

    rec.theta_hat = est.theta_hat;
    rec.delta = est_next.delta;
    rec.set_rows = est.Theta.rows();

    VectorXd u_nom = detail::nominal_input(cfg, bundle, x, est);

    log.phase_trace.push_back("safe_set");
    // margin view: current estimate and bound, with the increment the
    // estimator is about to commit
    estimation::EstimatorState view = est;
    view.delta = est_next.delta;
    certificates::SafeInputSet safe_set;
    if (cfg.controller == Controller::RCbfFixedNominal) {
      safe_set = certificates::safe_input_halfspace(spec, model, x, frozen, cfg.p,
                                                    certificates::MarginVariant::WorstCase);
    } else if (cfg.variant == certificates::MarginVariant::ErrorBound) {
      const VectorXd eta_next = estimation::interval_widths(est_next.Theta);
      certificates::HalfspaceExtras extras;
      extras.eta_next = &eta_next;
      safe_set = certificates::safe_input_halfspace(spec, model, x, view, cfg.p,
                                                    certificates::MarginVariant::ErrorBound,
                                                    extras);
    } else {
      safe_set = certificates::safe_input_halfspace(spec, model, x, view, cfg.p,
                                                    certificates::MarginVariant::Adaptive);
    }

    log.phase_trace.push_back("filter");
    VectorXd u_safe;
    if (cfg.controller == Controller::NominalOnly) {
      u_safe = u_nom;
      rec.modified = false;
      rec.margin = safe_set.margin_at(u_nom);  // diagnostic only
    } else {
      try {
        filter::FilterResult fr = filter::filter_solve(safe_set, u_nom);
        u_safe = fr.u_safe;
        rec.modified = fr.modified;
        rec.margin = fr.margin_after;
      } catch (const InfeasibleError& e) {
        throw InfeasibleError(std::string(e.what()) + " (step " + std::to_string(t) + ")");
      }
    }
    rec.u_nom = u_nom;
    rec.u_safe = u_safe;
    log.energy += (u_safe - u_nom).squaredNorm();
    log.min_u = std::min(log.min_u, u_safe.minCoeff());

    const certificates::BarrierValues bv =
        certificates::barrier_values(spec, x, est, &bundle.theta_true);
    rec.B = bv.B;
    rec.B_rt = bv.B_rt;
    rec.B_bar_rt = bv.B_bar_rt;
    rec.V = bv.V;
    log.min_B = std::min(log.min_B, bv.B);
    if (bv.B < 0.0 && log.first_violation < 0) log.first_violation = t;

    log.phase_trace.push_back("step");
    rec.w = w_seq[t];
    VectorXd x_next = dynamics::step(model, x, u_safe, w_seq[t], bundle.theta_true);
    if (!model.X.contains(x_next))
      throw Error("run_episode: trajectory left the state box at step " + std::to_string(t));

    log.records.push_back(std::move(rec));
    x_prev = x;
    u_prev = u_safe;
    x = x_next;
    est = est_next;
  }

  // terminal record: state and estimator diagnostics only
  Record last;
  last.t = cfg.T;
  last.x = x;
  last.u_nom = VectorXd::Constant(model.m, detail::nan_value());
  last.u_safe = VectorXd::Constant(model.m, detail::nan_value());
  last.w = VectorXd::Constant(model.n, detail::nan_value());
  last.margin = detail::nan_value();
  last.theta_hat = est.theta_hat;
  last.beta1 = estimation::bounds(est, 1);
  last.beta2 = estimation::bounds(est, 2);
  last.delta = est.delta;
  last.set_rows = est.Theta.rows();
  const certificates::BarrierValues bv =
      certificates::barrier_values(spec, x, est, &bundle.theta_true);
  last.B = bv.B;
  last.B_rt = bv.B_rt;
  last.B_bar_rt = bv.B_bar_rt;
  last.V = bv.V;
  log.min_B = std::min(log.min_B, bv.B);
  if (bv.B < 0.0 && log.first_violation < 0) log.first_violation = cfg.T;
  log.records.push_back(std::move(last));

  if (log_level() >= LogLevel::Debug)
    std::fprintf(stderr, "[debug] seed %llu: min B = %.6g, energy = %.6g\n",
                 static_cast<unsigned long long>(seed), log.min_B, log.energy);
  return log;
}

/// Per-step extremes and means across seeds, one column set per quantity.
struct EnvelopeReport {
  int T = 0;
  std::vector<std::uint64_t> seeds;
  MatrixXd x_min, x_max, x_mean;        // (T+1) x n
  MatrixXd u_min, u_max, u_mean;        // T x m
  VectorXd B_min, B_max, B_mean;        // T+1
  MatrixXd th_min, th_max, th_mean;     // (T+1) x q
  double safety_floor = 0.0;            // min over seeds and steps of B
  std::vector<TrajectoryLog> logs;
};

/// Folds per-seed logs (all of the same length) into per-step envelopes.
inline EnvelopeReport fold_envelopes(std::vector<TrajectoryLog> logs) {
  if (logs.empty()) throw InvalidParamsError("fold_envelopes: no logs");
  EnvelopeReport rep;
  rep.T = static_cast<int>(logs[0].records.size()) - 1;
  for (const TrajectoryLog& log : logs) {
    if (static_cast<int>(log.records.size()) != rep.T + 1)
      throw InvalidParamsError("fold_envelopes: logs of unequal length");
    rep.seeds.push_back(log.seed);
  }
  rep.logs = std::move(logs);
  const int n = static_cast<int>(rep.logs[0].records[0].x.size());
  const int m = static_cast<int>(rep.logs[0].records[0].u_nom.size());
  const int q = static_cast<int>(rep.logs[0].records[0].theta_hat.size());
  const int S = static_cast<int>(rep.logs.size());
  const double inf = std::numeric_limits<double>::infinity();
  rep.x_min = MatrixXd::Constant(rep.T + 1, n, inf);
  rep.x_max = MatrixXd::Constant(rep.T + 1, n, -inf);
  rep.x_mean = MatrixXd::Zero(rep.T + 1, n);
  rep.u_min = MatrixXd::Constant(std::max(rep.T, 0), m, inf);
  rep.u_max = MatrixXd::Constant(std::max(rep.T, 0), m, -inf);
  rep.u_mean = MatrixXd::Zero(std::max(rep.T, 0), m);
  rep.B_min = VectorXd::Constant(rep.T + 1, inf);
  rep.B_max = VectorXd::Constant(rep.T + 1, -inf);
  rep.B_mean = VectorXd::Zero(rep.T + 1);
  rep.th_min = MatrixXd::Constant(rep.T + 1, q, inf);
  rep.th_max = MatrixXd::Constant(rep.T + 1, q, -inf);
  rep.th_mean = MatrixXd::Zero(rep.T + 1, q);
  rep.safety_floor = inf;
  for (const TrajectoryLog& log : rep.logs) {
    for (int t = 0; t <= rep.T; ++t) {
      const Record& r = log.records[t];
      for (int i = 0; i < n; ++i) {
        rep.x_min(t, i) = std::min(rep.x_min(t, i), r.x(i));
        rep.x_max(t, i) = std::max(rep.x_max(t, i), r.x(i));
        rep.x_mean(t, i) += r.x(i) / S;
      }
      if (t < rep.T) {
        for (int i = 0; i < m; ++i) {
          rep.u_min(t, i) = std::min(rep.u_min(t, i), r.u_safe(i));
          rep.u_max(t, i) = std::max(rep.u_max(t, i), r.u_safe(i));
          rep.u_mean(t, i) += r.u_safe(i) / S;
        }
      }
      rep.B_min(t) = std::min(rep.B_min(t), r.B);
      rep.B_max(t) = std::max(rep.B_max(t), r.B);
      rep.B_mean(t) += r.B / S;
      for (int i = 0; i < q; ++i) {
        rep.th_min(t, i) = std::min(rep.th_min(t, i), r.theta_hat(i));
        rep.th_max(t, i) = std::max(rep.th_max(t, i), r.theta_hat(i));
        rep.th_mean(t, i) += r.theta_hat(i) / S;
      }
    }
    rep.safety_floor = std::min(rep.safety_floor, log.min_B);
  }
  return rep;
}

/// Runs every seed (in parallel) and folds the envelopes in seed order.
/// A failing seed aborts the report with the seed prefixed to the error.
inline EnvelopeReport run_monte_carlo(const RunConfig& cfg) {
  if (cfg.seeds.size() < 2)
    throw InvalidParamsError("run_monte_carlo: need at least 2 seeds");
  std::vector<std::future<TrajectoryLog>> futures;
  futures.reserve(cfg.seeds.size());
  for (const std::uint64_t seed : cfg.seeds)
    futures.push_back(std::async(std::launch::async,
                                 [&cfg, seed]() { return run_episode(cfg, seed); }));
  std::vector<TrajectoryLog> logs;
  for (std::size_t i = 0; i < futures.size(); ++i) {
    const std::string tag = "seed " + std::to_string(cfg.seeds[i]) + ": ";
    try {
      logs.push_back(futures[i].get());
    } catch (const InfeasibleError& e) {
      throw InfeasibleError(tag + e.what());
    } catch (const ModelFalsifiedError& e) {
      throw ModelFalsifiedError(tag + e.what());
    } catch (const Error& e) {
      throw Error(tag + e.what());
    }
  }
  return fold_envelopes(std::move(logs));
}

struct ControllerSummary {
  std::string name;
  std::vector<double> min_B, min_u, energy;  // per seed
  std::vector<int> first_violation;          // per seed, -1 if none
  std::string failure;                       // non-empty if the runs aborted
  double overall_min_B = std::numeric_limits<double>::infinity();
  double mean_energy = 0.0;
};

struct ComparisonReport {
  ControllerSummary raCBF, rCBF, nominal;
};

/// The three controllers on shared disturbance realizations (identical
/// seeds feed identical streams). A controller that aborts is recorded and
/// the comparison continues.
inline ComparisonReport compare_controllers(const RunConfig& cfg) {
  ComparisonReport rep;
  auto run_one = [&cfg](Controller controller) {
    ControllerSummary s;
    s.name = controller_name(controller);
    RunConfig c = cfg;
    c.controller = controller;
    try {
      std::vector<std::future<TrajectoryLog>> futures;
      for (const std::uint64_t seed : c.seeds)
        futures.push_back(std::async(std::launch::async,
                                     [&c, seed]() { return run_episode(c, seed); }));
      for (std::size_t i = 0; i < futures.size(); ++i) {
        TrajectoryLog log;
        try {
          log = futures[i].get();
        } catch (const Error& e) {
          throw Error("seed " + std::to_string(c.seeds[i]) + ": " + e.what());
        }
        s.min_B.push_back(log.min_B);
        s.min_u.push_back(log.min_u);
        s.energy.push_back(log.energy);
        s.first_violation.push_back(log.first_violation);
        s.overall_min_B = std::min(s.overall_min_B, log.min_B);
      }
      for (const double e : s.energy) s.mean_energy += e / s.energy.size();
    } catch (const Error& e) {
      s.failure = e.what();
    }
    return s;
  };
  rep.raCBF = run_one(Controller::RaCbfAdaptiveNominal);
  rep.rCBF = run_one(Controller::RCbfFixedNominal);
  rep.nominal = run_one(Controller::NominalOnly);
  return rep;
}

}  // namespace dtcbc::harness
