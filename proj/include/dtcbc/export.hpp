#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtcbc/errors.hpp"
#include "dtcbc/harness.hpp"

namespace dtcbc::exporter {

using harness::EnvelopeReport;
using harness::Record;
using harness::TrajectoryLog;

inline const char* csv_header =
    "t,v,d,u_nom,u_safe,w_v,w_d,B,margin,B_rt,B_bar_rt,V_t,"
    "theta_hat_1,theta_hat_2,beta1,beta2,set_rows";

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double at_or_nan(const Eigen::VectorXd& v, int i) {
  return i < v.size() ? v(i) : std::numeric_limits<double>::quiet_NaN();
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

}  // namespace detail

/// One row per record, full double precision. States and estimates beyond
/// the first two coordinates are not representable in this layout and the
/// missing ones are written as nan.
inline void write_csv(const TrajectoryLog& log, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << csv_header << "\n";
  for (const Record& r : log.records) {
    out << r.t << ',' << detail::fmt(detail::at_or_nan(r.x, 0)) << ','
        << detail::fmt(detail::at_or_nan(r.x, 1)) << ','
        << detail::fmt(detail::at_or_nan(r.u_nom, 0)) << ','
        << detail::fmt(detail::at_or_nan(r.u_safe, 0)) << ','
        << detail::fmt(detail::at_or_nan(r.w, 0)) << ','
        << detail::fmt(detail::at_or_nan(r.w, 1)) << ',' << detail::fmt(r.B) << ','
        << detail::fmt(r.margin) << ',' << detail::fmt(r.B_rt) << ','
        << detail::fmt(r.B_bar_rt) << ',' << detail::fmt(r.V) << ','
        << detail::fmt(detail::at_or_nan(r.theta_hat, 0)) << ','
        << detail::fmt(detail::at_or_nan(r.theta_hat, 1)) << ','
        << detail::fmt(r.beta1) << ',' << detail::fmt(r.beta2) << ',' << r.set_rows
        << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

namespace detail {

inline nlohmann::json vec_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// json has no nan literal; nlohmann emits null for non-finite doubles
inline double json_num(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline Eigen::VectorXd json_vec(const nlohmann::json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<int>(i)) = json_num(a[i]);
  return v;
}

}  // namespace detail

inline nlohmann::json log_to_json(const TrajectoryLog& log) {
  nlohmann::json j;
  j["rng_algorithm"] = log.rng_algorithm;
  j["seed"] = log.seed;
  j["controller"] = log.controller;
  j["energy"] = log.energy;
  j["min_B"] = log.min_B;
  j["min_u"] = log.min_u;
  j["first_violation"] = log.first_violation;
  j["warnings"] = log.warnings;
  nlohmann::json records = nlohmann::json::array();
  for (const Record& r : log.records) {
    nlohmann::json rr;
    rr["t"] = r.t;
    rr["x"] = detail::vec_json(r.x);
    rr["u_nom"] = detail::vec_json(r.u_nom);
    rr["u_safe"] = detail::vec_json(r.u_safe);
    rr["modified"] = r.modified;
    rr["w"] = detail::vec_json(r.w);
    rr["theta_hat"] = detail::vec_json(r.theta_hat);
    rr["beta1"] = r.beta1;
    rr["beta2"] = r.beta2;
    rr["delta"] = detail::vec_json(r.delta);
    rr["B"] = r.B;
    rr["margin"] = r.margin;
    rr["B_rt"] = r.B_rt;
    rr["B_bar_rt"] = r.B_bar_rt;
    rr["V"] = r.V;
    rr["set_rows"] = r.set_rows;
    records.push_back(std::move(rr));
  }
  j["records"] = std::move(records);
  return j;
}

inline TrajectoryLog log_from_json(const nlohmann::json& j) {
  TrajectoryLog log;
  log.rng_algorithm = j.at("rng_algorithm").get<std::string>();
  log.seed = j.at("seed").get<std::uint64_t>();
  log.controller = j.at("controller").get<std::string>();
  log.energy = detail::json_num(j.at("energy"));
  log.min_B = detail::json_num(j.at("min_B"));
  log.min_u = detail::json_num(j.at("min_u"));
  log.first_violation = j.at("first_violation").get<int>();
  log.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& rr : j.at("records")) {
    Record r;
    r.t = rr.at("t").get<int>();
    r.x = detail::json_vec(rr.at("x"));
    r.u_nom = detail::json_vec(rr.at("u_nom"));
    r.u_safe = detail::json_vec(rr.at("u_safe"));
    r.modified = rr.at("modified").get<bool>();
    r.w = detail::json_vec(rr.at("w"));
    r.theta_hat = detail::json_vec(rr.at("theta_hat"));
    r.beta1 = detail::json_num(rr.at("beta1"));
    r.beta2 = detail::json_num(rr.at("beta2"));
    r.delta = detail::json_vec(rr.at("delta"));
    r.B = detail::json_num(rr.at("B"));
    r.margin = detail::json_num(rr.at("margin"));
    r.B_rt = detail::json_num(rr.at("B_rt"));
    r.B_bar_rt = detail::json_num(rr.at("B_bar_rt"));
    r.V = detail::json_num(rr.at("V"));
    r.set_rows = rr.at("set_rows").get<int>();
    log.records.push_back(std::move(r));
  }
  return log;
}

/// JSON mirror of the full log: everything the CSV has plus vector-valued
/// fields, the modification flag and the per-step estimator increment.
inline void write_json(const TrajectoryLog& log, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << log_to_json(log).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline TrajectoryLog read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  nlohmann::json j;
  in >> j;
  return log_from_json(j);
}

inline nlohmann::json envelope_to_json(const EnvelopeReport& rep) {
  auto col = [](const Eigen::MatrixXd& m, int c) {
    nlohmann::json a = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) a.push_back(m(r, c));
    return a;
  };
  nlohmann::json j;
  j["rng_algorithm"] = std::string(rng::algorithm_id);
  j["T"] = rep.T;
  j["seeds"] = rep.seeds;
  j["safety_floor"] = rep.safety_floor;
  nlohmann::json env;
  const char* stat[3] = {"min", "max", "mean"};
  const Eigen::MatrixXd* xs[3] = {&rep.x_min, &rep.x_max, &rep.x_mean};
  const Eigen::MatrixXd* us[3] = {&rep.u_min, &rep.u_max, &rep.u_mean};
  const Eigen::VectorXd* Bs[3] = {&rep.B_min, &rep.B_max, &rep.B_mean};
  const Eigen::MatrixXd* ths[3] = {&rep.th_min, &rep.th_max, &rep.th_mean};
  for (int s = 0; s < 3; ++s) {
    nlohmann::json block;
    nlohmann::json x = nlohmann::json::array();
    for (int c = 0; c < xs[s]->cols(); ++c) x.push_back(col(*xs[s], c));
    block["x"] = x;
    nlohmann::json u = nlohmann::json::array();
    for (int c = 0; c < us[s]->cols(); ++c) u.push_back(col(*us[s], c));
    block["u"] = u;
    block["B"] = detail::vec_json(*Bs[s]);
    nlohmann::json th = nlohmann::json::array();
    for (int c = 0; c < ths[s]->cols(); ++c) th.push_back(col(*ths[s], c));
    block["theta_hat"] = th;
    env[stat[s]] = std::move(block);
  }
  j["envelopes"] = std::move(env);
  return j;
}

inline void write_envelope_json(const EnvelopeReport& rep, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << envelope_to_json(rep).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline nlohmann::json comparison_to_json(const harness::ComparisonReport& rep) {
  auto one = [](const harness::ControllerSummary& s) {
    nlohmann::json j;
    j["name"] = s.name;
    j["failure"] = s.failure;
    j["min_B"] = s.min_B;
    j["min_u"] = s.min_u;
    j["energy"] = s.energy;
    j["first_violation"] = s.first_violation;
    j["overall_min_B"] = s.overall_min_B;
    j["mean_energy"] = s.mean_energy;
    return j;
  };
  nlohmann::json j;
  j["raCBF_adaptive_nominal"] = one(rep.raCBF);
  j["rCBF_fixed_nominal"] = one(rep.rCBF);
  j["nominal_only"] = one(rep.nominal);
  return j;
}

inline void write_comparison_json(const harness::ComparisonReport& rep,
                                  const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << comparison_to_json(rep).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

namespace detail {

struct PanelSeries {
  std::string label;
  std::vector<double> lo, hi, mid;  // per step; lo == hi when one seed
  std::string color;
};

/// One panel: axes, a shaded min-max band per series, the mean on top.
inline void svg_panel(std::ostream& out, double x0, double y0, double w, double h,
                      const std::string& title, const std::vector<PanelSeries>& series) {
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -vmin;
  std::size_t len = 0;
  for (const PanelSeries& s : series) {
    len = std::max(len, s.mid.size());
    for (std::size_t i = 0; i < s.mid.size(); ++i) {
      if (std::isfinite(s.lo[i])) vmin = std::min(vmin, s.lo[i]);
      if (std::isfinite(s.hi[i])) vmax = std::max(vmax, s.hi[i]);
    }
  }
  if (!std::isfinite(vmin) || !std::isfinite(vmax)) {
    vmin = -1.0;
    vmax = 1.0;
  }
  if (vmax - vmin < 1e-12) {
    vmin -= 1.0;
    vmax += 1.0;
  }
  const double pad = 0.05 * (vmax - vmin);
  vmin -= pad;
  vmax += pad;
  auto px = [&](std::size_t i) {
    return x0 + (len <= 1 ? 0.0 : w * static_cast<double>(i) / (len - 1));
  };
  auto py = [&](double v) { return y0 + h * (vmax - v) / (vmax - vmin); };

  out << "<rect x='" << x0 << "' y='" << y0 << "' width='" << w << "' height='" << h
      << "' fill='none' stroke='#888'/>\n";
  out << "<text x='" << x0 + 4 << "' y='" << y0 + 14
      << "' font-size='12' fill='#222'>" << title << "</text>\n";
  if (vmin < 0.0 && vmax > 0.0)
    out << "<line x1='" << x0 << "' y1='" << py(0.0) << "' x2='" << x0 + w << "' y2='"
        << py(0.0) << "' stroke='#bbb' stroke-dasharray='4 3'/>\n";
  for (const PanelSeries& s : series) {
    if (s.mid.empty()) continue;
    out << "<polygon fill='" << s.color << "' fill-opacity='0.25' stroke='none' points='";
    for (std::size_t i = 0; i < s.mid.size(); ++i)
      if (std::isfinite(s.hi[i])) out << px(i) << ',' << py(s.hi[i]) << ' ';
    for (std::size_t i = s.mid.size(); i-- > 0;)
      if (std::isfinite(s.lo[i])) out << px(i) << ',' << py(s.lo[i]) << ' ';
    out << "'/>\n";
    out << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.mid.size(); ++i)
      if (std::isfinite(s.mid[i])) out << px(i) << ',' << py(s.mid[i]) << ' ';
    out << "'/>\n";
    out << "<text x='" << x0 + w - 80 << "' y='" << y0 + 14 << "' font-size='11' fill='"
        << s.color << "'>" << s.label << "</text>\n";
  }
}

inline std::vector<double> column(const Eigen::MatrixXd& m, int c) {
  std::vector<double> v(m.rows());
  for (int r = 0; r < m.rows(); ++r) v[r] = m(r, c);
  return v;
}

inline std::vector<double> to_vec(const Eigen::VectorXd& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

}  // namespace detail

/// Five stacked panels (speed, headway, certificate value, input, parameter
/// estimates), each with the across-seed min-max band and the mean line.
inline void write_svg(const EnvelopeReport& rep, const std::string& path) {
  const double W = 760, PH = 130, GAP = 14, MARGIN = 20;
  const int panels = 5;
  const double H = MARGIN * 2 + panels * PH + (panels - 1) * GAP;
  std::ofstream out = detail::open_out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "' viewBox='0 0 " << W << ' ' << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  const double px0 = MARGIN, pw = W - 2 * MARGIN;
  const char* palette[4] = {"#1f6fb2", "#c24f2a", "#2a8a4a", "#7a4fc2"};
  double y = MARGIN;
  auto panel = [&](const std::string& title, std::vector<detail::PanelSeries> s) {
    detail::svg_panel(out, px0, y, pw, PH, title, s);
    y += PH + GAP;
  };
  panel("v (speed)", {{"v", detail::column(rep.x_min, 0), detail::column(rep.x_max, 0),
                       detail::column(rep.x_mean, 0), palette[0]}});
  std::vector<double> dlo, dhi, dmid;
  if (rep.x_min.cols() > 1) {
    dlo = detail::column(rep.x_min, 1);
    dhi = detail::column(rep.x_max, 1);
    dmid = detail::column(rep.x_mean, 1);
  }
  panel("d (headway)", {{"d", dlo, dhi, dmid, palette[1]}});
  panel("B (certificate)", {{"B", detail::to_vec(rep.B_min), detail::to_vec(rep.B_max),
                             detail::to_vec(rep.B_mean), palette[2]}});
  std::vector<detail::PanelSeries> us;
  for (int c = 0; c < rep.u_min.cols(); ++c)
    us.push_back({"u" + std::to_string(c + 1), detail::column(rep.u_min, c),
                  detail::column(rep.u_max, c), detail::column(rep.u_mean, c),
                  palette[c % 4]});
  panel("u (applied input)", us);
  std::vector<detail::PanelSeries> ths;
  for (int c = 0; c < rep.th_min.cols(); ++c)
    ths.push_back({"theta_hat_" + std::to_string(c + 1), detail::column(rep.th_min, c),
                   detail::column(rep.th_max, c), detail::column(rep.th_mean, c),
                   palette[c % 4]});
  panel("theta_hat (estimates)", ths);
  out << "</svg>\n";
  if (!out) throw IoError("write failed: " + path);
}

inline void write_svg(const TrajectoryLog& log, const std::string& path) {
  write_svg(harness::fold_envelopes({log}), path);
}

}  // namespace dtcbc::exporter
