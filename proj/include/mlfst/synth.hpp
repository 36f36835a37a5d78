#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mlfst/error.hpp"
#include "mlfst/geodesy.hpp"
#include "mlfst/labeler.hpp"
#include "mlfst/telemetry.hpp"

namespace mlfst {

enum class FlightPattern { triangular, square, polygonal, random_pattern };

inline const char* pattern_name(FlightPattern p) {
  switch (p) {
    case FlightPattern::triangular: return "triangular";
    case FlightPattern::square: return "square";
    case FlightPattern::polygonal: return "polygonal";
    case FlightPattern::random_pattern: return "random";
  }
  return "?";
}

inline FlightPattern pattern_from_name(const std::string& s) {
  if (s == "triangular") return FlightPattern::triangular;
  if (s == "square") return FlightPattern::square;
  if (s == "polygonal") return FlightPattern::polygonal;
  if (s == "random") return FlightPattern::random_pattern;
  raise(Errc::config_invalid, "unknown flight pattern '" + s + "'");
}

// Per-channel noise standard deviations, applied after the kinematic plan.
struct NoiseStd {
  double pos_xy_m = 0.0;   // horizontal position (GPS-like), meters
  double pos_z_m = 0.0;    // altitude, meters
  double vel_mps = 0.0;    // velocity components
  double yaw_rad = 0.0;    // heading perturbation folded into the quaternion
  double wind_mps = 0.0;   // wind speed
  double wind_deg = 0.0;   // wind angle
  double batt_v = 0.0;     // battery voltage
  double batt_a = 0.0;     // battery current
  double ang_rps = 0.0;    // angular velocity components
  double acc_mps2 = 0.0;   // linear acceleration components
  double payload_g = 0.0;  // payload mass

  static NoiseStd zero() { return {}; }

  NoiseStd scaled(double s) const {
    NoiseStd n = *this;
    for (double* f : {&n.pos_xy_m, &n.pos_z_m, &n.vel_mps, &n.yaw_rad, &n.wind_mps, &n.wind_deg,
                      &n.batt_v, &n.batt_a, &n.ang_rps, &n.acc_mps2, &n.payload_g})
      *f *= s;
    return n;
  }

  // GPS-grade sensor noise: enough texture to be non-trivial without flipping
  // annotation decisions at the default thresholds.
  static NoiseStd light() {
    NoiseStd n;
    n.pos_xy_m = 0.01;
    n.pos_z_m = 0.005;
    n.vel_mps = 0.02;
    n.yaw_rad = 0.002;
    n.wind_mps = 0.3;
    n.wind_deg = 4.0;
    n.batt_v = 0.02;
    n.batt_a = 0.2;
    n.ang_rps = 0.005;
    n.acc_mps2 = 0.05;
    n.payload_g = 0.5;
    return n;
  }
};

struct SynthConfig {
  FlightPattern pattern = FlightPattern::triangular;
  double duration_s = 120.0;
  double altitude_m = 30.0;
  double speed_mps = 5.0;
  double payload_g = 250.0;
  double wind_mean_mps = 3.0;
  NoiseStd noise_std;  // zero by default
  std::uint64_t seed = 1;

  double sample_rate_hz = 10.0;
  CoordMode coord = CoordMode::geodetic;
  // Reference origin for geodetic output (an arbitrary mid-latitude point).
  double origin_lat_deg = 47.397742;
  double origin_lon_deg = 8.545594;
  double yaw_rate_rps = 0.6;  // hover-turn rate
  double ramp_s = 0.6;        // speed ramp duration at segment edges
};

// A generated flight plus its ground-truth plan: the intended state of every
// sample and a mask of steady-state samples (false inside speed ramps and
// within a couple of steps of segment boundaries, where per-step deltas sit on
// the annotation thresholds).
struct SynthFlight {
  FlightSeries series;
  std::vector<int> schedule;
  std::vector<std::uint8_t> steady;
};

namespace detail {

// Discrete motion plan on one axis: acceleration samples are authored, then
// velocity and position follow the trapezoidal recurrences exactly, so the
// published channels are mutually consistent by construction.
struct AxisPlan {
  std::vector<double> a, v, p;

  explicit AxisPlan(std::size_t n, double p0 = 0.0) : a(n, 0.0), v(n, 0.0), p(n, p0) {}

  // Schedules a velocity change of delta across integration steps [i, i+m]
  // via a flat acceleration pulse with zero endpoints (m >= 2).
  void pulse(std::size_t i, std::size_t m, double delta, double dt) {
    const double A = delta / (dt * static_cast<double>(m - 1));
    for (std::size_t k = 1; k < m; ++k) a[i + k] += A;
  }

  void integrate(double dt) {
    for (std::size_t t = 0; t + 1 < a.size(); ++t) {
      v[t + 1] = v[t] + dt * (a[t] + a[t + 1]) / 2.0;
      p[t + 1] = p[t] + dt * (v[t] + v[t + 1]) / 2.0;
    }
  }
};

}  // namespace detail

// Builds one deterministic, kinematically consistent flight. The mission runs
// hover, climb, a pattern of hover-turns and straight legs, descent, hover —
// so all five states appear, in that order of first appearance.
inline SynthFlight generate_synthetic_flight_ex(const SynthConfig& cfg) {
  require(cfg.duration_s > 0.0, Errc::config_invalid, "duration_s must be > 0");
  require(cfg.speed_mps >= 0.0, Errc::config_invalid, "speed_mps must be >= 0");
  require(cfg.altitude_m > 0.0, Errc::config_invalid, "altitude_m must be > 0");
  require(cfg.sample_rate_hz > 0.0, Errc::config_invalid, "sample_rate_hz must be > 0");

  const double dt = 1.0 / cfg.sample_rate_hz;
  const std::size_t n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));
  require(n >= 2, Errc::config_invalid, "duration too short for the sample rate");

  const std::size_t m = std::max<std::size_t>(2, static_cast<std::size_t>(
                                                     std::llround(cfg.ramp_s * cfg.sample_rate_hz)));

  std::mt19937_64 rng(cfg.seed);

  // --- segment layout, in steps ---------------------------------------------
  const std::size_t n_idle0 = std::max<std::size_t>(2, n * 8 / 100);
  const std::size_t n_asc = std::max<std::size_t>(2 * m + 2, n * 12 / 100);
  const std::size_t n_desc = n_asc;
  const std::size_t n_idle1 = std::max<std::size_t>(2, n * 6 / 100);
  require(n > n_idle0 + n_asc + n_desc + n_idle1 + 4 * m, Errc::config_invalid,
          "duration too short for the mission profile");
  const std::size_t n_cruise = n - n_idle0 - n_asc - n_desc - n_idle1;

  std::size_t n_legs;
  std::vector<double> turn_angles;  // signed, one before each leg
  switch (cfg.pattern) {
    case FlightPattern::triangular: n_legs = 3; break;
    case FlightPattern::square: n_legs = 4; break;
    case FlightPattern::polygonal: n_legs = 5; break;
    case FlightPattern::random_pattern: n_legs = 4 + rng() % 3; break;
  }
  const double poly_angle = 2.0 * kPi / static_cast<double>(n_legs);
  std::uniform_real_distribution<double> ang_dist(kPi / 6.0, 5.0 * kPi / 6.0);
  for (std::size_t i = 0; i < n_legs; ++i) {
    if (cfg.pattern == FlightPattern::random_pattern) {
      const double a = ang_dist(rng);
      turn_angles.push_back((rng() & 1) ? a : -a);
    } else {
      turn_angles.push_back(poly_angle);
    }
  }

  std::vector<std::size_t> turn_steps(n_legs);
  std::size_t total_turn = 0;
  for (std::size_t i = 0; i < n_legs; ++i) {
    turn_steps[i] = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::llround(std::abs(turn_angles[i]) / cfg.yaw_rate_rps *
                                                 cfg.sample_rate_hz)));
    total_turn += turn_steps[i];
  }
  require(n_cruise > total_turn + n_legs * (2 * m + 2), Errc::config_invalid,
          "duration too short for the requested pattern");
  const std::size_t leg_len = (n_cruise - total_turn) / n_legs;

  // --- author the motion -----------------------------------------------------
  detail::AxisPlan east(n), north(n), up(n);
  std::vector<double> dyaw(n, 0.0);  // yaw increment over step t -> t+1
  std::vector<int> schedule(n, static_cast<int>(DroneState::idle_hover));
  std::vector<std::uint8_t> steady(n, 1);
  std::vector<std::size_t> boundaries;

  auto mark = [&](std::size_t lo, std::size_t hi, DroneState st) {
    boundaries.push_back(lo);
    for (std::size_t t = lo; t < hi && t < n; ++t) schedule[t] = static_cast<int>(st);
  };
  auto unsteady = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t t = lo; t <= hi && t < n; ++t) steady[t] = 0;
  };

  std::size_t cur = n_idle0;

  // climb to altitude
  {
    const std::size_t hold = n_asc - 2 * m;
    const double w = cfg.altitude_m / (dt * static_cast<double>(hold + m));
    up.pulse(cur, m, +w, dt);
    up.pulse(cur + n_asc - m, m, -w, dt);
    mark(cur, cur + n_asc, DroneState::ascend);
    unsteady(cur, cur + m);
    unsteady(cur + n_asc - m, cur + n_asc);
    cur += n_asc;
  }

  double heading = 0.0;
  for (std::size_t leg = 0; leg < n_legs; ++leg) {
    // hover-turn to the next heading
    const std::size_t ts = turn_steps[leg];
    const double dpsi = turn_angles[leg] / static_cast<double>(ts);
    mark(cur, cur + ts, DroneState::turn);
    for (std::size_t k = 0; k < ts && cur + k + 1 < n; ++k) dyaw[cur + k] = dpsi;
    heading += turn_angles[leg];
    unsteady(cur == 0 ? 0 : cur - 2, cur + 2);
    cur += ts;

    // straight leg at cruise speed along the new heading
    const double ce = std::cos(heading), cn = std::sin(heading);
    east.pulse(cur, m, +cfg.speed_mps * ce, dt);
    north.pulse(cur, m, +cfg.speed_mps * cn, dt);
    east.pulse(cur + leg_len - m, m, -cfg.speed_mps * ce, dt);
    north.pulse(cur + leg_len - m, m, -cfg.speed_mps * cn, dt);
    mark(cur, cur + leg_len, DroneState::hmsl);
    unsteady(cur, cur + m + 1);
    unsteady(cur + leg_len - m - 1, cur + leg_len);
    cur += leg_len;
  }

  // descend back to ground
  {
    const std::size_t start = n - n_idle1 - n_desc;
    const std::size_t hold = n_desc - 2 * m;
    const double w = cfg.altitude_m / (dt * static_cast<double>(hold + m));
    up.pulse(start, m, -w, dt);
    up.pulse(start + n_desc - m, m, +w, dt);
    mark(start, start + n_desc, DroneState::descend);
    unsteady(start == 0 ? 0 : start - 2, start + m);
    unsteady(start + n_desc - m, start + n_desc);
    mark(start + n_desc, n, DroneState::idle_hover);
    unsteady(cur == 0 ? 0 : cur - 2, cur + 2);  // gap between last leg and descent
    unsteady(start + n_desc - 2, start + n_desc + 2);
  }

  // a couple of steps around every segment boundary sit on the thresholds
  for (std::size_t b : boundaries) {
    unsteady(b < 2 ? 0 : b - 2, b + 2);
  }

  east.integrate(dt);
  north.integrate(dt);
  up.integrate(dt);

  std::vector<double> yaw(n, 0.0);
  for (std::size_t t = 0; t + 1 < n; ++t) yaw[t + 1] = yaw[t] + dyaw[t];

  // --- emit records ----------------------------------------------------------
  std::normal_distribution<double> gauss(0.0, 1.0);
  const NoiseStd& ns = cfg.noise_std;
  auto noise = [&](double sd) { return sd > 0.0 ? sd * gauss(rng) : 0.0; };

  const double lat0 = cfg.origin_lat_deg;
  const double m_per_deg_lat = kEarthRadiusM * kPi / 180.0;
  const double m_per_deg_lon = m_per_deg_lat * std::cos(deg2rad(lat0));

  SynthFlight out;
  out.series.flight_id = std::string("synth-") + pattern_name(cfg.pattern) + "-" +
                         std::to_string(cfg.seed);
  out.series.sample_rate_hz = cfg.sample_rate_hz;
  out.series.records.resize(n);
  out.schedule = std::move(schedule);
  out.steady = std::move(steady);

  const double wind_base_angle = std::uniform_real_distribution<double>(0.0, 360.0)(rng);

  for (std::size_t t = 0; t < n; ++t) {
    FlightRecord& r = out.series.records[t];
    const double tt = static_cast<double>(t) / cfg.sample_rate_hz;
    r.timestamp = tt;

    const double e = east.p[t] + noise(ns.pos_xy_m);
    const double nn = north.p[t] + noise(ns.pos_xy_m);
    const double u = up.p[t] + noise(ns.pos_z_m);
    if (cfg.coord == CoordMode::geodetic) {
      r.position_x = cfg.origin_lon_deg + e / m_per_deg_lon;
      r.position_y = lat0 + nn / m_per_deg_lat;
    } else {
      r.position_x = e;
      r.position_y = nn;
    }
    r.position_z = u;

    const double psi = yaw[t] + noise(ns.yaw_rad);
    r.orientation_x = 0.0;
    r.orientation_y = 0.0;
    r.orientation_z = std::sin(psi / 2.0);
    r.orientation_w = std::cos(psi / 2.0);

    r.velocity_x = east.v[t] + noise(ns.vel_mps);
    r.velocity_y = north.v[t] + noise(ns.vel_mps);
    r.velocity_z = up.v[t] + noise(ns.vel_mps);

    r.angular_x = noise(ns.ang_rps);
    r.angular_y = noise(ns.ang_rps);
    r.angular_z = dyaw[t] / dt + noise(ns.ang_rps);

    r.linear_acceleration_x = east.a[t] + noise(ns.acc_mps2);
    r.linear_acceleration_y = north.a[t] + noise(ns.acc_mps2);
    r.linear_acceleration_z = up.a[t] + noise(ns.acc_mps2);

    r.wind_speed = std::max(0.0, cfg.wind_mean_mps + 0.5 * std::sin(2.0 * kPi * tt / 37.0) +
                                     noise(ns.wind_mps));
    r.wind_angle = std::fmod(wind_base_angle + 2.0 * std::sin(2.0 * kPi * tt / 53.0) +
                                 noise(ns.wind_deg) + 360.0,
                             360.0);

    const double hspeed = std::hypot(east.v[t], north.v[t]);
    const double climb = std::abs(up.v[t]);
    r.battery_voltage = 16.8 - 1.2 * (tt / std::max(1.0, cfg.duration_s)) + noise(ns.batt_v);
    r.battery_current =
        std::max(0.0, 8.0 + 1.5 * hspeed / std::max(1.0, cfg.speed_mps) + 3.0 * climb +
                          noise(ns.batt_a));
    r.payload = std::max(0.0, cfg.payload_g + noise(ns.payload_g));
  }

  return out;
}

inline FlightSeries generate_synthetic_flight(const SynthConfig& cfg) {
  return generate_synthetic_flight_ex(cfg).series;
}

}  // namespace mlfst
