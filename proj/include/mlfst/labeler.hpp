#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mlfst/error.hpp"
#include "mlfst/geodesy.hpp"
#include "mlfst/telemetry.hpp"

namespace mlfst {

// Flight state classes. Encoded values are fixed — they double as label-column
// integers and as class indices in target vectors and metric tables.
enum class DroneState : int {
  idle_hover = 0,
  ascend = 1,
  turn = 2,
  hmsl = 3,  // horizontal movement on a straight line
  descend = 4,
};

inline constexpr int kNumStates = 5;

inline const std::array<std::string, kNumStates>& state_names() {
  static const std::array<std::string, kNumStates> names = {"IDLE_HOVER", "ASCEND", "TURN",
                                                            "HMSL", "DESCEND"};
  return names;
}

inline const std::string& state_name(DroneState s) { return state_names()[static_cast<int>(s)]; }
inline const std::string& state_name(int s) { return state_names()[s]; }

// Per-step decision thresholds. Defaults assume a 10 Hz stream; scale them when
// annotating at a different rate.
struct LabelThresholds {
  double eps_xy = 0.05;   // meters of horizontal displacement per step
  double eps_z = 0.03;    // meters of vertical displacement per step
  double eps_yaw = 0.02;  // radians of heading change per step
};

// Which delta each cascade rule inspects. The vertical rule resolves to ASCEND
// or DESCEND by the sign of dz; no rule firing means IDLE_HOVER.
enum class LabelRule { vertical, turn, horizontal };

using RulePrecedence = std::array<LabelRule, 3>;

// A drone climbing while turning must receive a single label, so ties are
// broken by rule order: vertical motion first, then heading, then horizontal.
inline constexpr RulePrecedence kDefaultPrecedence = {LabelRule::vertical, LabelRule::turn,
                                                      LabelRule::horizontal};

// Yaw (heading) from an x,y,z,w quaternion, Z-axis Euler extraction.
inline double yaw_from_quaternion(double qx, double qy, double qz, double qw) {
  const double norm = std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw);
  require(norm > 1e-12, Errc::zero_norm_quaternion, "cannot derive heading");
  qx /= norm;
  qy /= norm;
  qz /= norm;
  qw /= norm;
  return std::atan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz));
}

inline double yaw_of(const FlightRecord& r) {
  return yaw_from_quaternion(r.orientation_x, r.orientation_y, r.orientation_z, r.orientation_w);
}

// Wraps an angle difference into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

// Horizontal step displacement in meters between consecutive records.
inline double horizontal_step_m(const FlightRecord& a, const FlightRecord& b, CoordMode coord) {
  if (coord == CoordMode::geodetic) {
    return haversine_m(a.position_y, a.position_x, b.position_y, b.position_x);
  }
  const double dx = b.position_x - a.position_x;
  const double dy = b.position_y - a.position_y;
  return std::sqrt(dx * dx + dy * dy);
}

// Assigns one state per record from consecutive-record deltas, first firing
// rule wins (default order):
//   1. |dz|   > eps_z   -> ASCEND (dz > 0) or DESCEND (dz < 0)
//   2. |dyaw| > eps_yaw -> TURN
//   3. dxy    > eps_xy  -> HMSL
//   4. otherwise        -> IDLE_HOVER
// Record t >= 1 is labeled from the step t-1 -> t; record 0 copies record 1.
inline std::vector<int> annotate_states(const FlightSeries& s, const LabelThresholds& th = {},
                                        CoordMode coord = CoordMode::geodetic,
                                        const RulePrecedence& order = kDefaultPrecedence) {
  require(s.records.size() >= 2, Errc::series_too_short,
          "need at least 2 records to annotate, got " + std::to_string(s.records.size()));
  require(th.eps_xy > 0.0 && th.eps_z > 0.0 && th.eps_yaw > 0.0, Errc::config_invalid,
          "label thresholds must be strictly positive");

  std::vector<int> labels(s.records.size());
  for (std::size_t t = 1; t < s.records.size(); ++t) {
    const auto& a = s.records[t - 1];
    const auto& b = s.records[t];
    const double dz = b.position_z - a.position_z;
    const double dyaw = wrap_angle(yaw_of(b) - yaw_of(a));
    const double dxy = horizontal_step_m(a, b, coord);

    DroneState st = DroneState::idle_hover;
    for (LabelRule rule : order) {
      bool fired = false;
      switch (rule) {
        case LabelRule::vertical:
          if (std::abs(dz) > th.eps_z) {
            st = dz > 0.0 ? DroneState::ascend : DroneState::descend;
            fired = true;
          }
          break;
        case LabelRule::turn:
          if (std::abs(dyaw) > th.eps_yaw) {
            st = DroneState::turn;
            fired = true;
          }
          break;
        case LabelRule::horizontal:
          if (dxy > th.eps_xy) {
            st = DroneState::hmsl;
            fired = true;
          }
          break;
      }
      if (fired) break;
    }
    labels[t] = static_cast<int>(st);
  }
  labels[0] = labels[1];
  return labels;
}

}  // namespace mlfst
