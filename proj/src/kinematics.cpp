#include "starnet/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace starnet {
namespace kinematics {

namespace {

double clamp_mag(double v, double bound, int* clamped) {
  if (v > bound) {
    if (clamped) ++*clamped;
    return bound;
  }
  if (v < -bound) {
    if (clamped) ++*clamped;
    return -bound;
  }
  return v;
}

double sign_or_one(double v) { return v < 0.0 ? -1.0 : 1.0; }

}  // namespace

BicycleState step(const BicycleState& state, const Action& action,
                  const KinematicParams& params, int* clamped) {
  if (!state.finite()) {
    throw Error("domain", "bicycle step: non-finite state");
  }
  const double a = clamp_mag(action.accel, params.accel_max, clamped);
  const double d = clamp_mag(action.steer, params.steer_max, clamped);
  const double v = state.speed;
  const double th = state.pose.heading;

  BicycleState next;
  next.pose.position.x = state.pose.position.x + v * std::cos(th) * params.dt;
  next.pose.position.y = state.pose.position.y + v * std::sin(th) * params.dt;
  next.pose.heading =
      normalize_heading(th + v / params.wheelbase * std::tan(d) * params.dt);
  next.speed = v + a * params.dt;
  if (!next.finite()) {
    throw Error("domain", "bicycle step: produced non-finite state");
  }
  return next;
}

std::vector<Point2> rollout(const BicycleState& seed,
                            const ActionSequence& actions,
                            const KinematicParams& params, int* clamped) {
  std::vector<Point2> out;
  out.reserve(actions.length());
  BicycleState s = seed;
  for (int t = 0; t < actions.length(); ++t) {
    s = step(s, {actions.accel[t], actions.steer[t]}, params, clamped);
    out.push_back(s.pose.position);
  }
  return out;
}

InferredActions infer_actions(const PositionTrack& track,
                              const KinematicParams& params) {
  const int len = track.length();
  const int first = track.first_valid();
  const int n = len - first;
  if (n < 3) {
    throw Error("too_few_points", "infer_actions needs >= 3 valid points");
  }

  // Per-segment signed speed and heading, with sign continuity: a direction
  // jump beyond pi/2 is read as reversing rather than an instant turn.
  const int n_seg = n - 1;
  std::vector<double> v_seg(n_seg), th_seg(n_seg);
  double prev_heading = 0.0;
  double prev_sign = 1.0;
  for (int j = 0; j < n_seg; ++j) {
    const Point2 d = track.points[first + j + 1] - track.points[first + j];
    const double dist = d.norm();
    if (dist / params.dt < 1e-12) {
      v_seg[j] = 0.0;
      th_seg[j] = j > 0 ? prev_heading : 0.0;
    } else {
      double heading = std::atan2(d.y, d.x);
      double sign = prev_sign;
      if (j > 0 && std::abs(normalize_heading(heading - prev_heading)) > M_PI / 2.0) {
        sign = -prev_sign;
      }
      if (sign < 0.0) heading = normalize_heading(heading + M_PI);
      v_seg[j] = sign * dist / params.dt;
      th_seg[j] = heading;
      prev_sign = sign;
    }
    prev_heading = th_seg[j];
  }

  InferredActions out;
  out.actions = ActionSequence::zeros(len);
  // Entry t transitions the state at point t toward point t+1. The last two
  // valid entries stay zero: their targets need segments past the track end.
  for (int t = 0; t + 2 < n; ++t) {
    const double v = v_seg[t];
    const double v_clamped = sign_or_one(v) * std::max(std::abs(v), params.v_eps);
    const double dth = normalize_heading(th_seg[t + 1] - th_seg[t]);
    out.actions.accel[first + t] = (v_seg[t + 1] - v_seg[t]) / params.dt;
    out.actions.steer[first + t] =
        std::atan(dth * params.wheelbase / (v_clamped * params.dt));
  }
  for (int t = first; t < len; ++t) out.actions.valid[t] = track.valid[t];

  out.first.pose = Pose{track.points[first], th_seg[0]};
  out.first.speed = v_seg[0];
  out.current.pose = Pose{track.points[len - 1], th_seg[n_seg - 1]};
  out.current.speed = v_seg[n_seg - 1];
  return out;
}

FeasibilityReport check_feasible(const BicycleState& seed,
                                 const std::vector<Point2>& positions,
                                 const KinematicParams& params,
                                 double tolerance) {
  FeasibilityReport report;
  const int n = static_cast<int>(positions.size());
  if (n == 0) return report;

  std::vector<double> v(n), th(n);
  double prev_heading = seed.pose.heading;
  double prev_sign = sign_or_one(seed.speed);
  Point2 prev_point = seed.pose.position;
  for (int i = 0; i < n; ++i) {
    const Point2 d = positions[i] - prev_point;
    const double dist = d.norm();
    if (dist / params.dt < 1e-12) {
      v[i] = 0.0;
      th[i] = prev_heading;
    } else {
      double heading = std::atan2(d.y, d.x);
      double sign = prev_sign;
      if (std::abs(normalize_heading(heading - prev_heading)) > M_PI / 2.0) {
        sign = -prev_sign;
      }
      if (sign < 0.0) heading = normalize_heading(heading + M_PI);
      v[i] = sign * dist / params.dt;
      th[i] = heading;
      prev_sign = sign;
    }
    prev_heading = th[i];
    prev_point = positions[i];
  }

  double speed_before = seed.speed;
  double heading_before = seed.pose.heading;
  for (int i = 0; i < n; ++i) {
    const double accel = std::abs(v[i] - speed_before) / params.dt;
    const double v_clamped =
        std::max(std::abs(speed_before), params.v_eps);
    const double dth = std::abs(normalize_heading(th[i] - heading_before));
    const double steer =
        std::atan(dth * params.wheelbase / (v_clamped * params.dt));
    report.max_accel = std::max(report.max_accel, accel);
    report.max_steer = std::max(report.max_steer, steer);
    if ((accel > params.accel_max + tolerance ||
         steer > params.steer_max + tolerance) &&
        report.violating_step < 0) {
      report.feasible = false;
      report.violating_step = i;
    }
    speed_before = v[i];
    heading_before = th[i];
  }
  return report;
}

BicycleState attach_ego_actions(LocalContext& ctx, const KinematicParams& params) {
  const PositionTrack* ego = nullptr;
  for (const auto& t : ctx.tracks) {
    if (t.agent_id == ctx.ego_id) ego = &t;
  }
  if (ego == nullptr) {
    throw Error("unknown_agent", "ego track missing from local context");
  }
  InferredActions inferred = infer_actions(*ego, params);
  ctx.ego_action_track = inferred.actions;
  ctx.ego_speed = inferred.current.speed;
  ctx.ego_seed_heading = inferred.current.pose.heading;
  return inferred.current;
}

}  // namespace kinematics
}  // namespace starnet
