#pragma once

#include <vector>

#include "starnet/scene.hpp"

namespace starnet {
namespace kinematics {

struct BicycleState {
  Pose pose;
  double speed = 0.0;  // m/s, negative while reversing

  bool finite() const {
    return pose.position.finite() && std::isfinite(pose.heading) &&
           std::isfinite(speed);
  }
};

struct KinematicParams {
  double wheelbase = 2.7;    // m, rear-axle reference
  double dt = 0.1;           // s
  double steer_max = M_PI / 4.0;
  double accel_max = 10.0;   // m/s^2
  double v_eps = 0.1;        // m/s, speed clamp for steer inference
};

struct Action {
  double accel = 0.0;
  double steer = 0.0;
};

// Forward-Euler update. Out-of-range actions are clamped; `clamped`, when
// given, counts how often that happened.
BicycleState step(const BicycleState& state, const Action& action,
                  const KinematicParams& params, int* clamped = nullptr);

// Positions of the T successive states; the seed position is excluded.
std::vector<Point2> rollout(const BicycleState& seed,
                            const ActionSequence& actions,
                            const KinematicParams& params,
                            int* clamped = nullptr);

struct InferredActions {
  ActionSequence actions;  // aligned with the track; entry t acts at point t
  BicycleState current;    // state at the last valid point (rollout seed)
  BicycleState first;      // state at the first valid point with motion
};

// Finite-difference inverse of `rollout`: speeds from displacements, heading
// from atan2, steering from heading change. The inverse is algebraically
// exact for tracks produced by the forward model. Requires >= 3 valid points.
InferredActions infer_actions(const PositionTrack& track,
                              const KinematicParams& params);

struct FeasibilityReport {
  bool feasible = true;
  double max_steer = 0.0;   // largest |steer| implied by the positions
  double max_accel = 0.0;   // largest |accel| implied by the positions
  int violating_step = -1;
};

// Checks that a position sequence respects the curvature bound
// tan(steer_max)/wheelbase and the per-step speed-change bound accel_max*dt.
// `seed` supplies the speed entering the first displacement.
FeasibilityReport check_feasible(const BicycleState& seed,
                                 const std::vector<Point2>& positions,
                                 const KinematicParams& params,
                                 double tolerance = 1e-6);

// Runs infer_actions on the ego track of `ctx` and stores the result as the
// ego action track; returns the rollout seed (origin pose in the ego frame).
BicycleState attach_ego_actions(LocalContext& ctx, const KinematicParams& params);

}  // namespace kinematics
}  // namespace starnet
