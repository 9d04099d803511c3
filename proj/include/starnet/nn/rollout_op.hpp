#pragma once

#include <vector>

#include "starnet/kinematics.hpp"
#include "starnet/nn/tensor.hpp"

namespace starnet {
namespace nn {

// Differentiable forward-Euler rollout. `actions` is T x 2 with columns
// (accel, steer); the result is the T x 2 matrix of successive positions.
// The forward pass reuses kinematics::step so the numbers match the plain
// rollout bit for bit; the backward pass is the hand-derived adjoint of the
// integrator. Clamped action components receive zero gradient.
template <class S>
Var<S> rollout_positions(const Var<S>& actions, const kinematics::BicycleState& seed,
                         const kinematics::KinematicParams& params) {
  if (actions.cols() != 2) {
    throw Error("shape", "rollout_positions: actions must be T x 2");
  }
  const Eigen::Index t_len = actions.rows();
  std::vector<kinematics::BicycleState> states(t_len + 1);
  std::vector<double> steer_applied(t_len);
  std::vector<std::uint8_t> accel_clamped(t_len, 0), steer_clamped(t_len, 0);
  states[0] = seed;
  Mat<S> out(t_len, 2);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const double a_raw = static_cast<double>(actions.value()(t, 0));
    const double d_raw = static_cast<double>(actions.value()(t, 1));
    accel_clamped[t] = std::abs(a_raw) > params.accel_max ? 1 : 0;
    steer_clamped[t] = std::abs(d_raw) > params.steer_max ? 1 : 0;
    states[t + 1] = kinematics::step(states[t], {a_raw, d_raw}, params);
    steer_applied[t] = std::clamp(d_raw, -params.steer_max, params.steer_max);
    out(t, 0) = static_cast<S>(states[t + 1].pose.position.x);
    out(t, 1) = static_cast<S>(states[t + 1].pose.position.y);
  }

  return Var<S>::make(
      std::move(out), {actions},
      [actions, states = std::move(states), steer_applied = std::move(steer_applied),
       accel_clamped = std::move(accel_clamped),
       steer_clamped = std::move(steer_clamped), params](Node<S>& n) {
        if (!actions.requires_grad()) return;
        const double dt = params.dt;
        const double wb = params.wheelbase;
        double gx = 0.0, gy = 0.0, gth = 0.0, gv = 0.0;
        const Eigen::Index t_len = actions.rows();
        for (Eigen::Index t = t_len - 1; t >= 0; --t) {
          gx += static_cast<double>(n.grad(t, 0));
          gy += static_cast<double>(n.grad(t, 1));
          const double th = states[t].pose.heading;
          const double v = states[t].speed;
          const double delta = steer_applied[t];
          const double cos_d = std::cos(delta);
          if (!accel_clamped[t]) {
            actions.node()->grad(t, 0) += static_cast<S>(gv * dt);
          }
          if (!steer_clamped[t]) {
            actions.node()->grad(t, 1) +=
                static_cast<S>(gth * v * dt / (wb * cos_d * cos_d));
          }
          const double gth_new = gth + gx * (-v * std::sin(th) * dt) +
                                 gy * (v * std::cos(th) * dt);
          const double gv_new = gv + gx * std::cos(th) * dt +
                                gy * std::sin(th) * dt +
                                gth * std::tan(delta) * dt / wb;
          gth = gth_new;
          gv = gv_new;
        }
      });
}

}  // namespace nn
}  // namespace starnet
