#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "starnet/geometry.hpp"

namespace starnet {

using AgentId = std::int64_t;

enum class AgentKind { Car, Truck, Pedestrian, Bicycle };

const char* to_string(AgentKind kind);
AgentKind agent_kind_from_string(const std::string& s);

inline bool is_vehicle(AgentKind kind) {
  return kind == AgentKind::Car || kind == AgentKind::Truck;
}

// Past positions of one agent over T steps plus a padding row. A zero valid
// flag means the agent was not observed at that step and the point is (0,0).
// Valid flags form a contiguous suffix of ones ending at the current step.
struct PositionTrack {
  AgentId agent_id = 0;
  AgentKind kind = AgentKind::Car;
  std::vector<Point2> points;
  std::vector<std::uint8_t> valid;

  int length() const { return static_cast<int>(points.size()); }
  int num_valid() const;
  // Index of the first valid step, or length() if none are valid.
  int first_valid() const;
  bool valid_suffix_ok() const;
};

// Acceleration / steering controls over T steps with a padding row.
struct ActionSequence {
  std::vector<double> accel;  // m/s^2
  std::vector<double> steer;  // radians
  std::vector<std::uint8_t> valid;

  int length() const { return static_cast<int>(accel.size()); }
  static ActionSequence zeros(int t);
};

enum class PolylineKind { RoadBoundary, RoadProperty };

const char* to_string(PolylineKind kind);
PolylineKind polyline_kind_from_string(const std::string& s);

// Ordered point sequence approximating one map element. Consecutive points
// must be distinct.
struct Polyline {
  PolylineKind kind = PolylineKind::RoadBoundary;
  std::vector<Point2> points;

  double arc_length() const;
};

struct AgentFuture {
  AgentId agent_id = 0;
  std::vector<Point2> points;  // T_fut ground-truth waypoints
};

// Global-frame container for one time window: past tracks, ground-truth
// futures, and the map.
struct Scene {
  std::vector<PositionTrack> tracks;
  std::vector<AgentFuture> futures;
  std::vector<Polyline> map;
  double dt = 0.1;

  const PositionTrack* find_track(AgentId id) const;
  const AgentFuture* find_future(AgentId id) const;
  void validate() const;  // unique ids, consistent lengths, track invariants
};

// A scene expressed in one agent's reference frame: the ego's current pose
// maps to the origin with heading zero.
struct LocalContext {
  AgentId ego_id = 0;
  std::vector<Polyline> map;
  std::vector<PositionTrack> tracks;
  std::vector<AgentFuture> futures;
  ActionSequence ego_action_track;  // filled by the kinematics stage
  // Rollout seed at the current step, in this frame. Heading is ~0, or ~pi
  // with negative speed when the ego reversed within its history (the two
  // gauges propagate identically).
  double ego_speed = 0.0;
  double ego_seed_heading = 0.0;
  double dt = 0.1;
};

// Current pose of an agent: last valid point, heading from the displacement
// of the last two valid points. Throws UnknownAgent / DegenerateHeading.
Pose current_pose(const Scene& scene, AgentId ego_id);

// Rigidly transforms tracks, futures and map into the ego frame. Padding
// entries stay (0,0) with valid = 0. The ego action track is left empty;
// kinematics::attach_ego_actions fills it in.
LocalContext to_local_frame(const Scene& scene, AgentId ego_id);

// Applies a rigid motion to every global-frame coordinate of a scene.
Scene transformed(const Scene& scene, const RigidTransform& motion);

}  // namespace starnet
