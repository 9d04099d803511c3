#include "starnet/scene.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace starnet {

double normalize_heading(double theta) {
  if (!std::isfinite(theta)) {
    throw Error("domain", "normalize_heading: non-finite input");
  }
  constexpr double two_pi = 2.0 * M_PI;
  double r = std::fmod(theta, two_pi);
  if (r <= -M_PI) {
    r += two_pi;
  } else if (r > M_PI) {
    r -= two_pi;
  }
  return r;
}

const char* to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::Car: return "Car";
    case AgentKind::Truck: return "Truck";
    case AgentKind::Pedestrian: return "Pedestrian";
    case AgentKind::Bicycle: return "Bicycle";
  }
  return "Car";
}

AgentKind agent_kind_from_string(const std::string& s) {
  if (s == "Car") return AgentKind::Car;
  if (s == "Truck") return AgentKind::Truck;
  if (s == "Pedestrian") return AgentKind::Pedestrian;
  if (s == "Bicycle") return AgentKind::Bicycle;
  throw Error("parse", "unknown agent kind: " + s);
}

const char* to_string(PolylineKind kind) {
  return kind == PolylineKind::RoadBoundary ? "RoadBoundary" : "RoadProperty";
}

PolylineKind polyline_kind_from_string(const std::string& s) {
  if (s == "RoadBoundary") return PolylineKind::RoadBoundary;
  if (s == "RoadProperty") return PolylineKind::RoadProperty;
  throw Error("parse", "unknown polyline kind: " + s);
}

int PositionTrack::num_valid() const {
  int n = 0;
  for (auto v : valid) n += v ? 1 : 0;
  return n;
}

int PositionTrack::first_valid() const {
  for (int t = 0; t < length(); ++t) {
    if (valid[t]) return t;
  }
  return length();
}

bool PositionTrack::valid_suffix_ok() const {
  if (points.size() != valid.size()) return false;
  bool seen_valid = false;
  for (int t = 0; t < length(); ++t) {
    if (valid[t]) {
      seen_valid = true;
    } else {
      if (seen_valid) return false;  // hole after the suffix started
      if (points[t].x != 0.0 || points[t].y != 0.0) return false;
    }
  }
  return true;
}

ActionSequence ActionSequence::zeros(int t) {
  ActionSequence a;
  a.accel.assign(t, 0.0);
  a.steer.assign(t, 0.0);
  a.valid.assign(t, 0);
  return a;
}

double Polyline::arc_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    len += distance(points[i - 1], points[i]);
  }
  return len;
}

const PositionTrack* Scene::find_track(AgentId id) const {
  for (const auto& t : tracks) {
    if (t.agent_id == id) return &t;
  }
  return nullptr;
}

const AgentFuture* Scene::find_future(AgentId id) const {
  for (const auto& f : futures) {
    if (f.agent_id == id) return &f;
  }
  return nullptr;
}

void Scene::validate() const {
  std::set<AgentId> seen;
  std::size_t t_past = tracks.empty() ? 0 : tracks.front().points.size();
  for (const auto& t : tracks) {
    if (!seen.insert(t.agent_id).second) {
      throw Error("domain", "duplicate agent id in scene");
    }
    if (t.points.size() != t_past) {
      throw Error("domain", "inconsistent track lengths in scene");
    }
    if (!t.valid_suffix_ok()) {
      throw Error("domain", "track padding is not a contiguous suffix of ones");
    }
    for (int i = 0; i < t.length(); ++i) {
      if (!t.points[i].finite()) throw Error("domain", "non-finite track point");
    }
  }
  std::size_t t_fut = futures.empty() ? 0 : futures.front().points.size();
  for (const auto& f : futures) {
    if (f.points.size() != t_fut) {
      throw Error("domain", "inconsistent future lengths in scene");
    }
  }
}

Pose current_pose(const Scene& scene, AgentId ego_id) {
  const PositionTrack* track = scene.find_track(ego_id);
  if (track == nullptr) {
    throw Error("unknown_agent", "agent not present in scene");
  }
  const int t = track->length();
  if (t == 0 || !track->valid[t - 1]) {
    throw Error("unknown_agent", "agent has no valid current-step point");
  }
  if (track->num_valid() < 2) {
    throw Error("degenerate_heading", "fewer than 2 valid points for heading");
  }
  const Point2 last = track->points[t - 1];
  const Point2 prev = track->points[t - 2];
  const Point2 d = last - prev;
  // atan2(0, 0) == 0 keeps stationary agents well-defined.
  return Pose{last, std::atan2(d.y, d.x)};
}

namespace {

PositionTrack transform_track(const PositionTrack& track, const RigidTransform& tf) {
  PositionTrack out = track;
  for (int t = 0; t < track.length(); ++t) {
    if (track.valid[t]) {
      out.points[t] = tf.apply(track.points[t]);
    } else {
      out.points[t] = {0.0, 0.0};  // padding stays untouched
    }
  }
  return out;
}

}  // namespace

LocalContext to_local_frame(const Scene& scene, AgentId ego_id) {
  const Pose ego = current_pose(scene, ego_id);
  const RigidTransform to_local = RigidTransform::from_pose(ego).inverse();

  LocalContext ctx;
  ctx.ego_id = ego_id;
  ctx.dt = scene.dt;
  ctx.tracks.reserve(scene.tracks.size());
  for (const auto& t : scene.tracks) {
    ctx.tracks.push_back(transform_track(t, to_local));
  }
  ctx.futures.reserve(scene.futures.size());
  for (const auto& f : scene.futures) {
    AgentFuture lf;
    lf.agent_id = f.agent_id;
    lf.points.reserve(f.points.size());
    for (const auto& p : f.points) lf.points.push_back(to_local.apply(p));
    ctx.futures.push_back(std::move(lf));
  }
  ctx.map.reserve(scene.map.size());
  for (const auto& pl : scene.map) {
    Polyline lp;
    lp.kind = pl.kind;
    lp.points.reserve(pl.points.size());
    for (const auto& p : pl.points) lp.points.push_back(to_local.apply(p));
    ctx.map.push_back(std::move(lp));
  }
  return ctx;
}

Scene transformed(const Scene& scene, const RigidTransform& motion) {
  Scene out = scene;
  for (auto& t : out.tracks) t = transform_track(t, motion);
  for (auto& f : out.futures) {
    for (auto& p : f.points) p = motion.apply(p);
  }
  for (auto& pl : out.map) {
    for (auto& p : pl.points) p = motion.apply(p);
  }
  return out;
}

}  // namespace starnet
