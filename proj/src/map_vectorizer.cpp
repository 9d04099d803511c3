#include "starnet/map_vectorizer.hpp"

#include <algorithm>
#include <cmath>

namespace starnet {

namespace {

// Point at arc-length position s along the polyline (s clamped to the end).
Point2 point_at_arclen(const std::vector<Point2>& pts, double s) {
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = distance(pts[i - 1], pts[i]);
    if (s <= seg) {
      const double u = seg > 0.0 ? s / seg : 0.0;
      return pts[i - 1] + (pts[i] - pts[i - 1]) * u;
    }
    s -= seg;
  }
  return pts.back();
}

}  // namespace

std::vector<MapVector> resample_polyline(const Polyline& polyline, double vec_len) {
  if (polyline.points.size() < 2) {
    throw Error("empty_polyline", "polyline needs at least 2 points");
  }
  if (!(vec_len > 0.0)) {
    throw Error("non_positive_length", "vec_len must be > 0");
  }
  for (std::size_t i = 1; i < polyline.points.size(); ++i) {
    if (polyline.points[i] == polyline.points[i - 1]) {
      throw Error("empty_polyline", "consecutive polyline points coincide");
    }
  }
  const double total = polyline.arc_length();
  if (!(total > 0.0)) {
    throw Error("empty_polyline", "polyline has zero arc length");
  }

  const int count =
      std::max(1, static_cast<int>(std::ceil(total / vec_len - 1e-12)));
  std::array<double, 2> one_hot =
      polyline.kind == PolylineKind::RoadBoundary ? std::array<double, 2>{1.0, 0.0}
                                                  : std::array<double, 2>{0.0, 1.0};
  std::vector<MapVector> out;
  out.reserve(count);
  Point2 prev = polyline.points.front();
  for (int l = 1; l <= count; ++l) {
    const double s = std::min(l * vec_len, total);
    // Chaining: each start is the previous end, the last end is the endpoint.
    Point2 next = (l == count) ? polyline.points.back() : point_at_arclen(polyline.points, s);
    MapVector v;
    v.start = prev;
    v.end = next;
    v.type_one_hot = one_hot;
    out.push_back(v);
    prev = next;
  }
  return out;
}

VectorizedMap vectorize_map(const std::vector<Polyline>& map,
                            const VectorizerConfig& config) {
  VectorizedMap out;
  out.polylines.reserve(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    VectorizedPolyline vp;
    vp.polyline_id = static_cast<int>(i);
    try {
      vp.vectors = resample_polyline(map[i], config.vec_len);
    } catch (const Error& e) {
      throw Error(e.category(),
                  "polyline " + std::to_string(i) + ": " + e.what());
    }
    if (config.max_vectors_per_polyline > 0 &&
        static_cast<int>(vp.vectors.size()) > config.max_vectors_per_polyline) {
      vp.vectors.resize(config.max_vectors_per_polyline);
    }
    out.polylines.push_back(std::move(vp));
  }
  return out;
}

}  // namespace starnet
