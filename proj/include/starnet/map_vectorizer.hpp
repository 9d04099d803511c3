#pragma once

#include <array>
#include <vector>

#include "starnet/scene.hpp"

namespace starnet {

// Atomic map unit: a fixed-length segment of a polyline with start/end
// coordinates and a one-hot type over {RoadBoundary, RoadProperty}.
struct MapVector {
  Point2 start;
  Point2 end;
  std::array<double, 2> type_one_hot{0.0, 0.0};

  PolylineKind kind() const {
    return type_one_hot[0] == 1.0 ? PolylineKind::RoadBoundary
                                  : PolylineKind::RoadProperty;
  }
};

struct VectorizedPolyline {
  int polyline_id = 0;
  std::vector<MapVector> vectors;
};

struct VectorizedMap {
  std::vector<VectorizedPolyline> polylines;

  int total_vectors() const {
    int n = 0;
    for (const auto& p : polylines) n += static_cast<int>(p.vectors.size());
    return n;
  }
};

struct VectorizerConfig {
  double vec_len = 2.0;              // meters per vector
  int max_vectors_per_polyline = 0;  // 0 = unlimited (memory guard only)
};

// Walks the polyline by arc length in steps of vec_len; the final vector
// covers the remainder and may be shorter. Throws EmptyPolyline /
// NonPositiveLength.
std::vector<MapVector> resample_polyline(const Polyline& polyline, double vec_len);

VectorizedMap vectorize_map(const std::vector<Polyline>& map,
                            const VectorizerConfig& config);

}  // namespace starnet
