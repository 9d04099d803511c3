#pragma once

#include <vector>

#include "starnet/scene.hpp"

namespace starnet {

// Multi-modal prediction for one agent: m trajectory modes with their action
// sequences and softmax scores (scores sum to one).
struct TrajectoryPrediction {
  struct Mode {
    std::vector<Point2> points;  // T_fut positions in the ego local frame
    ActionSequence actions;
    double score = 0.0;
  };
  AgentId agent_id = 0;
  std::vector<Mode> modes;

  int num_modes() const { return static_cast<int>(modes.size()); }

  // Index of the highest-score mode.
  int top_mode() const {
    int best = 0;
    for (int i = 1; i < num_modes(); ++i) {
      if (modes[i].score > modes[best].score) best = i;
    }
    return best;
  }
};

}  // namespace starnet
