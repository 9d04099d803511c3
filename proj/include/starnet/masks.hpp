#pragma once

#include <vector>

#include "starnet/nn/tensor.hpp"

namespace starnet {

// Row ordering of the joint feature stack: frame-major, and within frame k
// the agents are rotated ego-first, i.e. (k, k+1, ..., K-1, 0, ..., k-1).
// Row f*K + s therefore holds agent (f + s) mod K observed in frame f, and
// the fused per-agent feature z^k_k sits at row k*K.
inline int joint_agent_of_row(int row, int k_agents) {
  const int frame = row / k_agents;
  const int slot = row % k_agents;
  return (frame + slot) % k_agents;
}

inline int joint_row_of(int frame, int agent, int k_agents) {
  const int slot = (agent - frame + k_agents) % k_agents;
  return frame * k_agents + slot;
}

// K^2 x K^2 boolean mask: row r may attend column c iff both hold features of
// the same agent. Symmetric with exactly K true entries per row.
nn::MaskMat build_joint_mask(int k_agents);

// Block-diagonal composition; rows of one block never attend another block.
nn::MaskMat block_diag_masks(const std::vector<nn::MaskMat>& blocks);

// All-true square blocks of the given sizes on the diagonal (the batch-wise
// mask for stacking unmasked attention inputs from several scenes).
nn::MaskMat block_diag_full(const std::vector<int>& sizes);

}  // namespace starnet
