#include "starnet/masks.hpp"

#include "starnet/error.hpp"

namespace starnet {

nn::MaskMat build_joint_mask(int k_agents) {
  if (k_agents < 1) {
    throw Error("domain", "build_joint_mask: need K >= 1");
  }
  const int n = k_agents * k_agents;
  nn::MaskMat mask(n, n);
  for (int r = 0; r < n; ++r) {
    const int agent_r = joint_agent_of_row(r, k_agents);
    for (int c = 0; c < n; ++c) {
      mask(r, c) = joint_agent_of_row(c, k_agents) == agent_r ? 1 : 0;
    }
  }
  return mask;
}

nn::MaskMat block_diag_masks(const std::vector<nn::MaskMat>& blocks) {
  Eigen::Index n = 0;
  for (const auto& b : blocks) {
    if (b.rows() != b.cols()) {
      throw Error("domain", "block_diag_masks: blocks must be square");
    }
    n += b.rows();
  }
  nn::MaskMat out = nn::MaskMat::Zero(n, n);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.block(at, at, b.rows(), b.cols()) = b;
    at += b.rows();
  }
  return out;
}

nn::MaskMat block_diag_full(const std::vector<int>& sizes) {
  Eigen::Index n = 0;
  for (int s : sizes) n += s;
  nn::MaskMat out = nn::MaskMat::Zero(n, n);
  Eigen::Index at = 0;
  for (int s : sizes) {
    out.block(at, at, s, s).setConstant(1);
    at += s;
  }
  return out;
}

}  // namespace starnet
