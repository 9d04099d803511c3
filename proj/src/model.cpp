#include "starnet/model.hpp"

namespace starnet {

LocalContext prepare_context(const Scene& scene, AgentId ego_id,
                             const kinematics::KinematicParams& kin) {
  LocalContext ctx = to_local_frame(scene, ego_id);
  kinematics::attach_ego_actions(ctx, kin);
  return ctx;
}

}  // namespace starnet
