#pragma once

#include <string>
#include <vector>

#include "starnet/kinematics.hpp"
#include "starnet/nn/layers.hpp"
#include "starnet/nn/rollout_op.hpp"
#include "starnet/prediction.hpp"

namespace starnet {

struct DecoderConfig {
  int modes = 3;
  int horizon = 30;       // T_fut
  int gru_hidden = 512;
  int gru_iters = 3;
  int pre1 = 512;         // first pre-GRU linear width
  int pre2 = 256;         // second pre-GRU linear width
};

// Multi-modal action decoder. The concatenated (z, w) feature runs through
// two linear layers {512, 256} with batch norm and tanh, then a 2-layer GRU
// unrolled for three iterations with that 256-d feature as constant input.
// A linear head on the final hidden state emits all m action modes in one
// shot plus the mode logits; actions are squashed by tanh into the kinematic
// bounds and rolled out from each sample's seed state.
template <class S>
class ActionDecoder {
 public:
  struct Output {
    // positions[i][j] / actions[i][j]: horizon x 2 for sample i, mode j.
    std::vector<std::vector<nn::Var<S>>> positions;
    std::vector<std::vector<nn::Var<S>>> actions;
    nn::Var<S> logits;  // B x m
    nn::Var<S> scores;  // B x m, rows sum to 1
  };

  ActionDecoder() = default;
  ActionDecoder(nn::ParamStore<S>& store, const std::string& prefix,
                Eigen::Index z_dim, Eigen::Index w_dim, const DecoderConfig& config)
      : config_(config),
        pre1_(store, prefix + ".pre1", z_dim + w_dim, config.pre1),
        pre2_(store, prefix + ".pre2", config.pre1, config.pre2),
        bn1_(store, prefix + ".bn1", config.pre1),
        bn2_(store, prefix + ".bn2", config.pre2),
        gru1_(store, prefix + ".gru1", config.pre2, config.gru_hidden),
        gru2_(store, prefix + ".gru2", config.gru_hidden, config.gru_hidden),
        action_head_(store, prefix + ".action_head", config.gru_hidden,
                     static_cast<Eigen::Index>(config.modes) * 2 * config.horizon),
        score_head_(store, prefix + ".score_head", config.gru_hidden, config.modes) {}

  Output forward(const nn::Var<S>& z, const nn::Var<S>& w,
                 const std::vector<kinematics::BicycleState>& seeds,
                 const kinematics::KinematicParams& kin, bool training) const {
    const Eigen::Index batch = z.rows();
    if (w.rows() != batch || static_cast<Eigen::Index>(seeds.size()) != batch) {
      throw Error("shape", "action decoder: batch size mismatch");
    }
    using nn::Var;
    Var<S> u = nn::concat_cols<S>({z, w});
    u = nn::tanh_op(bn1_.forward(pre1_.forward(u), training));
    u = nn::tanh_op(bn2_.forward(pre2_.forward(u), training));

    Var<S> h1 = nn::constant(nn::Mat<S>::Zero(batch, config_.gru_hidden));
    Var<S> h2 = nn::constant(nn::Mat<S>::Zero(batch, config_.gru_hidden));
    for (int it = 0; it < config_.gru_iters; ++it) {
      h1 = gru1_.forward(u, h1);
      h2 = gru2_.forward(h1, h2);
    }

    Var<S> raw = nn::tanh_op(action_head_.forward(h2));
    // Columns alternate (accel, steer) within each mode block; squash into
    // the kinematic bounds so every decoded mode is feasible by construction.
    nn::Mat<S> bounds(1, raw.cols());
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
      bounds(0, c) = (c % 2 == 0) ? static_cast<S>(kin.accel_max)
                                  : static_cast<S>(kin.steer_max);
    }
    Var<S> squashed = nn::mul_row_constant(raw, bounds);

    Output out;
    out.logits = score_head_.forward(h2);
    out.scores = nn::softmax_rows(out.logits);
    out.positions.resize(batch);
    out.actions.resize(batch);
    const Eigen::Index t_len = config_.horizon;
    for (Eigen::Index i = 0; i < batch; ++i) {
      Var<S> row = nn::slice_rows(squashed, i, 1);
      out.positions[i].reserve(config_.modes);
      out.actions[i].reserve(config_.modes);
      for (int j = 0; j < config_.modes; ++j) {
        Var<S> mode_row = nn::slice_cols(row, static_cast<Eigen::Index>(j) * 2 * t_len,
                                         2 * t_len);
        Var<S> mode_actions = nn::reshape(mode_row, t_len, 2);
        out.actions[i].push_back(mode_actions);
        out.positions[i].push_back(
            nn::rollout_positions(mode_actions, seeds[i], kin));
      }
    }
    return out;
  }

  // Plain-value view of one sample's decode for inference.
  TrajectoryPrediction to_prediction(const Output& out, Eigen::Index i,
                                     AgentId agent_id) const {
    TrajectoryPrediction pred;
    pred.agent_id = agent_id;
    pred.modes.resize(config_.modes);
    for (int j = 0; j < config_.modes; ++j) {
      auto& mode = pred.modes[j];
      const auto& pos = out.positions[i][j].value();
      const auto& act = out.actions[i][j].value();
      mode.points.resize(config_.horizon);
      mode.actions = ActionSequence::zeros(config_.horizon);
      for (int t = 0; t < config_.horizon; ++t) {
        mode.points[t] = {static_cast<double>(pos(t, 0)),
                          static_cast<double>(pos(t, 1))};
        mode.actions.accel[t] = static_cast<double>(act(t, 0));
        mode.actions.steer[t] = static_cast<double>(act(t, 1));
        mode.actions.valid[t] = 1;
      }
      mode.score = static_cast<double>(out.scores.value()(i, j));
    }
    return pred;
  }

  const DecoderConfig& config() const { return config_; }

 private:
  DecoderConfig config_;
  nn::Linear<S> pre1_, pre2_;
  nn::BatchNormLayer<S> bn1_, bn2_;
  nn::GruCell<S> gru1_, gru2_;
  nn::Linear<S> action_head_, score_head_;
};

}  // namespace starnet
