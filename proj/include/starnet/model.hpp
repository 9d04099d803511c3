#pragma once

#include <string>
#include <vector>

#include "starnet/action_decoder.hpp"
#include "starnet/encoders.hpp"
#include "starnet/interaction.hpp"
#include "starnet/map_vectorizer.hpp"
#include "starnet/star_graph.hpp"

namespace starnet {

struct ModelConfig {
  int t_past = 25;
  int t_fut = 30;
  double dt = 0.1;
  Eigen::Index d_position = 128;
  Eigen::Index d_action = 64;
  Eigen::Index heads = 8;
  DecoderConfig decoder;
  VectorizerConfig vectorizer;
  kinematics::KinematicParams kin;

  ModelConfig() {
    decoder.horizon = t_fut;
    kin.dt = dt;
  }
};

// to_local_frame plus action-track inference for the ego.
LocalContext prepare_context(const Scene& scene, AgentId ego_id,
                             const kinematics::KinematicParams& kin);

// StarNet / joint-StarNet. The context encoder (track encoders, star-graph
// GAT, single-agent MHA) is shared; the joint path adds the masked joint MHA
// over the K^2 cross-frame features.
template <class S>
class StarNet {
 public:
  struct ContextEncoding {
    EmbeddingStack<S> stack;          // post single-agent MHA
    nn::Var<S> action_feature;        // 1 x d_action
    kinematics::BicycleState seed;    // rollout seed in this frame
    AgentId ego_id = 0;
  };

  struct JointSample {
    std::vector<LocalContext> contexts;  // frame k = candidates[k]'s frame
    std::vector<AgentId> candidates;     // K ids, ego first then ascending
  };

  StarNet(const ModelConfig& config, std::uint64_t seed)
      : config_(config),
        store_(seed),
        pos_encoder_(store_, "pos_encoder", config.d_position),
        act_encoder_(store_, "act_encoder", config.d_action),
        map_embed_(store_, "map_embed", config.d_position),
        gat_(store_, "gat", config.d_position, config.heads),
        single_mha_(store_, "single_mha", config.d_position, config.heads),
        joint_mha_(store_, "joint_mha", config.d_position, config.heads),
        decoder_(store_, "decoder", config.d_position, config.d_action,
                 config.decoder) {}

  // Runs encoders, per-polyline star graphs + GAT, and the batched
  // single-agent MHA for every context. One batched call covers all contexts
  // (block-diagonal star graphs, batch-wise attention mask).
  std::vector<ContextEncoding> encode_contexts(
      const std::vector<LocalContext>& contexts, bool training) const {
    const int n_ctx = static_cast<int>(contexts.size());
    if (n_ctx == 0) throw Error("domain", "encode_contexts: no contexts");

    // Position tracks of every agent in every context, one encoder call.
    std::vector<nn::Mat<S>> track_mats;
    std::vector<int> ctx_track_offset(n_ctx + 1, 0);
    for (int i = 0; i < n_ctx; ++i) {
      for (const auto& track : contexts[i].tracks) {
        track_mats.push_back(TrackEncoder<S>::pack_position_track(track));
      }
      ctx_track_offset[i + 1] =
          ctx_track_offset[i] + static_cast<int>(contexts[i].tracks.size());
    }
    nn::Var<S> track_feats = pos_encoder_.forward(
        nn::constant(vstack(track_mats)), static_cast<Eigen::Index>(track_mats.size()),
        training);

    // Ego action tracks, one call.
    std::vector<nn::Mat<S>> action_mats;
    action_mats.reserve(n_ctx);
    for (const auto& ctx : contexts) {
      action_mats.push_back(TrackEncoder<S>::pack_action_track(ctx.ego_action_track));
    }
    nn::Var<S> action_feats =
        act_encoder_.forward(nn::constant(vstack(action_mats)), n_ctx, training);

    // Vectorize all maps, embed every map vector in one linear call.
    std::vector<VectorizedMap> vmaps(n_ctx);
    std::vector<const MapVector*> all_vectors;
    for (int i = 0; i < n_ctx; ++i) {
      vmaps[i] = vectorize_map(contexts[i].map, config_.vectorizer);
      for (const auto& pl : vmaps[i].polylines) {
        for (const auto& v : pl.vectors) all_vectors.push_back(&v);
      }
    }
    nn::Var<S> vector_feats;
    if (!all_vectors.empty()) {
      vector_feats = map_embed_.forward(
          nn::constant(MapVectorEmbedder<S>::pack(all_vectors)));
    }

    // One block-diagonal star graph batch over all (context, polyline) pairs.
    std::vector<int> leaf_counts;
    std::vector<nn::Var<S>> node_rows;
    std::vector<int> ctx_graph_offset(n_ctx + 1, 0);
    Eigen::Index vec_at = 0;
    for (int i = 0; i < n_ctx; ++i) {
      const Eigen::Index ego_row = ego_row_index(contexts[i], ctx_track_offset[i]);
      for (const auto& pl : vmaps[i].polylines) {
        const auto leaves = static_cast<Eigen::Index>(pl.vectors.size());
        leaf_counts.push_back(static_cast<int>(leaves));
        node_rows.push_back(nn::slice_rows(track_feats, ego_row, 1));
        node_rows.push_back(nn::slice_rows(vector_feats, vec_at, leaves));
        vec_at += leaves;
      }
      ctx_graph_offset[i + 1] =
          ctx_graph_offset[i] + static_cast<int>(vmaps[i].polylines.size());
    }
    nn::Var<S> polyline_feats;
    if (!leaf_counts.empty()) {
      BatchedStarGraphs graphs = BatchedStarGraphs::build(leaf_counts);
      nn::Var<S> nodes = nn::concat_rows(node_rows);
      polyline_feats = gat_.pool(gat_.forward(nodes, graphs), graphs);
    }

    // Stack agents + polylines per context; one batched MHA call with the
    // batch-wise block-diagonal mask.
    std::vector<nn::Var<S>> stacked;
    std::vector<int> sizes;
    std::vector<std::vector<StackTag>> tags(n_ctx);
    for (int i = 0; i < n_ctx; ++i) {
      const int n_agents = ctx_track_offset[i + 1] - ctx_track_offset[i];
      const int n_polys = ctx_graph_offset[i + 1] - ctx_graph_offset[i];
      std::vector<nn::Var<S>> parts;
      parts.push_back(nn::slice_rows(track_feats, ctx_track_offset[i], n_agents));
      if (n_polys > 0) {
        parts.push_back(nn::slice_rows(polyline_feats, ctx_graph_offset[i], n_polys));
      }
      stacked.push_back(nn::concat_rows(parts));
      sizes.push_back(n_agents + n_polys);
      for (const auto& track : contexts[i].tracks) {
        tags[i].push_back(StackTag::agent(track.agent_id));
      }
      for (int p = 0; p < n_polys; ++p) tags[i].push_back(StackTag::polyline(p));
    }
    typename Mha<S>::Output mha_out = single_mha_.forward(
        nn::concat_rows(stacked), block_diag_full(sizes));

    std::vector<ContextEncoding> out(n_ctx);
    Eigen::Index row_at = 0;
    for (int i = 0; i < n_ctx; ++i) {
      out[i].stack.rows = nn::slice_rows(mha_out.features, row_at, sizes[i]);
      out[i].stack.tags = std::move(tags[i]);
      out[i].action_feature = nn::slice_rows(action_feats, i, 1);
      out[i].ego_id = contexts[i].ego_id;
      out[i].seed = context_seed(contexts[i]);
      row_at += sizes[i];
    }
    return out;
  }

  // Single-agent StarNet: select each context's ego row, decode.
  typename ActionDecoder<S>::Output forward_single(
      const std::vector<LocalContext>& contexts, bool training) const {
    auto encodings = encode_contexts(contexts, training);
    std::vector<nn::Var<S>> z_rows;
    std::vector<nn::Var<S>> w_rows;
    std::vector<kinematics::BicycleState> seeds;
    for (const auto& enc : encodings) {
      z_rows.push_back(enc.stack.select_row(StackTag::agent(enc.ego_id)));
      w_rows.push_back(enc.action_feature);
      seeds.push_back(enc.seed);
    }
    return decoder_.forward(nn::concat_rows(z_rows), nn::concat_rows(w_rows),
                            seeds, config_.kin, training);
  }

  // Joint-StarNet over a batch of scenes. Per scene, the K^2 cross-frame
  // features go through the masked joint MHA; decode order is scene-major,
  // candidate-minor.
  typename ActionDecoder<S>::Output forward_joint(
      const std::vector<JointSample>& samples, bool training) const {
    std::vector<LocalContext> flat;
    for (const auto& s : samples) {
      if (s.contexts.size() != s.candidates.size() || s.candidates.empty()) {
        throw Error("domain", "joint sample: contexts must match candidates");
      }
      for (const auto& ctx : s.contexts) flat.push_back(ctx);
    }
    auto encodings = encode_contexts(flat, training);

    std::vector<nn::Var<S>> joint_stacks;
    std::vector<nn::MaskMat> joint_masks;
    std::size_t enc_at = 0;
    for (const auto& s : samples) {
      const int k = static_cast<int>(s.candidates.size());
      std::vector<std::vector<nn::Var<S>>> selected(k);
      for (int frame = 0; frame < k; ++frame) {
        const auto& enc = encodings[enc_at + frame];
        selected[frame].reserve(k);
        for (int j = 0; j < k; ++j) {
          selected[frame].push_back(
              enc.stack.select_row(StackTag::agent(s.candidates[j])));
        }
      }
      joint_stacks.push_back(build_joint_stack<S>(selected));
      joint_masks.push_back(build_joint_mask(k));
      enc_at += k;
    }
    typename Mha<S>::Output joint_out = joint_mha_.forward(
        nn::concat_rows(joint_stacks), block_diag_masks(joint_masks));

    // Row k*K of each scene block is z^k_k, the fused ego-frame feature.
    std::vector<nn::Var<S>> z_rows;
    std::vector<nn::Var<S>> w_rows;
    std::vector<kinematics::BicycleState> seeds;
    Eigen::Index row_at = 0;
    enc_at = 0;
    for (const auto& s : samples) {
      const int k = static_cast<int>(s.candidates.size());
      for (int frame = 0; frame < k; ++frame) {
        z_rows.push_back(nn::slice_rows(joint_out.features,
                                        row_at + joint_row_of(frame, frame, k), 1));
        w_rows.push_back(encodings[enc_at + frame].action_feature);
        seeds.push_back(encodings[enc_at + frame].seed);
      }
      row_at += static_cast<Eigen::Index>(k) * k;
      enc_at += k;
    }
    return decoder_.forward(nn::concat_rows(z_rows), nn::concat_rows(w_rows),
                            seeds, config_.kin, training);
  }

  std::vector<TrajectoryPrediction> predict_single(
      const Scene& scene, const std::vector<AgentId>& egos) const {
    std::vector<LocalContext> contexts;
    contexts.reserve(egos.size());
    for (AgentId id : egos) contexts.push_back(prepare_context(scene, id, config_.kin));
    auto out = forward_single(contexts, false);
    std::vector<TrajectoryPrediction> preds;
    for (std::size_t i = 0; i < egos.size(); ++i) {
      preds.push_back(decoder_.to_prediction(out, static_cast<Eigen::Index>(i),
                                             egos[i]));
    }
    return preds;
  }

  std::vector<TrajectoryPrediction> predict_joint(
      const Scene& scene, const std::vector<AgentId>& candidates) const {
    JointSample sample;
    sample.candidates = candidates;
    for (AgentId id : candidates) {
      sample.contexts.push_back(prepare_context(scene, id, config_.kin));
    }
    auto out = forward_joint({sample}, false);
    std::vector<TrajectoryPrediction> preds;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      preds.push_back(decoder_.to_prediction(out, static_cast<Eigen::Index>(i),
                                             candidates[i]));
    }
    return preds;
  }

  nn::ParamStore<S>& params() { return store_; }
  const nn::ParamStore<S>& params() const { return store_; }
  const ModelConfig& config() const { return config_; }
  const ActionDecoder<S>& decoder() const { return decoder_; }
  const Mha<S>& single_mha() const { return single_mha_; }
  const Mha<S>& joint_mha() const { return joint_mha_; }
  const StarGat<S>& gat() const { return gat_; }

 private:
  static nn::Mat<S> vstack(const std::vector<nn::Mat<S>>& mats) {
    Eigen::Index rows = 0;
    for (const auto& m : mats) rows += m.rows();
    nn::Mat<S> out(rows, mats.empty() ? 0 : mats.front().cols());
    Eigen::Index at = 0;
    for (const auto& m : mats) {
      out.middleRows(at, m.rows()) = m;
      at += m.rows();
    }
    return out;
  }

  Eigen::Index ego_row_index(const LocalContext& ctx, int base) const {
    for (std::size_t i = 0; i < ctx.tracks.size(); ++i) {
      if (ctx.tracks[i].agent_id == ctx.ego_id) {
        return base + static_cast<Eigen::Index>(i);
      }
    }
    throw Error("unknown_agent", "ego track missing from local context");
  }

  kinematics::BicycleState context_seed(const LocalContext& ctx) const {
    kinematics::BicycleState seed;
    seed.pose = Pose{{0.0, 0.0}, ctx.ego_seed_heading};
    seed.speed = ctx.ego_speed;
    return seed;
  }

  ModelConfig config_;
  nn::ParamStore<S> store_;
  TrackEncoder<S> pos_encoder_;
  TrackEncoder<S> act_encoder_;
  MapVectorEmbedder<S> map_embed_;
  StarGat<S> gat_;
  Mha<S> single_mha_;
  Mha<S> joint_mha_;
  ActionDecoder<S> decoder_;
};

}  // namespace starnet
