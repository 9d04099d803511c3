#pragma once

#include <string>
#include <variant>
#include <vector>

#include "starnet/masks.hpp"
#include "starnet/nn/layers.hpp"
#include "starnet/scene.hpp"

namespace starnet {

// Row tag of an embedding stack: agent track row or polyline row.
struct StackTag {
  enum class Kind { Agent, Polyline };
  Kind kind = Kind::Agent;
  AgentId agent_id = 0;
  int polyline_id = 0;

  static StackTag agent(AgentId id) { return {Kind::Agent, id, 0}; }
  static StackTag polyline(int id) { return {Kind::Polyline, 0, id}; }
  bool operator==(const StackTag& o) const {
    return kind == o.kind &&
           (kind == Kind::Agent ? agent_id == o.agent_id
                                : polyline_id == o.polyline_id);
  }
};

// (N+Q) x d embedding matrix: agent rows first, polyline rows after.
template <class S>
struct EmbeddingStack {
  nn::Var<S> rows;
  std::vector<StackTag> tags;

  Eigen::Index index_of(const StackTag& tag) const {
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (tags[i] == tag) return static_cast<Eigen::Index>(i);
    }
    throw Error("domain", "embedding stack: tag not present");
  }

  nn::Var<S> select_row(const StackTag& tag) const {
    return nn::slice_rows(rows, index_of(tag), 1);
  }
};

// Single multi-head self-attention layer: Q/K/V projections, 8 heads, scaled
// dot-product attention, output projection, residual connection, layer norm
// post-residual. No feedforward sublayer and no positional encodings; row
// identity is carried by the stack layout. An optional boolean mask restricts
// which rows may attend to which; excluded positions get exactly zero weight.
template <class S>
class Mha {
 public:
  struct Output {
    nn::Var<S> features;
    std::vector<nn::Mat<S>> attention;  // per head, rows x rows post-softmax
  };

  Mha() = default;
  Mha(nn::ParamStore<S>& store, const std::string& prefix, Eigen::Index dim,
      Eigen::Index heads)
      : dim_(dim),
        heads_(heads),
        head_dim_(dim / heads),
        wq_(store, prefix + ".wq", dim, dim),
        wk_(store, prefix + ".wk", dim, dim),
        wv_(store, prefix + ".wv", dim, dim),
        wo_(store, prefix + ".wo", dim, dim),
        norm_(store, prefix + ".norm", dim) {
    if (dim % heads != 0) {
      throw Error("domain", "mha: dim must be divisible by heads");
    }
  }

  Output forward(const nn::Var<S>& x, const nn::MaskMat& mask = {}) const {
    if (x.rows() == 0) {
      throw Error("domain", "mha: empty stack");
    }
    if (x.cols() != dim_) {
      throw Error("shape", "mha: feature width mismatch");
    }
    if (mask.size() != 0 && (mask.rows() != x.rows() || mask.cols() != x.rows())) {
      throw Error("shape", "mha: mask must be rows x rows");
    }
    using nn::Var;
    Var<S> q = wq_.forward(x);
    Var<S> k = wk_.forward(x);
    Var<S> v = wv_.forward(x);
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(head_dim_));

    Output out;
    std::vector<Var<S>> heads;
    heads.reserve(heads_);
    for (Eigen::Index hd = 0; hd < heads_; ++hd) {
      Var<S> qh = nn::slice_cols(q, hd * head_dim_, head_dim_);
      Var<S> kh = nn::slice_cols(k, hd * head_dim_, head_dim_);
      Var<S> vh = nn::slice_cols(v, hd * head_dim_, head_dim_);
      Var<S> scores = nn::scale(nn::matmul_nt(qh, kh), inv_sqrt);
      Var<S> attn = mask.size() != 0
                        ? nn::masked_softmax_rows(scores, mask)
                        : nn::softmax_rows(scores);
      out.attention.push_back(attn.value());
      heads.push_back(nn::matmul(attn, vh));
    }
    Var<S> merged = wo_.forward(nn::concat_cols(heads));
    out.features = norm_.forward(nn::add(x, merged));
    return out;
  }

 private:
  Eigen::Index dim_ = 128;
  Eigen::Index heads_ = 8;
  Eigen::Index head_dim_ = 16;
  nn::Linear<S> wq_, wk_, wv_, wo_;
  nn::LayerNormLayer<S> norm_;
};

// Stacks per-frame candidate features into the K^2 joint ordering (see
// masks.hpp). selected[frame][agent] must hold one 1 x d feature row.
template <class S>
nn::Var<S> build_joint_stack(
    const std::vector<std::vector<nn::Var<S>>>& selected) {
  const int k = static_cast<int>(selected.size());
  if (k < 1) throw Error("domain", "joint stack: need K >= 1");
  std::vector<nn::Var<S>> rows;
  rows.reserve(static_cast<std::size_t>(k) * k);
  for (int frame = 0; frame < k; ++frame) {
    if (static_cast<int>(selected[frame].size()) != k) {
      throw Error("domain", "joint stack: ragged selection");
    }
    for (int slot = 0; slot < k; ++slot) {
      rows.push_back(selected[frame][(frame + slot) % k]);
    }
  }
  return nn::concat_rows(rows);
}

}  // namespace starnet
