#pragma once

#include <string>
#include <vector>

#include "starnet/nn/layers.hpp"

namespace starnet {

// Star graphs batched as one block-diagonal graph. Graph g occupies a
// contiguous row block [offset_g, offset_g + L_g + 1): the center node first,
// then its L_g leaves. Edges are leaf -> center plus a self-loop on every
// node, so no edge ever crosses a block boundary.
struct BatchedStarGraphs {
  std::vector<int> leaf_counts;           // L_g per graph
  std::vector<Eigen::Index> src, dst;     // directed edges, global node rows
  std::vector<int> node_graph;            // node row -> graph index
  Eigen::Index total_nodes = 0;

  static BatchedStarGraphs build(const std::vector<int>& leaf_counts) {
    BatchedStarGraphs g;
    g.leaf_counts = leaf_counts;
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < leaf_counts.size(); ++i) {
      const int leaves = leaf_counts[i];
      if (leaves < 1) {
        throw Error("domain", "star graph needs at least one leaf");
      }
      for (int n = 0; n <= leaves; ++n) {
        g.src.push_back(at + n);  // self-loop
        g.dst.push_back(at + n);
        g.node_graph.push_back(static_cast<int>(i));
      }
      for (int l = 1; l <= leaves; ++l) {
        g.src.push_back(at + l);  // leaf -> center
        g.dst.push_back(at);
      }
      at += leaves + 1;
    }
    g.total_nodes = at;
    return g;
  }

  Eigen::Index num_graphs() const {
    return static_cast<Eigen::Index>(leaf_counts.size());
  }
  Eigen::Index num_edges() const { return static_cast<Eigen::Index>(src.size()); }
};

// Two-layer graph attention network over star graphs, 8 heads of width
// dim/heads concatenated back to dim. Attention scores use the additive
// single-layer form LeakyReLU(a_src . W x_u + a_dst . W x_v) with slope 0.2,
// normalized per in-neighborhood. ELU between the layers; no normalization
// layers inside, which keeps block-diagonal batching exact.
template <class S>
class StarGat {
 public:
  StarGat() = default;
  StarGat(nn::ParamStore<S>& store, const std::string& prefix, Eigen::Index dim,
          Eigen::Index heads)
      : dim_(dim), heads_(heads), head_dim_(dim / heads) {
    if (dim % heads != 0) {
      throw Error("domain", "gat: dim must be divisible by heads");
    }
    for (int layer = 0; layer < 2; ++layer) {
      const std::string lp = prefix + ".layer" + std::to_string(layer);
      w_[layer] = store.create(lp + ".weight", dim, dim, nn::Init::XavierUniform);
      a_src_[layer] = store.create(lp + ".a_src", dim, 1, nn::Init::XavierUniform);
      a_dst_[layer] = store.create(lp + ".a_dst", dim, 1, nn::Init::XavierUniform);
    }
  }

  // nodes: total_nodes x dim. Returns updated node features.
  nn::Var<S> forward(const nn::Var<S>& nodes, const BatchedStarGraphs& graphs) const {
    nn::Var<S> h = layer_forward(nodes, graphs, 0);
    h = nn::elu(h);
    return layer_forward(h, graphs, 1);
  }

  // Attention weights of one layer for inspection in tests: per head, one
  // weight per edge (aligned with graphs.src/dst).
  std::vector<nn::Mat<S>> attention_weights(const nn::Var<S>& nodes,
                                            const BatchedStarGraphs& graphs,
                                            int layer) const {
    std::vector<nn::Mat<S>> out;
    layer_forward(nodes, graphs, layer, &out);
    return out;
  }

  // Polyline embedding q: elementwise max over each graph's nodes.
  nn::Var<S> pool(const nn::Var<S>& nodes, const BatchedStarGraphs& graphs) const {
    return nn::segment_row_max(nodes, graphs.node_graph,
                               static_cast<int>(graphs.num_graphs()));
  }

 private:
  nn::Var<S> layer_forward(const nn::Var<S>& nodes, const BatchedStarGraphs& graphs,
                           int layer,
                           std::vector<nn::Mat<S>>* attn_out = nullptr) const {
    if (nodes.cols() != dim_) {
      throw Error("shape", "gat: node feature width mismatch");
    }
    if (static_cast<Eigen::Index>(graphs.node_graph.size()) != nodes.rows()) {
      throw Error("shape", "gat: node count mismatch");
    }
    using nn::Var;
    Var<S> transformed = nn::matmul(nodes, w_[layer]);
    Var<S> src_feat = nn::gather_rows(transformed, graphs.src);
    Var<S> dst_feat = nn::gather_rows(transformed, graphs.dst);

    std::vector<int> dst_segment(graphs.src.size());
    for (std::size_t e = 0; e < graphs.dst.size(); ++e) {
      dst_segment[e] = static_cast<int>(graphs.dst[e]);
    }

    std::vector<Var<S>> head_outputs;
    head_outputs.reserve(heads_);
    for (Eigen::Index hd = 0; hd < heads_; ++hd) {
      Var<S> src_h = nn::slice_cols(src_feat, hd * head_dim_, head_dim_);
      Var<S> dst_h = nn::slice_cols(dst_feat, hd * head_dim_, head_dim_);
      Var<S> a_src_h = nn::slice_rows(a_src_[layer], hd * head_dim_, head_dim_);
      Var<S> a_dst_h = nn::slice_rows(a_dst_[layer], hd * head_dim_, head_dim_);
      Var<S> scores = nn::leaky_relu(
          nn::add(nn::matmul(src_h, a_src_h), nn::matmul(dst_h, a_dst_h)), S(0.2));
      Var<S> alpha = nn::segment_softmax(scores, dst_segment,
                                         static_cast<int>(nodes.rows()));
      if (attn_out != nullptr) attn_out->push_back(alpha.value());
      head_outputs.push_back(nn::segment_weighted_sum(
          src_h, alpha, dst_segment, static_cast<int>(nodes.rows())));
    }
    return nn::concat_cols(head_outputs);
  }

  Eigen::Index dim_ = 128;
  Eigen::Index heads_ = 8;
  Eigen::Index head_dim_ = 16;
  nn::Var<S> w_[2], a_src_[2], a_dst_[2];
};

}  // namespace starnet
