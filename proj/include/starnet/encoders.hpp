#pragma once

#include <string>
#include <vector>

#include "starnet/map_vectorizer.hpp"
#include "starnet/nn/layers.hpp"
#include "starnet/scene.hpp"

namespace starnet {

// Track encoder: three strided 1D conv stages (32, 64, 128 channels, kernel 3,
// stride 2, batch norm + ReLU), lateral 1x1 projections summed at the finest
// stage resolution, a final conv, and a temporal max-pool down to one vector.
// Positions and actions use the same architecture with separate weights and
// output widths 128 / 64. The validity row enters as a third input channel.
template <class S>
class TrackEncoder {
 public:
  TrackEncoder() = default;
  TrackEncoder(nn::ParamStore<S>& store, const std::string& prefix,
               Eigen::Index out_dim)
      : out_dim_(out_dim),
        conv1_(store, prefix + ".conv1", 3, 32, 3, 2),
        conv2_(store, prefix + ".conv2", 32, 64, 3, 2),
        conv3_(store, prefix + ".conv3", 64, 128, 3, 2),
        bn1_(store, prefix + ".bn1", 32),
        bn2_(store, prefix + ".bn2", 64),
        bn3_(store, prefix + ".bn3", 128),
        lat1_(store, prefix + ".lat1", 32, out_dim),
        lat2_(store, prefix + ".lat2", 64, out_dim),
        lat3_(store, prefix + ".lat3", 128, out_dim),
        fuse_conv_(store, prefix + ".fuse", out_dim, out_dim, 3, 1),
        fuse_bn_(store, prefix + ".fuse_bn", out_dim) {}

  // tracks: `blocks` stacked T x 3 row blocks (columns x, y, valid).
  // Returns one out_dim feature row per block.
  nn::Var<S> forward(const nn::Var<S>& tracks, Eigen::Index blocks,
                     bool training) const {
    const Eigen::Index t_in = tracks.rows() / blocks;
    if (tracks.cols() != 3 || tracks.rows() % blocks != 0) {
      throw Error("shape", "track encoder expects blocks of T x 3 rows");
    }
    if (t_in < 8) {
      throw Error("shape", "track encoder needs T >= 8");
    }
    using nn::Var;
    Var<S> s1 = nn::relu(bn1_.forward(conv1_.forward(tracks, blocks), training));
    Var<S> s2 = nn::relu(bn2_.forward(conv2_.forward(s1, blocks), training));
    Var<S> s3 = nn::relu(bn3_.forward(conv3_.forward(s2, blocks), training));

    const Eigen::Index t1 = conv1_.out_len(t_in);
    const Eigen::Index t2 = conv2_.out_len(t1);
    const Eigen::Index t3 = conv3_.out_len(t2);

    Var<S> l1 = lat1_.forward(s1);
    Var<S> l2 = nn::upsample_rows_blocked(lat2_.forward(s2), blocks,
                                          (t1 + t2 - 1) / t2, t1);
    Var<S> l3 = nn::upsample_rows_blocked(lat3_.forward(s3), blocks,
                                          (t1 + t3 - 1) / t3, t1);
    Var<S> fused = nn::add(nn::add(l1, l2), l3);
    Var<S> head =
        nn::relu(fuse_bn_.forward(fuse_conv_.forward(fused, blocks), training));

    std::vector<int> block_of(static_cast<std::size_t>(blocks * t1));
    for (Eigen::Index b = 0; b < blocks; ++b) {
      for (Eigen::Index t = 0; t < t1; ++t) {
        block_of[static_cast<std::size_t>(b * t1 + t)] = static_cast<int>(b);
      }
    }
    return nn::segment_row_max(head, block_of, static_cast<int>(blocks));
  }

  Eigen::Index out_dim() const { return out_dim_; }

  // Packs a position track into the T x 3 input layout.
  static nn::Mat<S> pack_position_track(const PositionTrack& track) {
    nn::Mat<S> m(track.length(), 3);
    for (int t = 0; t < track.length(); ++t) {
      m(t, 0) = static_cast<S>(track.points[t].x);
      m(t, 1) = static_cast<S>(track.points[t].y);
      m(t, 2) = static_cast<S>(track.valid[t]);
    }
    return m;
  }

  static nn::Mat<S> pack_action_track(const ActionSequence& actions) {
    nn::Mat<S> m(actions.length(), 3);
    for (int t = 0; t < actions.length(); ++t) {
      m(t, 0) = static_cast<S>(actions.accel[t]);
      m(t, 1) = static_cast<S>(actions.steer[t]);
      m(t, 2) = static_cast<S>(actions.valid[t]);
    }
    return m;
  }

 private:
  Eigen::Index out_dim_ = 128;
  nn::Conv1dLayer<S> conv1_, conv2_, conv3_;
  nn::BatchNormLayer<S> bn1_, bn2_, bn3_;
  nn::Linear<S> lat1_, lat2_, lat3_;
  nn::Conv1dLayer<S> fuse_conv_;
  nn::BatchNormLayer<S> fuse_bn_;
};

// Linear embedding of the 6-d map vector [start, end, one-hot type] into the
// track feature dimensionality.
template <class S>
class MapVectorEmbedder {
 public:
  MapVectorEmbedder() = default;
  MapVectorEmbedder(nn::ParamStore<S>& store, const std::string& prefix,
                    Eigen::Index out_dim)
      : linear_(store, prefix + ".embed", 6, out_dim) {}

  nn::Var<S> forward(const nn::Var<S>& vectors) const {
    if (vectors.cols() != 6) {
      throw Error("shape", "map vector embedding expects 6 columns");
    }
    return linear_.forward(vectors);
  }

  static nn::Mat<S> pack(const std::vector<const MapVector*>& vectors) {
    nn::Mat<S> m(static_cast<Eigen::Index>(vectors.size()), 6);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      const MapVector& v = *vectors[i];
      if (!((v.type_one_hot[0] == 1.0) ^ (v.type_one_hot[1] == 1.0))) {
        throw Error("domain", "map vector type must be one-hot");
      }
      const auto r = static_cast<Eigen::Index>(i);
      m(r, 0) = static_cast<S>(v.start.x);
      m(r, 1) = static_cast<S>(v.start.y);
      m(r, 2) = static_cast<S>(v.end.x);
      m(r, 3) = static_cast<S>(v.end.y);
      m(r, 4) = static_cast<S>(v.type_one_hot[0]);
      m(r, 5) = static_cast<S>(v.type_one_hot[1]);
    }
    return m;
  }

 private:
  nn::Linear<S> linear_;
};

}  // namespace starnet
