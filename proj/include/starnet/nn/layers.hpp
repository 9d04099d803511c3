#pragma once

#include <string>

#include "starnet/nn/ops.hpp"
#include "starnet/nn/param_store.hpp"

namespace starnet {
namespace nn {

template <class S>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<S>& store, const std::string& prefix, Eigen::Index in,
         Eigen::Index out)
      : weight_(store.create(prefix + ".weight", in, out, Init::XavierUniform)),
        bias_(store.create(prefix + ".bias", 1, out, Init::Zero)) {}

  Var<S> forward(const Var<S>& x) const {
    return add_row_broadcast(matmul(x, weight_), bias_);
  }

  const Var<S>& weight() const { return weight_; }
  const Var<S>& bias() const { return bias_; }

 private:
  Var<S> weight_;
  Var<S> bias_;
};

template <class S>
class Conv1dLayer {
 public:
  Conv1dLayer() = default;
  Conv1dLayer(ParamStore<S>& store, const std::string& prefix, Eigen::Index c_in,
              Eigen::Index c_out, Eigen::Index kernel, Eigen::Index stride)
      : kernel_(kernel),
        stride_(stride),
        weight_(store.create(prefix + ".weight", kernel * c_in, c_out,
                             Init::XavierUniform)),
        bias_(store.create(prefix + ".bias", 1, c_out, Init::Zero)) {}

  Var<S> forward(const Var<S>& x, Eigen::Index blocks) const {
    return conv1d_blocked(x, weight_, bias_, blocks, kernel_, stride_);
  }

  Eigen::Index out_len(Eigen::Index t_in) const {
    return (t_in + 2 * (kernel_ / 2) - kernel_) / stride_ + 1;
  }

 private:
  Eigen::Index kernel_ = 3;
  Eigen::Index stride_ = 1;
  Var<S> weight_;
  Var<S> bias_;
};

template <class S>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(ParamStore<S>& store, const std::string& prefix, Eigen::Index dim)
      : gamma_(store.create(prefix + ".gamma", 1, dim, Init::One)),
        beta_(store.create(prefix + ".beta", 1, dim, Init::Zero)),
        running_mean_(&store.create_buffer(prefix + ".running_mean", 1, dim, S(0))),
        running_var_(&store.create_buffer(prefix + ".running_var", 1, dim, S(1))) {}

  Var<S> forward(const Var<S>& x, bool training) const {
    return batch_norm(x, gamma_, beta_, *running_mean_, *running_var_, training,
                      momentum_);
  }

 private:
  Var<S> gamma_;
  Var<S> beta_;
  Mat<S>* running_mean_ = nullptr;
  Mat<S>* running_var_ = nullptr;
  S momentum_ = S(0.1);
};

template <class S>
class LayerNormLayer {
 public:
  LayerNormLayer() = default;
  LayerNormLayer(ParamStore<S>& store, const std::string& prefix, Eigen::Index dim)
      : gamma_(store.create(prefix + ".gamma", 1, dim, Init::One)),
        beta_(store.create(prefix + ".beta", 1, dim, Init::Zero)) {}

  Var<S> forward(const Var<S>& x) const { return layer_norm_rows(x, gamma_, beta_); }

 private:
  Var<S> gamma_;
  Var<S> beta_;
};

// Gated recurrent unit cell:
//   r = sigmoid(x Wir + bir + h Whr + bhr)
//   z = sigmoid(x Wiz + biz + h Whz + bhz)
//   n = tanh(x Win + bin + r . (h Whn + bhn))
//   h' = (1 - z) . n + z . h
// Input weights are Xavier, recurrent weights orthogonal.
template <class S>
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParamStore<S>& store, const std::string& prefix, Eigen::Index in,
          Eigen::Index hidden)
      : hidden_(hidden),
        w_ir_(store.create(prefix + ".w_ir", in, hidden, Init::XavierUniform)),
        w_iz_(store.create(prefix + ".w_iz", in, hidden, Init::XavierUniform)),
        w_in_(store.create(prefix + ".w_in", in, hidden, Init::XavierUniform)),
        w_hr_(store.create(prefix + ".w_hr", hidden, hidden, Init::Orthogonal)),
        w_hz_(store.create(prefix + ".w_hz", hidden, hidden, Init::Orthogonal)),
        w_hn_(store.create(prefix + ".w_hn", hidden, hidden, Init::Orthogonal)),
        b_ir_(store.create(prefix + ".b_ir", 1, hidden, Init::Zero)),
        b_iz_(store.create(prefix + ".b_iz", 1, hidden, Init::Zero)),
        b_in_(store.create(prefix + ".b_in", 1, hidden, Init::Zero)),
        b_hr_(store.create(prefix + ".b_hr", 1, hidden, Init::Zero)),
        b_hz_(store.create(prefix + ".b_hz", 1, hidden, Init::Zero)),
        b_hn_(store.create(prefix + ".b_hn", 1, hidden, Init::Zero)) {}

  Var<S> forward(const Var<S>& x, const Var<S>& h) const {
    Var<S> r = sigmoid(add(add_row_broadcast(matmul(x, w_ir_), b_ir_),
                           add_row_broadcast(matmul(h, w_hr_), b_hr_)));
    Var<S> z = sigmoid(add(add_row_broadcast(matmul(x, w_iz_), b_iz_),
                           add_row_broadcast(matmul(h, w_hz_), b_hz_)));
    Var<S> n = tanh_op(add(add_row_broadcast(matmul(x, w_in_), b_in_),
                           cmul(r, add_row_broadcast(matmul(h, w_hn_), b_hn_))));
    // h' = n + z . (h - n)
    return add(n, cmul(z, sub(h, n)));
  }

  Eigen::Index hidden() const { return hidden_; }

 private:
  Eigen::Index hidden_ = 0;
  Var<S> w_ir_, w_iz_, w_in_, w_hr_, w_hz_, w_hn_;
  Var<S> b_ir_, b_iz_, b_in_, b_hr_, b_hz_, b_hn_;
};

}  // namespace nn
}  // namespace starnet
