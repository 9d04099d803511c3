#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "starnet/nn/rng.hpp"
#include "starnet/nn/tensor.hpp"

namespace starnet {
namespace nn {

namespace detail {

// Sum that depends only on the multiset of values, not their order: sorting
// first makes reductions bit-exact under permutations of the inputs.
template <class S>
S order_free_sum(std::vector<S>& values) {
  std::sort(values.begin(), values.end());
  S acc = S(0);
  for (S v : values) acc += v;
  return acc;
}

inline void check(bool ok, const char* what) {
  if (!ok) throw Error("shape", what);
}

}  // namespace detail

template <class S>
Var<S> constant(Mat<S> value) {
  return Var<S>::leaf(std::move(value), false);
}

// ---------------------------------------------------------------------------
// Elementwise and affine ops

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return Var<S>::make(a.value() + b.value(), {a, b}, [a, b](Node<S>& n) {
    if (a.requires_grad()) a.node()->grad += n.grad;
    if (b.requires_grad()) b.node()->grad += n.grad;
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return Var<S>::make(a.value() - b.value(), {a, b}, [a, b](Node<S>& n) {
    if (a.requires_grad()) a.node()->grad += n.grad;
    if (b.requires_grad()) b.node()->grad -= n.grad;
  });
}

template <class S>
Var<S> cmul(const Var<S>& a, const Var<S>& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "cmul: shape mismatch");
  return Var<S>::make(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Node<S>& n) {
    if (a.requires_grad()) a.node()->grad += n.grad.cwiseProduct(b.value());
    if (b.requires_grad()) b.node()->grad += n.grad.cwiseProduct(a.value());
  });
}

template <class S>
Var<S> scale(const Var<S>& a, S factor) {
  return Var<S>::make(a.value() * factor, {a}, [a, factor](Node<S>& n) {
    if (a.requires_grad()) a.node()->grad += n.grad * factor;
  });
}

// x + broadcast of a 1-row bias over all rows.
template <class S>
Var<S> add_row_broadcast(const Var<S>& x, const Var<S>& bias) {
  detail::check(bias.rows() == 1 && bias.cols() == x.cols(),
                "add_row_broadcast: bias must be 1 x cols");
  Mat<S> out = x.value();
  out.rowwise() += bias.value().row(0);
  return Var<S>::make(std::move(out), {x, bias}, [x, bias](Node<S>& n) {
    if (x.requires_grad()) x.node()->grad += n.grad;
    if (bias.requires_grad()) bias.node()->grad += n.grad.colwise().sum();
  });
}

// Elementwise product with a constant 1-row matrix broadcast over rows.
template <class S>
Var<S> mul_row_constant(const Var<S>& x, const Mat<S>& row) {
  detail::check(row.rows() == 1 && row.cols() == x.cols(),
                "mul_row_constant: row must be 1 x cols");
  Mat<S> out = x.value();
  out.array().rowwise() *= row.row(0).array();
  return Var<S>::make(std::move(out), {x}, [x, row](Node<S>& n) {
    if (x.requires_grad()) {
      Mat<S> g = n.grad;
      g.array().rowwise() *= row.row(0).array();
      x.node()->grad += g;
    }
  });
}

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  detail::check(a.cols() == b.rows(), "matmul: inner dims differ");
  return Var<S>::make(a.value() * b.value(), {a, b}, [a, b](Node<S>& n) {
    if (a.requires_grad()) a.node()->grad += n.grad * b.value().transpose();
    if (b.requires_grad()) b.node()->grad += a.value().transpose() * n.grad;
  });
}

// a @ b^T without materializing the transpose in the graph.
template <class S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b) {
  detail::check(a.cols() == b.cols(), "matmul_nt: inner dims differ");
  return Var<S>::make(a.value() * b.value().transpose(), {a, b}, [a, b](Node<S>& n) {
    if (a.requires_grad()) a.node()->grad += n.grad * b.value();
    if (b.requires_grad()) b.node()->grad += n.grad.transpose() * a.value();
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

template <class S>
Var<S> relu(const Var<S>& x) {
  return Var<S>::make(x.value().cwiseMax(S(0)), {x}, [x](Node<S>& n) {
    if (!x.requires_grad()) return;
    x.node()->grad.array() +=
        n.grad.array() * (x.value().array() > S(0)).template cast<S>();
  });
}

template <class S>
Var<S> leaky_relu(const Var<S>& x, S slope) {
  Mat<S> out = x.value().unaryExpr([slope](S v) { return v > S(0) ? v : slope * v; });
  return Var<S>::make(std::move(out), {x}, [x, slope](Node<S>& n) {
    if (!x.requires_grad()) return;
    x.node()->grad.array() +=
        n.grad.array() *
        x.value().unaryExpr([slope](S v) { return v > S(0) ? S(1) : slope; }).array();
  });
}

template <class S>
Var<S> elu(const Var<S>& x) {
  Mat<S> out = x.value().unaryExpr([](S v) { return v > S(0) ? v : std::expm1(v); });
  const Mat<S> y = out;
  return Var<S>::make(std::move(out), {x}, [x, y](Node<S>& n) {
    if (!x.requires_grad()) return;
    Mat<S> d = x.value().binaryExpr(y, [](S v, S yy) { return v > S(0) ? S(1) : yy + S(1); });
    x.node()->grad.array() += n.grad.array() * d.array();
  });
}

template <class S>
Var<S> tanh_op(const Var<S>& x) {
  Mat<S> out = x.value().array().tanh();
  const Mat<S> y = out;
  return Var<S>::make(std::move(out), {x}, [x, y](Node<S>& n) {
    if (!x.requires_grad()) return;
    x.node()->grad.array() += n.grad.array() * (S(1) - y.array().square());
  });
}

template <class S>
Var<S> sigmoid(const Var<S>& x) {
  Mat<S> out = x.value().unaryExpr([](S v) {
    return v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                     : std::exp(v) / (S(1) + std::exp(v));
  });
  const Mat<S> y = out;
  return Var<S>::make(std::move(out), {x}, [x, y](Node<S>& n) {
    if (!x.requires_grad()) return;
    x.node()->grad.array() += n.grad.array() * (y.array() * (S(1) - y.array()));
  });
}

// Inverted-scaling dropout; p = 0 is the identity. The mask is drawn from the
// caller's RNG so runs stay reproducible.
template <class S>
Var<S> dropout(const Var<S>& x, double p, Rng* rng) {
  if (p <= 0.0) return x;
  detail::check(p < 1.0 && rng != nullptr, "dropout: need p in [0,1) and an RNG");
  Mat<S> mask(x.rows(), x.cols());
  const S keep_scale = S(1.0 / (1.0 - p));
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      mask(r, c) = rng->uniform() < p ? S(0) : keep_scale;
    }
  }
  return Var<S>::make(x.value().cwiseProduct(mask), {x}, [x, mask](Node<S>& n) {
    if (x.requires_grad()) x.node()->grad += n.grad.cwiseProduct(mask);
  });
}

// ---------------------------------------------------------------------------
// Shape ops

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  detail::check(!parts.empty(), "concat_rows: empty input");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    detail::check(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat<S> out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return Var<S>::make(std::move(out), parts, [parts](Node<S>& n) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) {
        p.node()->grad += n.grad.middleRows(at, p.rows());
      }
      at += p.rows();
    }
  });
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  detail::check(!parts.empty(), "concat_cols: empty input");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const auto& p : parts) {
    detail::check(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat<S> out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return Var<S>::make(std::move(out), parts, [parts](Node<S>& n) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) {
        p.node()->grad += n.grad.middleCols(at, p.cols());
      }
      at += p.cols();
    }
  });
}

template <class S>
Var<S> slice_rows(const Var<S>& x, Eigen::Index start, Eigen::Index count) {
  detail::check(start >= 0 && count >= 0 && start + count <= x.rows(),
                "slice_rows: out of range");
  return Var<S>::make(Mat<S>(x.value().middleRows(start, count)), {x},
                      [x, start, count](Node<S>& n) {
                        if (x.requires_grad()) {
                          x.node()->grad.middleRows(start, count) += n.grad;
                        }
                      });
}

template <class S>
Var<S> slice_cols(const Var<S>& x, Eigen::Index start, Eigen::Index count) {
  detail::check(start >= 0 && count >= 0 && start + count <= x.cols(),
                "slice_cols: out of range");
  return Var<S>::make(Mat<S>(x.value().middleCols(start, count)), {x},
                      [x, start, count](Node<S>& n) {
                        if (x.requires_grad()) {
                          x.node()->grad.middleCols(start, count) += n.grad;
                        }
                      });
}

template <class S>
Var<S> gather_rows(const Var<S>& x, std::vector<Eigen::Index> idx) {
  Mat<S> out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    detail::check(idx[i] >= 0 && idx[i] < x.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.value().row(idx[i]);
  }
  return Var<S>::make(std::move(out), {x}, [x, idx = std::move(idx)](Node<S>& n) {
    if (!x.requires_grad()) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      x.node()->grad.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

// Same element order, new row-major shape.
template <class S>
Var<S> reshape(const Var<S>& x, Eigen::Index rows, Eigen::Index cols) {
  detail::check(rows * cols == x.rows() * x.cols(), "reshape: element count differs");
  Mat<S> out(rows, cols);
  Eigen::Map<Mat<S>>(out.data(), rows, cols) =
      Eigen::Map<const Mat<S>>(x.value().data(), rows, cols);
  return Var<S>::make(std::move(out), {x}, [x, rows, cols](Node<S>& n) {
    if (!x.requires_grad()) return;
    x.node()->grad +=
        Eigen::Map<const Mat<S>>(n.grad.data(), x.rows(), x.cols());
  });
}

// Nearest-neighbour upsampling along rows within each of `blocks` equal-size
// row blocks, cropped to out_rows per block.
template <class S>
Var<S> upsample_rows_blocked(const Var<S>& x, Eigen::Index blocks,
                             Eigen::Index factor, Eigen::Index out_rows) {
  detail::check(blocks > 0 && x.rows() % blocks == 0, "upsample: bad block count");
  const Eigen::Index in_rows = x.rows() / blocks;
  detail::check(factor >= 1 && out_rows <= in_rows * factor, "upsample: bad factor");
  Mat<S> out(blocks * out_rows, x.cols());
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (Eigen::Index r = 0; r < out_rows; ++r) {
      out.row(b * out_rows + r) = x.value().row(b * in_rows + r / factor);
    }
  }
  return Var<S>::make(std::move(out), {x},
                      [x, blocks, factor, out_rows, in_rows](Node<S>& n) {
                        if (!x.requires_grad()) return;
                        for (Eigen::Index b = 0; b < blocks; ++b) {
                          for (Eigen::Index r = 0; r < out_rows; ++r) {
                            x.node()->grad.row(b * in_rows + r / factor) +=
                                n.grad.row(b * out_rows + r);
                          }
                        }
                      });
}

// ---------------------------------------------------------------------------
// Reductions

template <class S>
Var<S> sum_all(const Var<S>& x) {
  Mat<S> out(1, 1);
  out(0, 0) = x.value().sum();
  return Var<S>::make(std::move(out), {x}, [x](Node<S>& n) {
    if (x.requires_grad()) x.node()->grad.array() += n.grad(0, 0);
  });
}

template <class S>
Var<S> mean_all(const Var<S>& x) {
  const S inv = S(1) / static_cast<S>(x.rows() * x.cols());
  Mat<S> out(1, 1);
  out(0, 0) = x.value().sum() * inv;
  return Var<S>::make(std::move(out), {x}, [x, inv](Node<S>& n) {
    if (x.requires_grad()) x.node()->grad.array() += n.grad(0, 0) * inv;
  });
}

// Column-wise max over row segments: rows with segment id g reduce to output
// row g. Gradient flows to the first occurrence of each maximum.
template <class S>
Var<S> segment_row_max(const Var<S>& x, std::vector<int> segments, int n_segments) {
  detail::check(static_cast<Eigen::Index>(segments.size()) == x.rows(),
                "segment_row_max: segment count differs from rows");
  Mat<S> out(n_segments, x.cols());
  std::vector<std::vector<Eigen::Index>> argmax(
      n_segments, std::vector<Eigen::Index>(x.cols(), -1));
  std::vector<bool> touched(n_segments, false);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int g = segments[r];
    detail::check(g >= 0 && g < n_segments, "segment_row_max: bad segment id");
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (!touched[g] || x.value()(r, c) > out(g, c)) {
        out(g, c) = x.value()(r, c);
        argmax[g][c] = r;
      }
    }
    touched[g] = true;
  }
  for (int g = 0; g < n_segments; ++g) {
    detail::check(touched[g], "segment_row_max: empty segment");
  }
  return Var<S>::make(std::move(out), {x},
                      [x, argmax = std::move(argmax)](Node<S>& n) {
                        if (!x.requires_grad()) return;
                        for (std::size_t g = 0; g < argmax.size(); ++g) {
                          for (Eigen::Index c = 0;
                               c < static_cast<Eigen::Index>(argmax[g].size()); ++c) {
                            x.node()->grad(argmax[g][c], c) +=
                                n.grad(static_cast<Eigen::Index>(g), c);
                          }
                        }
                      });
}

template <class S>
Var<S> row_max(const Var<S>& x) {
  return segment_row_max(x, std::vector<int>(x.rows(), 0), 1);
}

// ---------------------------------------------------------------------------
// Softmax family

template <class S>
Var<S> softmax_rows(const Var<S>& x) {
  Mat<S> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S m = x.value().row(r).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (x.value().row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  const Mat<S> y = out;
  return Var<S>::make(std::move(out), {x}, [x, y](Node<S>& n) {
    if (!x.requires_grad()) return;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const S dot = n.grad.row(r).dot(y.row(r));
      x.node()->grad.row(r).array() +=
          y.row(r).array() * (n.grad.row(r).array() - dot);
    }
  });
}

// Row-wise softmax restricted to positions where mask != 0. Disallowed
// positions come out exactly zero. Rows whose mask is entirely zero are
// rejected. Allowed entries are visited in ascending column order, so a
// block-diagonal batched call reproduces per-block calls bit-exactly.
template <class S>
Var<S> masked_softmax_rows(const Var<S>& x, const MaskMat& mask) {
  detail::check(mask.rows() == x.rows() && mask.cols() == x.cols(),
                "masked_softmax_rows: mask shape mismatch");
  Mat<S> out = Mat<S>::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    S m = std::numeric_limits<S>::lowest();
    bool any = false;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) {
        m = std::max(m, x.value()(r, c));
        any = true;
      }
    }
    detail::check(any, "masked_softmax_rows: row with empty mask");
    S denom = S(0);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) {
        out(r, c) = std::exp(x.value()(r, c) - m);
        denom += out(r, c);
      }
    }
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) out(r, c) /= denom;
    }
  }
  const Mat<S> y = out;
  return Var<S>::make(std::move(out), {x}, [x, y, mask](Node<S>& n) {
    if (!x.requires_grad()) return;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      S dot = S(0);
      for (Eigen::Index c = 0; c < y.cols(); ++c) {
        if (mask(r, c)) dot += n.grad(r, c) * y(r, c);
      }
      for (Eigen::Index c = 0; c < y.cols(); ++c) {
        if (mask(r, c)) {
          x.node()->grad(r, c) += y(r, c) * (n.grad(r, c) - dot);
        }
      }
    }
  });
}

// Softmax over row groups of a single-column score matrix. Sums are
// order-free so permuting the rows of a group permutes the outputs bit-exactly.
template <class S>
Var<S> segment_softmax(const Var<S>& scores, std::vector<int> segments,
                       int n_segments) {
  detail::check(scores.cols() == 1, "segment_softmax: expected one column");
  detail::check(static_cast<Eigen::Index>(segments.size()) == scores.rows(),
                "segment_softmax: segment count differs from rows");
  std::vector<S> seg_max(n_segments, std::numeric_limits<S>::lowest());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    seg_max[segments[r]] = std::max(seg_max[segments[r]], scores.value()(r, 0));
  }
  std::vector<std::vector<S>> exps(n_segments);
  Mat<S> out(scores.rows(), 1);
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    out(r, 0) = std::exp(scores.value()(r, 0) - seg_max[segments[r]]);
    exps[segments[r]].push_back(out(r, 0));
  }
  std::vector<S> denom(n_segments, S(0));
  for (int g = 0; g < n_segments; ++g) {
    detail::check(!exps[g].empty(), "segment_softmax: empty segment");
    denom[g] = detail::order_free_sum(exps[g]);
  }
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    out(r, 0) /= denom[segments[r]];
  }
  const Mat<S> y = out;
  return Var<S>::make(
      std::move(out), {scores},
      [scores, y, segments = std::move(segments), n_segments](Node<S>& n) {
        if (!scores.requires_grad()) return;
        std::vector<S> dot(n_segments, S(0));
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          dot[segments[r]] += n.grad(r, 0) * y(r, 0);
        }
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          scores.node()->grad(r, 0) += y(r, 0) * (n.grad(r, 0) - dot[segments[r]]);
        }
      });
}

// out[g] = sum over rows r with segment g of weights[r] * values.row(r),
// accumulated order-free per output cell.
template <class S>
Var<S> segment_weighted_sum(const Var<S>& values, const Var<S>& weights,
                            std::vector<int> segments, int n_segments) {
  detail::check(weights.cols() == 1 && weights.rows() == values.rows(),
                "segment_weighted_sum: weights must be rows x 1");
  detail::check(static_cast<Eigen::Index>(segments.size()) == values.rows(),
                "segment_weighted_sum: segment count differs from rows");
  Mat<S> out = Mat<S>::Zero(n_segments, values.cols());
  std::vector<std::vector<Eigen::Index>> members(n_segments);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    members[segments[r]].push_back(r);
  }
  std::vector<S> terms;
  for (int g = 0; g < n_segments; ++g) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      terms.clear();
      for (Eigen::Index r : members[g]) {
        terms.push_back(weights.value()(r, 0) * values.value()(r, c));
      }
      out(g, c) = detail::order_free_sum(terms);
    }
  }
  return Var<S>::make(
      std::move(out), {values, weights},
      [values, weights, segments = std::move(segments)](Node<S>& n) {
        for (Eigen::Index r = 0; r < values.rows(); ++r) {
          const int g = segments[r];
          if (values.requires_grad()) {
            values.node()->grad.row(r) += weights.value()(r, 0) * n.grad.row(g);
          }
          if (weights.requires_grad()) {
            weights.node()->grad(r, 0) += n.grad.row(g).dot(values.value().row(r));
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization

template <class S>
Var<S> layer_norm_rows(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                       S eps = S(1e-5)) {
  detail::check(gamma.rows() == 1 && gamma.cols() == x.cols() &&
                    beta.rows() == 1 && beta.cols() == x.cols(),
                "layer_norm_rows: affine params must be 1 x cols");
  const Eigen::Index d = x.cols();
  Mat<S> xhat(x.rows(), d);
  Mat<S> inv_std(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S mean = x.value().row(r).mean();
    const S var = (x.value().row(r).array() - mean).square().sum() / S(d);
    inv_std(r, 0) = S(1) / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mean) * inv_std(r, 0);
  }
  Mat<S> out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return Var<S>::make(std::move(out), {x, gamma, beta},
                      [x, gamma, beta, xhat, inv_std, d](Node<S>& n) {
    if (beta.requires_grad()) beta.node()->grad += n.grad.colwise().sum();
    if (gamma.requires_grad()) {
      gamma.node()->grad += (n.grad.array() * xhat.array()).colwise().sum().matrix();
    }
    if (x.requires_grad()) {
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Eigen::Array<S, 1, Eigen::Dynamic> gy =
            n.grad.row(r).array() * gamma.value().row(0).array();
        const S mean_gy = gy.sum() / S(d);
        const S mean_gy_xhat = (gy * xhat.row(r).array()).sum() / S(d);
        x.node()->grad.row(r).array() +=
            inv_std(r, 0) * (gy - mean_gy - xhat.row(r).array() * mean_gy_xhat);
      }
    }
  });
}

// Batch norm over rows (stats per column). Training mode uses batch stats and
// updates the running buffers in place; eval mode applies the running stats.
template <class S>
Var<S> batch_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                  Mat<S>& running_mean, Mat<S>& running_var, bool training,
                  S momentum = S(0.1), S eps = S(1e-5)) {
  detail::check(gamma.cols() == x.cols() && beta.cols() == x.cols(),
                "batch_norm: affine params must be 1 x cols");
  const Eigen::Index b = x.rows();
  if (!training) {
    Mat<S> inv_std =
        (running_var.array() + eps).sqrt().inverse().matrix();
    Mat<S> out = x.value();
    out.rowwise() -= running_mean.row(0);
    out.array().rowwise() *= (inv_std.row(0).array() * gamma.value().row(0).array());
    out.rowwise() += beta.value().row(0);
    Mat<S> col_scale = inv_std;
    return Var<S>::make(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, col_scale, running = running_mean,
                         rv = running_var, eps](Node<S>& n) {
      if (beta.requires_grad()) beta.node()->grad += n.grad.colwise().sum();
      if (gamma.requires_grad()) {
        Mat<S> xhat = x.value();
        xhat.rowwise() -= running.row(0);
        xhat.array().rowwise() *= col_scale.row(0).array();
        gamma.node()->grad += (n.grad.array() * xhat.array()).colwise().sum().matrix();
      }
      if (x.requires_grad()) {
        Mat<S> g = n.grad;
        g.array().rowwise() *=
            (col_scale.row(0).array() * gamma.value().row(0).array());
        x.node()->grad += g;
      }
    });
  }

  detail::check(b >= 2, "batch_norm: training mode needs >= 2 rows");
  Mat<S> mean = x.value().colwise().mean();
  Mat<S> centered = x.value();
  centered.rowwise() -= mean.row(0);
  Mat<S> var = centered.array().square().colwise().mean().matrix();
  running_mean = (S(1) - momentum) * running_mean + momentum * mean;
  running_var = (S(1) - momentum) * running_var + momentum * var;

  Mat<S> inv_std = (var.array() + eps).sqrt().inverse().matrix();
  Mat<S> xhat = centered;
  xhat.array().rowwise() *= inv_std.row(0).array();
  Mat<S> out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return Var<S>::make(std::move(out), {x, gamma, beta},
                      [x, gamma, beta, xhat, inv_std, b](Node<S>& n) {
    if (beta.requires_grad()) beta.node()->grad += n.grad.colwise().sum();
    if (gamma.requires_grad()) {
      gamma.node()->grad += (n.grad.array() * xhat.array()).colwise().sum().matrix();
    }
    if (x.requires_grad()) {
      // d/dx of (x - mu) / sqrt(var + eps) through batch statistics.
      Mat<S> gy = n.grad;
      gy.array().rowwise() *= gamma.value().row(0).array();
      Mat<S> sum_gy = gy.colwise().sum();
      Mat<S> sum_gy_xhat = (gy.array() * xhat.array()).colwise().sum().matrix();
      Mat<S> term = gy * S(b);
      term.rowwise() -= sum_gy.row(0);
      term.array() -= xhat.array().rowwise() * sum_gy_xhat.row(0).array();
      term.array().rowwise() *= inv_std.row(0).array() / S(b);
      x.node()->grad += term;
    }
  });
}

// ---------------------------------------------------------------------------
// 1D convolution over equal-length row blocks.
//
// x is (blocks * t_in) x c_in with time running down the rows of each block;
// w is (kernel * c_in) x c_out, laid out kernel-major; the convolution uses
// zero padding of kernel/2 on both sides.
template <class S>
Var<S> conv1d_blocked(const Var<S>& x, const Var<S>& w, const Var<S>& bias,
                      Eigen::Index blocks, Eigen::Index kernel, Eigen::Index stride) {
  detail::check(blocks > 0 && x.rows() % blocks == 0, "conv1d: bad block count");
  const Eigen::Index t_in = x.rows() / blocks;
  const Eigen::Index c_in = x.cols();
  detail::check(w.rows() == kernel * c_in, "conv1d: weight rows != kernel*c_in");
  const Eigen::Index pad = kernel / 2;
  const Eigen::Index t_out = (t_in + 2 * pad - kernel) / stride + 1;
  detail::check(t_out >= 1, "conv1d: input too short");

  Mat<S> cols(blocks * t_out, kernel * c_in);
  cols.setZero();
  for (Eigen::Index bl = 0; bl < blocks; ++bl) {
    for (Eigen::Index o = 0; o < t_out; ++o) {
      for (Eigen::Index k = 0; k < kernel; ++k) {
        const Eigen::Index src = o * stride + k - pad;
        if (src >= 0 && src < t_in) {
          cols.block(bl * t_out + o, k * c_in, 1, c_in) =
              x.value().row(bl * t_in + src);
        }
      }
    }
  }
  Mat<S> out = cols * w.value();
  out.rowwise() += bias.value().row(0);
  return Var<S>::make(
      std::move(out), {x, w, bias},
      [x, w, bias, cols, blocks, kernel, stride, t_in, c_in, t_out, pad](Node<S>& n) {
        if (bias.requires_grad()) bias.node()->grad += n.grad.colwise().sum();
        if (w.requires_grad()) w.node()->grad += cols.transpose() * n.grad;
        if (x.requires_grad()) {
          Mat<S> dcols = n.grad * w.value().transpose();
          for (Eigen::Index bl = 0; bl < blocks; ++bl) {
            for (Eigen::Index o = 0; o < t_out; ++o) {
              for (Eigen::Index k = 0; k < kernel; ++k) {
                const Eigen::Index src = o * stride + k - pad;
                if (src >= 0 && src < t_in) {
                  x.node()->grad.row(bl * t_in + src) +=
                      dcols.block(bl * t_out + o, k * c_in, 1, c_in);
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Losses

// Elementwise Huber with delta = 1, averaged over all elements.
template <class S>
Var<S> smooth_l1(const Var<S>& pred, const Mat<S>& target) {
  detail::check(pred.rows() == target.rows() && pred.cols() == target.cols(),
                "smooth_l1: shape mismatch");
  const Mat<S> err = pred.value() - target;
  const S inv_n = S(1) / static_cast<S>(err.rows() * err.cols());
  S total = S(0);
  for (Eigen::Index r = 0; r < err.rows(); ++r) {
    for (Eigen::Index c = 0; c < err.cols(); ++c) {
      const S e = err(r, c);
      total += std::abs(e) < S(1) ? S(0.5) * e * e : std::abs(e) - S(0.5);
    }
  }
  Mat<S> out(1, 1);
  out(0, 0) = total * inv_n;
  return Var<S>::make(std::move(out), {pred}, [pred, err, inv_n](Node<S>& n) {
    if (!pred.requires_grad()) return;
    const S g = n.grad(0, 0) * inv_n;
    pred.node()->grad += err.unaryExpr([g](S e) {
      return g * (std::abs(e) < S(1) ? e : (e > S(0) ? S(1) : S(-1)));
    });
  });
}

template <class S>
Var<S> mse(const Var<S>& pred, const Mat<S>& target) {
  detail::check(pred.rows() == target.rows() && pred.cols() == target.cols(),
                "mse: shape mismatch");
  const Mat<S> err = pred.value() - target;
  const S inv_n = S(1) / static_cast<S>(err.rows() * err.cols());
  Mat<S> out(1, 1);
  out(0, 0) = err.array().square().sum() * inv_n;
  return Var<S>::make(std::move(out), {pred}, [pred, err, inv_n](Node<S>& n) {
    if (pred.requires_grad()) {
      pred.node()->grad += (S(2) * inv_n * n.grad(0, 0)) * err;
    }
  });
}

// Mean over rows of -log softmax(logits)[target].
template <class S>
Var<S> cross_entropy_logits(const Var<S>& logits, const std::vector<int>& targets) {
  detail::check(static_cast<Eigen::Index>(targets.size()) == logits.rows(),
                "cross_entropy: one target per row");
  const Eigen::Index b = logits.rows();
  Mat<S> probs(b, logits.cols());
  S total = S(0);
  for (Eigen::Index r = 0; r < b; ++r) {
    detail::check(targets[r] >= 0 && targets[r] < logits.cols(),
                  "cross_entropy: target out of range");
    const S m = logits.value().row(r).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (logits.value().row(r).array() - m).exp();
    const S lse = std::log(e.sum()) + m;
    probs.row(r) = e / e.sum();
    total += lse - logits.value()(r, targets[r]);
  }
  Mat<S> out(1, 1);
  out(0, 0) = total / S(b);
  return Var<S>::make(std::move(out), {logits}, [logits, probs, targets](Node<S>& n) {
    if (!logits.requires_grad()) return;
    const S g = n.grad(0, 0) / S(logits.rows());
    Mat<S> d = probs;
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      d(r, targets[r]) -= S(1);
    }
    logits.node()->grad += g * d;
  });
}

}  // namespace nn
}  // namespace starnet
