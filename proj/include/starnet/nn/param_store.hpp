#pragma once

#include <Eigen/QR>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "starnet/nn/ops.hpp"
#include "starnet/nn/rng.hpp"
#include "starnet/nn/tensor.hpp"

namespace starnet {
namespace nn {

enum class Init { Zero, One, XavierUniform, Orthogonal, Normal };

// Named trainable parameters plus non-trainable buffers (running statistics),
// with deterministic seeded initialization and a stable binary checkpoint
// format: magic, seed, entry count, then name / kind / shape / float32 data
// per entry in name order.
template <class S>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  Var<S> create(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                Init init) {
    if (params_.count(name) || buffers_.count(name)) {
      throw Error("param_store", "duplicate parameter name: " + name);
    }
    Mat<S> value(rows, cols);
    switch (init) {
      case Init::Zero:
        value.setZero();
        break;
      case Init::One:
        value.setOnes();
        break;
      case Init::XavierUniform: {
        const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (Eigen::Index r = 0; r < rows; ++r)
          for (Eigen::Index c = 0; c < cols; ++c)
            value(r, c) = static_cast<S>(rng_.uniform(-bound, bound));
        break;
      }
      case Init::Normal:
        for (Eigen::Index r = 0; r < rows; ++r)
          for (Eigen::Index c = 0; c < cols; ++c)
            value(r, c) = static_cast<S>(0.02 * rng_.normal());
        break;
      case Init::Orthogonal:
        value = orthogonal(rows, cols);
        break;
    }
    Var<S> v = Var<S>::leaf(std::move(value), true);
    params_.emplace(name, v);
    return v;
  }

  Mat<S>& create_buffer(const std::string& name, Eigen::Index rows,
                        Eigen::Index cols, S fill) {
    if (params_.count(name) || buffers_.count(name)) {
      throw Error("param_store", "duplicate buffer name: " + name);
    }
    auto buf = std::make_shared<Mat<S>>(Mat<S>::Constant(rows, cols, fill));
    buffers_.emplace(name, buf);
    return *buf;
  }

  std::uint64_t seed() const { return seed_; }
  Rng& rng() { return rng_; }

  std::size_t num_params() const { return params_.size(); }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& [name, v] : params_) n += v.value().size();
    return n;
  }

  // Deterministic (name-ordered) parameter sequence for optimizers.
  std::vector<std::pair<std::string, Var<S>>> items() const {
    return {params_.begin(), params_.end()};
  }

  Var<S> find(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw Error("param_store", "unknown parameter: " + name);
    }
    return it->second;
  }

  void zero_grad() {
    for (auto& [name, v] : params_) v.zero_grad();
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot open checkpoint for writing: " + path);
    out.write(kMagic, 8);
    write_u64(out, seed_);
    write_u64(out, params_.size() + buffers_.size());
    for (const auto& [name, v] : params_) {
      write_entry(out, name, 0, v.value());
    }
    for (const auto& [name, buf] : buffers_) {
      write_entry(out, name, 1, *buf);
    }
    if (!out) throw Error("io", "checkpoint write failed: " + path);
  }

  void load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
      throw Error("checkpoint", "bad checkpoint magic: " + path);
    }
    seed_ = read_u64(in);
    const std::uint64_t count = read_u64(in);
    if (count != params_.size() + buffers_.size()) {
      throw Error("checkpoint", "checkpoint entry count does not match model");
    }
    for (std::uint64_t i = 0; i < count; ++i) {
      std::string name;
      std::uint8_t kind;
      Mat<S> value = read_entry(in, name, kind);
      if (kind == 0) {
        auto it = params_.find(name);
        if (it == params_.end()) {
          throw Error("checkpoint", "unexpected parameter: " + name);
        }
        if (it->second.rows() != value.rows() || it->second.cols() != value.cols()) {
          throw Error("checkpoint", "shape mismatch for parameter: " + name);
        }
        it->second.value() = value;
      } else {
        auto it = buffers_.find(name);
        if (it == buffers_.end()) {
          throw Error("checkpoint", "unexpected buffer: " + name);
        }
        if (it->second->rows() != value.rows() || it->second->cols() != value.cols()) {
          throw Error("checkpoint", "shape mismatch for buffer: " + name);
        }
        *it->second = value;
      }
    }
  }

 private:
  static constexpr const char kMagic[9] = "SNCKPT01";

  Mat<S> orthogonal(Eigen::Index rows, Eigen::Index cols) {
    // QR of a Gaussian matrix, sign-fixed so the factorization is unique.
    const bool tall = rows >= cols;
    const Eigen::Index n = std::max(rows, cols);
    const Eigen::Index m = std::min(rows, cols);
    Eigen::MatrixXd g(n, m);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < m; ++c) g(r, c) = rng_.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
    Eigen::MatrixXd r_mat = qr.matrixQR().topRows(m).template triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < m; ++c) {
      if (r_mat(c, c) < 0) q.col(c) = -q.col(c);
    }
    Eigen::MatrixXd ortho = tall ? q : Eigen::MatrixXd(q.transpose());
    return ortho.template cast<S>();
  }

  static void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw Error("checkpoint", "truncated checkpoint");
    return v;
  }

  static void write_entry(std::ofstream& out, const std::string& name,
                          std::uint8_t kind, const Mat<S>& value) {
    const std::uint32_t len = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(name.data(), len);
    out.write(reinterpret_cast<const char*>(&kind), 1);
    const std::uint32_t rows = static_cast<std::uint32_t>(value.rows());
    const std::uint32_t cols = static_cast<std::uint32_t>(value.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    Mat<float> as_float = value.template cast<float>();
    out.write(reinterpret_cast<const char*>(as_float.data()),
              static_cast<std::streamsize>(sizeof(float) * as_float.size()));
  }

  static Mat<S> read_entry(std::ifstream& in, std::string& name, std::uint8_t& kind) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > 4096) throw Error("checkpoint", "bad entry name length");
    name.resize(len);
    in.read(name.data(), len);
    in.read(reinterpret_cast<char*>(&kind), 1);
    std::uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in) throw Error("checkpoint", "truncated checkpoint entry");
    Mat<float> as_float(rows, cols);
    in.read(reinterpret_cast<char*>(as_float.data()),
            static_cast<std::streamsize>(sizeof(float) * as_float.size()));
    if (!in) throw Error("checkpoint", "truncated checkpoint data");
    return as_float.template cast<S>();
  }

  std::map<std::string, Var<S>> params_;
  std::map<std::string, std::shared_ptr<Mat<S>>> buffers_;
  std::uint64_t seed_;
  Rng rng_;
};

}  // namespace nn
}  // namespace starnet
