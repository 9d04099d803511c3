#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "starnet/dataset.hpp"
#include "starnet/model.hpp"
#include "starnet/prediction.hpp"

namespace starnet {

enum class RegressionLoss { SmoothL1, L2 };

struct LossConfig {
  double beta = 1.0;
  RegressionLoss regression = RegressionLoss::SmoothL1;
};

struct LossBreakdown {
  double total = 0.0;
  double regression = 0.0;
  double classification = 0.0;
  int best_mode = 0;
};

// Winner-takes-all multi-modal loss: the best mode (lowest mean point
// distance, ties to the lowest index) carries the regression term, and the
// scores pay cross-entropy against that index.
LossBreakdown multimodal_loss(const TrajectoryPrediction& pred,
                              const std::vector<Point2>& gt,
                              const LossConfig& config);

struct Displacement {
  double ade = 0.0;
  double fde = 0.0;
};

// Min-over-modes displacement errors; ADE and FDE minimize independently.
Displacement ade_fde(const TrajectoryPrediction& pred,
                     const std::vector<Point2>& gt);

// Displacement errors of the highest-score mode only.
Displacement ade_fde_top_score(const TrajectoryPrediction& pred,
                               const std::vector<Point2>& gt);

int best_mode_index(const TrajectoryPrediction& pred,
                    const std::vector<Point2>& gt);

// ---------------------------------------------------------------------------

template <class S>
class Adam {
 public:
  explicit Adam(nn::ParamStore<S>& store, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : store_(&store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [name, param] : store.items()) {
      m_.push_back(nn::Mat<S>::Zero(param.rows(), param.cols()));
      v_.push_back(nn::Mat<S>::Zero(param.rows(), param.cols()));
    }
  }

  void zero_grad() { store_->zero_grad(); }

  void step() {
    ++t_;
    const S c1 = static_cast<S>(1.0 - std::pow(beta1_, t_));
    const S c2 = static_cast<S>(1.0 - std::pow(beta2_, t_));
    std::size_t i = 0;
    for (auto& [name, param] : store_->items()) {
      const nn::Mat<S>& g = param.grad();
      m_[i] = static_cast<S>(beta1_) * m_[i] + static_cast<S>(1.0 - beta1_) * g;
      v_[i] = static_cast<S>(beta2_) * v_[i] +
              static_cast<S>(1.0 - beta2_) * g.cwiseProduct(g);
      param.value().array() -=
          static_cast<S>(lr_) * (m_[i].array() / c1) /
          ((v_[i].array() / c2).sqrt() + static_cast<S>(eps_));
      ++i;
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  nn::ParamStore<S>* store_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<nn::Mat<S>> m_, v_;
};

// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 10;
  int batch = 8;
  double lr = 1e-4;
  double plateau_factor = 0.2;
  int plateau_patience = 2;       // epochs without improvement before decay
  double epsilon_region = 1e-4;   // improvement must beat best by this much
  std::uint64_t seed = 0;
  bool joint = false;
  double candidate_radius = 10.0;
  double target_train_ade = 0.0;  // > 0 enables early stopping
  LossConfig loss;
};

struct EpochRecord {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double ade = 0.0;
  double fde = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double final_train_ade = 0.0;
  double final_train_fde = 0.0;
  double final_val_ade = 0.0;
  double final_val_fde = 0.0;
  int epochs_run = 0;
};

void write_metrics_csv(std::ostream& out, const std::vector<EpochRecord>& history);

namespace training_detail {

// One prepared sample: local contexts, candidate ids and local-frame ground
// truth futures. Single-agent samples have exactly one entry each.
struct PreparedSample {
  std::vector<LocalContext> contexts;
  std::vector<AgentId> candidates;
  std::vector<std::vector<Point2>> gts;
};

std::vector<PreparedSample> prepare_samples(const std::vector<Scene>& scenes,
                                            bool joint, double radius,
                                            const kinematics::KinematicParams& kin);

}  // namespace training_detail

struct EvalMetrics {
  double ade = 0.0;
  double fde = 0.0;
  double loss = 0.0;
};

// Mean displacement metrics and loss of a model over prepared samples, in
// eval mode.
template <class S>
EvalMetrics evaluate(const StarNet<S>& model,
                     const std::vector<training_detail::PreparedSample>& samples,
                     bool joint, const LossConfig& loss_config = {}) {
  double ade_sum = 0.0, fde_sum = 0.0, loss_sum = 0.0;
  long count = 0;
  for (const auto& sample : samples) {
    typename ActionDecoder<S>::Output out;
    if (joint) {
      typename StarNet<S>::JointSample js{sample.contexts, sample.candidates};
      out = model.forward_joint({js}, false);
    } else {
      out = model.forward_single(sample.contexts, false);
    }
    for (std::size_t i = 0; i < sample.candidates.size(); ++i) {
      TrajectoryPrediction pred = model.decoder().to_prediction(
          out, static_cast<Eigen::Index>(i), sample.candidates[i]);
      Displacement d = ade_fde(pred, sample.gts[i]);
      ade_sum += d.ade;
      fde_sum += d.fde;
      loss_sum += multimodal_loss(pred, sample.gts[i], loss_config).total;
      ++count;
    }
  }
  if (count == 0) throw Error("domain", "evaluate: no samples");
  return {ade_sum / count, fde_sum / count, loss_sum / count};
}

// Loss graph over one forward batch. Per agent: winner-takes-all regression
// plus beta-weighted score cross-entropy; agents of one scene sum unweighted
// and scenes average.
template <class S>
nn::Var<S> batch_loss(const typename ActionDecoder<S>::Output& out,
                      const std::vector<const std::vector<Point2>*>& gts,
                      const std::vector<double>& sample_weight,
                      const LossConfig& config) {
  std::vector<nn::Var<S>> terms;
  nn::Mat<S> weights(static_cast<Eigen::Index>(gts.size()), 1);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& gt = *gts[i];
    nn::Mat<S> target(static_cast<Eigen::Index>(gt.size()), 2);
    for (std::size_t t = 0; t < gt.size(); ++t) {
      target(static_cast<Eigen::Index>(t), 0) = static_cast<S>(gt[t].x);
      target(static_cast<Eigen::Index>(t), 1) = static_cast<S>(gt[t].y);
    }
    // Winner selection happens outside the graph; ties go to the lower index.
    int best = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < out.positions[i].size(); ++j) {
      const auto& pos = out.positions[i][j].value();
      double err = 0.0;
      for (Eigen::Index t = 0; t < pos.rows(); ++t) {
        const double dx = static_cast<double>(pos(t, 0)) - gt[t].x;
        const double dy = static_cast<double>(pos(t, 1)) - gt[t].y;
        err += std::sqrt(dx * dx + dy * dy);
      }
      err /= static_cast<double>(pos.rows());
      if (err < best_err) {
        best_err = err;
        best = static_cast<int>(j);
      }
    }
    nn::Var<S> reg =
        config.regression == RegressionLoss::SmoothL1
            ? nn::smooth_l1(out.positions[i][best], target)
            : nn::mse(out.positions[i][best], target);
    nn::Var<S> ce = nn::cross_entropy_logits(
        nn::slice_rows(out.logits, static_cast<Eigen::Index>(i), 1), {best});
    terms.push_back(nn::add(reg, nn::scale(ce, static_cast<S>(config.beta))));
    weights(static_cast<Eigen::Index>(i), 0) = static_cast<S>(sample_weight[i]);
  }
  nn::Var<S> stacked = nn::concat_rows(terms);
  return nn::sum_all(nn::cmul(stacked, nn::constant(std::move(weights))));
}

template <class S>
TrainResult train(StarNet<S>& model, const std::vector<Scene>& train_scenes,
                  const std::vector<Scene>& val_scenes, const TrainConfig& config,
                  std::ostream* metrics_csv = nullptr) {
  using training_detail::PreparedSample;
  const auto& kin = model.config().kin;
  std::vector<PreparedSample> train_samples = training_detail::prepare_samples(
      train_scenes, config.joint, config.candidate_radius, kin);
  std::vector<PreparedSample> val_samples = training_detail::prepare_samples(
      val_scenes, config.joint, config.candidate_radius, kin);
  if (train_samples.empty()) throw Error("domain", "train: no usable samples");

  Adam<S> opt(model.params(), config.lr);
  nn::Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  TrainResult result;
  double best_val_ade = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;

  std::vector<std::size_t> order(train_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    long batches = 0;
    for (std::size_t at = 0; at < order.size(); at += config.batch) {
      const std::size_t end = std::min(order.size(), at + config.batch);
      std::vector<LocalContext> contexts;
      std::vector<typename StarNet<S>::JointSample> joint_batch;
      std::vector<const std::vector<Point2>*> gts;
      std::vector<double> weights;
      const double scene_count = static_cast<double>(end - at);
      for (std::size_t s = at; s < end; ++s) {
        const PreparedSample& sample = train_samples[order[s]];
        if (config.joint) {
          joint_batch.push_back({sample.contexts, sample.candidates});
        } else {
          contexts.push_back(sample.contexts.front());
        }
        for (const auto& gt : sample.gts) {
          gts.push_back(&gt);
          weights.push_back(1.0 / scene_count);
        }
      }
      typename ActionDecoder<S>::Output out =
          config.joint ? model.forward_joint(joint_batch, true)
                       : model.forward_single(contexts, true);
      nn::Var<S> loss = batch_loss<S>(out, gts, weights, config.loss);
      const double loss_value = static_cast<double>(loss.value()(0, 0));
      if (!std::isfinite(loss_value)) {
        throw Error("divergence", "training loss is not finite at epoch " +
                                      std::to_string(epoch));
      }
      loss_sum += loss_value;
      ++batches;
      opt.zero_grad();
      loss.backward();
      opt.step();
    }

    EvalMetrics train_metrics =
        evaluate(model, train_samples, config.joint, config.loss);
    EvalMetrics val_metrics =
        val_samples.empty()
            ? train_metrics
            : evaluate(model, val_samples, config.joint, config.loss);
    const double epoch_loss = loss_sum / std::max(1L, batches);
    result.history.push_back({epoch, "train", epoch_loss, train_metrics.ade,
                              train_metrics.fde, opt.lr()});
    result.history.push_back({epoch, "val", val_metrics.loss, val_metrics.ade,
                              val_metrics.fde, opt.lr()});
    result.final_train_ade = train_metrics.ade;
    result.final_train_fde = train_metrics.fde;
    result.final_val_ade = val_metrics.ade;
    result.final_val_fde = val_metrics.fde;
    result.epochs_run = epoch;

    // Plateau schedule: decay after `patience` consecutive epochs without
    // improving the best validation ADE beyond the epsilon region.
    if (val_metrics.ade < best_val_ade - config.epsilon_region) {
      best_val_ade = val_metrics.ade;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= config.plateau_patience) {
        opt.set_lr(opt.lr() * config.plateau_factor);
        stale_epochs = 0;
      }
    }

    if (config.target_train_ade > 0.0 &&
        train_metrics.ade < config.target_train_ade) {
      break;
    }
  }
  if (metrics_csv != nullptr) {
    write_metrics_csv(*metrics_csv, result.history);
  }
  return result;
}

}  // namespace starnet
