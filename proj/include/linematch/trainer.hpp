#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "linematch/autodiff.hpp"
#include "linematch/datagen.hpp"
#include "linematch/image.hpp"
#include "linematch/model.hpp"

namespace linematch {

/// Model parameters recorded on one tape.
struct BoundModel {
  std::vector<ad::Var> kernels;
  std::vector<ad::Var> biases;
  ad::Var dustbin;
  struct Layer {
    ad::Var omega, a_vec, theta1, theta2, w_cross;
  };
  std::vector<Layer> layers;
  ad::Var affinity_weight;
};

/// `trainable` binds parameters as differentiable leaves; otherwise as constants.
BoundModel bind(ad::Tape& tape, const Model& model, bool trainable);

struct LayerTrace {
  Matrix adjacency_a;
  Matrix adjacency_b;
  Matrix plan;  // transport plan feeding the cross-graph step
};

struct ForwardResult {
  bool skipped = false;           // every line excluded
  std::vector<int> kept_a, kept_b;
  MatchGroundTruth gt_kept;       // targets re-indexed after exclusion
  ad::Var log_plan;
  Matrix plan;                    // final P, (|kept_a|+1) x (|kept_b|+1)
  bool converged = false;
  std::vector<LayerTrace> layers;
  ad::Var feature_loss, graph_loss, total_loss;  // valid when a ground truth was given
  double feature = 0.0, graph = 0.0, total = 0.0;
};

/// Full pipeline: backbone, line descriptors, exclusion, graph blocks, final
/// transport and (with `gt`) the losses. The feature loss uses every ground
/// truth pair before exclusion; the matching loss uses the re-indexed targets.
ForwardResult forward_pipeline(ad::Tape& tape, const BoundModel& bound, const Config& config,
                               const ImageTensor& image_a, const ImageTensor& image_b,
                               std::span<const LineSegment> lines_a, std::span<const LineSegment> lines_b,
                               const MatchGroundTruth* gt, Diagnostics* diag = nullptr);

ForwardResult forward_pipeline(ad::Tape& tape, const Model& model, const ImagePairRecord& record, bool trainable,
                               Diagnostics* diag = nullptr);

/// learning_rate / factor^(epoch-1), never below the floor. `epoch` is 1-based.
double learning_rate_at(const TrainConfig& config, int epoch);

/// One Adam update of every parameter that has a gradient in `grads`.
void adam_step(Model& model, AdamState& state, const std::map<std::string, Matrix>& grads, double lr,
               const TrainConfig& config);

/// Random rotation about the image centre and isotropic rescale, drawn
/// independently for both views; ground truth is remapped exactly.
ImagePairRecord augment_record(const ImagePairRecord& record, std::mt19937_64& rng, const TrainConfig& config);

struct StepLog {
  int epoch = 0;
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double feature = 0.0;
  double graph = 0.0;
  int records = 0;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // checkpoints and train_log.csv; empty disables writing
  std::function<void(const StepLog&)> on_step;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

struct TrainStats {
  std::vector<StepLog> steps;
  std::vector<double> epoch_loss;
  int skipped_records = 0;
};

/// Mini-batch training with per-record forward passes and averaged gradients.
/// Throws NumericError on a non-finite loss; checkpoints of completed epochs
/// stay on disk.
Checkpoint train(std::span<const ImagePairRecord> dataset, const Config& config, const TrainOptions& options = {},
                 TrainStats* stats = nullptr, const Checkpoint* resume = nullptr);

/// Inference only. A side without lines leaves every line of the other side unmatched.
MatchSet match_images(const cv::Mat& image_a, const cv::Mat& image_b, std::span<const LineSegment> lines_a,
                      std::span<const LineSegment> lines_b, const Model& model);
MatchSet match_record(const ImagePairRecord& record, const Model& model);

}  // namespace linematch
