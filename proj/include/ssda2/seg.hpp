#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssda2/data.hpp"
#include "ssda2/image.hpp"
#include "ssda2/train.hpp"
#include "ssda2/translate.hpp"

namespace ssda2 {

/// Intersection over union of two binary masks of equal shape. Both-empty
/// masks score 1 by default (nothing to find, nothing found); with
/// both_empty_is_one = false that case is reported as NaN so callers can
/// skip it.
double iou(const Mask& pred, const Mask& gt, bool both_empty_is_one = true);

/// Per-channel radiometric distance: sum over channels of |mean difference|
/// plus |std difference| (population std). Zero iff the channel statistics
/// coincide; symmetric; non-negative.
double style_gap(const ImagePatch& a, const ImagePatch& b);

/// Hyperparameters of one segmentation run. The schedule mirrors the
/// translation trainer's polynomial decay with its own base rate and power.
struct SegConfig {
  std::array<int, 4> block_channels{16, 32, 64, 128};
  int batch_size = 8;
  double base_lr = 0.001;
  double poly_power = 0.9;
  std::int64_t total_iters = 5000;
  std::uint64_t seed = 0;
  std::string optimizer = "sgd";
  double momentum = 0.9;
  double max_grad_norm = 10.0;
  std::int64_t ckpt_every = 1000;

  bool operator==(const SegConfig&) const = default;
};

/// Small residual Unet for foreground/background segmentation: a stem, four
/// residual stages with pooling between the first three, and a mirrored
/// upsample-concat decoder ending in single-channel logits. Deliberately
/// normalization-free so its activations — like any plain conv net's — track
/// the input's radiometry, which is the failure mode the augmentation
/// protocol measures.
class SegNet {
 public:
  SegNet(std::array<int, 4> block_channels, std::uint64_t seed);

  /// x: (N,3,H,W) with H == W divisible by 8 -> (N,1,H,W) logits.
  Var forward(const Var& x) const;

  std::vector<Var> parameters() const;
  std::int64_t parameter_count() const;
  const std::array<int, 4>& channels() const { return channels_; }

 private:
  std::array<int, 4> channels_;
  Var stem_w_, stem_b_;
  std::array<Var, 8> res_w_, res_b_;    // two convs per stage
  std::array<Var, 4> proj_w_, proj_b_;  // 1x1 shortcuts where widths change
  std::array<Var, 3> dec_w_, dec_b_;
  Var head_w_, head_b_;
};

/// Dataset-level evaluation: intersections and unions accumulate over all
/// pixels of a group before dividing, mirroring how per-city tables score.
struct EvalResult {
  std::vector<std::pair<int, double>> group_iou;  // (group label, IoU)
  double mean_iou = 0.0;                          // unweighted mean over groups
  double style_gap_vs_train = 0.0;  // mean gap of eval patches to the train split
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

/// Owns the net and optimizer; trains pixelwise BCE with an optional
/// re-styling hook on the input patches (never the masks).
class SegTrainer {
 public:
  explicit SegTrainer(SegConfig cfg);

  /// One BCE step on an explicit batch; returns the loss. Throws on
  /// non-finite loss after dumping the batch.
  double train_step(const std::vector<ImagePatch>& patches, const std::vector<Mask>& masks);

  /// Runs the full schedule over batches sampled per-iteration from
  /// (seed, iter) streams; `hook` (may be null) re-styles each sampled patch
  /// before the step. Writes loss_log.tsv and periodic checkpoints under
  /// out_dir; returns the final checkpoint path.
  std::string fit(const LabeledDataset& data, AugmentHook* hook, const std::string& out_dir);

  /// Thresholded sigmoid prediction for one patch.
  Mask predict(const ImagePatch& patch, double threshold = 0.5);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  std::int64_t iteration() const { return iteration_; }
  const SegConfig& config() const { return cfg_; }
  SegNet& net() { return net_; }

  void set_diagnostics_dir(std::string dir) { diag_dir_ = std::move(dir); }

 private:
  SegConfig cfg_;
  SegNet net_;
  std::vector<Var> params_;
  OptState opt_;
  std::int64_t iteration_ = 0;
  std::string diag_dir_;
};

/// Rebuilds a segmentation trainer from a checkpoint manifest + blob.
SegTrainer load_seg_trainer(const std::string& ckpt_path);

/// Dataset-level per-group IoU of a trained net.
EvalResult evaluate_seg(SegTrainer& trainer, const LabeledDataset& data,
                        double threshold = 0.5);

/// The directional study: identical content, identity-styled source labels,
/// a target split whose style is optionally shifted, and per seed one
/// baseline and one re-styling-augmented segmentation run, evaluated on
/// held-out target patches.
struct ExperimentConfig {
  std::string out_dir;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::uint64_t data_seed = 100;
  std::int64_t side = 32;
  std::int64_t n_labeled = 64;    // source training patches
  std::int64_t n_unlabeled = 64;  // target-styled patches: translation pool + hook references
  std::int64_t n_eval = 48;       // held-out target patches
  bool shifted_target = true;     // false = control: target style == source style
  DomainSpec shift{{1.3, 1.3, 1.3}, {0.0, 0.0, 0.0}, {1.5, 1.5, 1.5}, 0.0};
  double augment_p = 0.5;
  TrainConfig i2i;  // translation pre-training (channels, iters, ...)
  SegConfig seg;    // per-arm segmentation schedule
};

struct ExperimentRow {
  std::string arm;  // "baseline" | "augmented"
  std::uint64_t seed = 0;
  double iou_fg = 0.0;
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;
  double baseline_median = 0.0;
  double augmented_median = 0.0;
  double eval_style_gap = 0.0;  // mean gap between source-train and target-eval patches
  std::string table_path;
  std::string plot_path;
  std::string i2i_ckpt;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Middle element (odd n) or middle-pair mean (even n); throws when empty.
double median(std::vector<double> values);

}  // namespace ssda2
