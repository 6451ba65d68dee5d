#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssda2/data.hpp"
#include "ssda2/losses.hpp"
#include "ssda2/nets.hpp"

namespace ssda2 {

/// Hyperparameters of one translation-training run. Everything needed to
/// rebuild the models bit-for-bit lives here and is echoed into the
/// checkpoint manifest.
struct TrainConfig {
  GeneratorConfig gen;
  PerceptualConfig per;
  LossWeights weights;
  int batch_size = 8;
  double base_lr = 0.01;
  double poly_power = 0.95;
  std::int64_t total_iters = 2000;
  std::uint64_t seed = 0;
  std::string optimizer = "sgd";  // "sgd" (momentum) or "adam"
  double momentum = 0.9;
  // Global L2 gradient-norm ceiling applied per network before each
  // optimizer step; <= 0 disables. Early-phase gradients of the weighted
  // objective run two orders of magnitude above the parameter scale, and
  // the quadratic adversarial term then diverges under momentum SGD at
  // base_lr without this ceiling.
  double max_grad_norm = 10.0;
  bool per_anchor_contrastive = false;
  std::int64_t ckpt_every = 500;

  bool operator==(const TrainConfig&) const = default;
};

/// Polynomial decay: base_lr * (1 - iter/total)^power, clamped at 0 past the
/// end. Throws on non-positive base_lr or total < 1.
double poly_lr(std::int64_t iter, std::int64_t total_iters, double base_lr, double power);

/// poly_lr over this config's schedule fields.
double lr_at(std::int64_t iter, const TrainConfig& cfg);

/// The batch fed to iteration `iter` of a run with this config: sampled
/// from a fresh stream derived from (seed, iter), so any resumption point
/// replays the identical sequence.
TrainTriplet triplet_for_iteration(const TrainConfig& cfg, std::int64_t iter,
                                   const std::vector<ImagePatch>& pool);

/// Scales the gradients of `params` in place so their global L2 norm does
/// not exceed `max_norm` (no-op when max_norm <= 0 or the norm is already
/// within bounds). Returns the pre-clip norm.
double clip_grad_norm(const std::vector<Var>& params, double max_norm);

/// First-order optimizer state over a fixed parameter list. One struct
/// covers both supported rules so checkpoints serialize uniformly.
struct OptState {
  std::string kind = "sgd";
  double momentum = 0.9;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;          // adam step count
  std::vector<Tensor> slot1;   // momentum velocity / first moment
  std::vector<Tensor> slot2;   // adam second moment

  void init(const std::vector<Var>& params);
  void step(const std::vector<Var>& params, double lr);
  void write(std::ostream& out) const;
  void read(std::istream& in);
};

/// Owns the generator, discriminator, frozen perceptual net and both
/// optimizers; runs the alternating update and handles checkpoints.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  /// One alternating update on a single triplet: the discriminator first
  /// (translations recomputed without a graph and treated as constants),
  /// then the generator against the just-updated discriminator. Throws on
  /// non-finite losses after dumping diagnostics.
  LossReport train_step(const TrainTriplet& t);

  /// Loss values on a probe triplet without any parameter update.
  LossReport eval_probe(const TrainTriplet& t);

  /// Runs train_step from the current iteration to total_iters, sampling
  /// each triplet from a per-iteration derived stream (so a resumed run
  /// consumes identical batches). Appends the loss log and writes periodic
  /// checkpoints under out_dir; returns the final checkpoint path. On error
  /// a checkpoint is written before the exception propagates.
  std::string fit(const std::vector<ImagePatch>& pool, const std::string& out_dir);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  std::int64_t iteration() const { return iteration_; }
  const TrainConfig& config() const { return cfg_; }
  Generator& generator() { return gen_; }
  const Generator& generator() const { return gen_; }
  Discriminator& discriminator() { return dis_; }
  const PerceptualNet& perceptual() const { return per_; }

  /// Where non-finite-loss dumps are written; empty disables dumping.
  void set_diagnostics_dir(std::string dir) { diag_dir_ = std::move(dir); }

 private:
  TrainConfig cfg_;
  Generator gen_;
  Discriminator dis_;
  PerceptualNet per_;
  std::vector<Var> gen_params_, dis_params_;
  OptState opt_g_, opt_d_;
  std::int64_t iteration_ = 0;
  std::string diag_dir_;
};

/// Reads the plain-text manifest written next to a checkpoint and rebuilds
/// the TrainConfig needed to instantiate a matching Trainer.
TrainConfig read_checkpoint_config(const std::string& ckpt_path);

/// Convenience for inference-side tools: manifest + parameters -> trainer.
Trainer load_trainer(const std::string& ckpt_path);

}  // namespace ssda2
