#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssda2/image.hpp"
#include "ssda2/nets.hpp"
#include "ssda2/rng.hpp"

namespace ssda2 {

/// Rebuilds the generator recorded in a training checkpoint (manifest plus
/// parameter blob). The inference entry point for every translation tool.
Generator load_generator(const std::string& ckpt_path);

/// Frozen-generator style translation: the output keeps `content`'s shape
/// and spatial geometry while adopting `style`'s per-channel feature
/// statistics. Deterministic — no RNG, no state, no graph. Throws
/// std::invalid_argument naming the offending patch and the required size
/// when a side is unsupported.
ImagePatch translate(const Generator& gen, const ImagePatch& content,
                     const ImagePatch& style);

/// Stochastic re-styling hook for downstream segmentation training: each
/// call keeps the patch with probability 1-p, or translates it against a
/// reference drawn uniformly from the pool. The mask passes through
/// bit-identical either way — translation never moves geometry. The pool
/// and p are validated once, at construction.
class AugmentHook {
 public:
  AugmentHook(Generator gen, std::vector<ImagePatch> reference_pool, double p,
              std::uint64_t seed);

  /// The (possibly re-styled) patch and the untouched mask.
  std::pair<ImagePatch, Mask> operator()(const ImagePatch& patch, const Mask& mask);

  /// Patch-only form for callers without labels.
  ImagePatch operator()(const ImagePatch& patch);

  std::int64_t calls() const { return calls_; }
  std::int64_t applied() const { return applied_; }
  double probability() const { return p_; }

 private:
  Generator gen_;
  std::vector<ImagePatch> pool_;
  double p_;
  Rng rng_;
  std::int64_t calls_ = 0;
  std::int64_t applied_ = 0;
};

/// n x n presentation grid: cell (i,j) holds patches[i] re-styled with
/// patches[j]'s statistics; the diagonal holds the originals bit-for-bit.
/// All patches must share one square shape.
ImagePatch translate_grid(const Generator& gen, const std::vector<ImagePatch>& patches);

/// Cosine similarity of gradient-magnitude maps: a geometry-agreement score
/// in [0,1]-ish territory (1 for identical edge layouts, invariant to global
/// contrast scaling and constant offsets). Two flat images agree perfectly;
/// flat against structure scores 0.
double edge_correlation(const ImagePatch& a, const ImagePatch& b);

}  // namespace ssda2
