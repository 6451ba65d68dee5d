#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssda2/autograd.hpp"
#include "ssda2/image.hpp"
#include "ssda2/rng.hpp"

namespace ssda2 {

/// Four conv blocks, wide to narrow. Shared by the generator encoder and the
/// discriminator trunk.
struct EncoderConfig {
  std::array<int, 4> block_channels{256, 128, 64, 32};

  bool operator==(const EncoderConfig&) const = default;
};

/// Geometric precondition for the 4x pooling pyramid: side divisible by 16,
/// or a power of two below 16 (pooling then saturates at 1x1 — used by
/// reduced test geometries). Throws std::invalid_argument otherwise.
void check_patch_side(std::int64_t side);

/// Per-sample, per-channel normalization over spatial dims; no affine terms.
Var instance_norm(const Var& x, double eps = 1e-5);

/// out = sqrt(var_style + eps) * (content - mean_content) /
///       sqrt(var_content + eps) + mean_style, statistics over spatial dims.
/// eps appears on both sides so self-styling is an identity up to rounding.
/// Content and style need equal (N, C); spatial dims may differ.
Var adain(const Var& content, const Var& style, double eps = 1e-5);

/// Encoder output: bottleneck plus the per-scale features the decoder
/// consumes, and which blocks actually pooled (pooling is skipped once the
/// spatial extent reaches 1x1).
struct Encoded {
  Var bottleneck;
  std::array<Var, 3> skips;
  std::array<bool, 4> pooled{};
};

class Encoder {
 public:
  Encoder(EncoderConfig cfg, int in_channels, std::uint64_t seed);

  /// x: (N, in_channels, H, W), H == W satisfying check_patch_side.
  Encoded forward(const Var& x) const;

  std::vector<Var> parameters() const;
  std::vector<std::pair<std::string, Var>> named_parameters(const std::string& prefix) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  int in_channels_;
  std::array<Var, 4> w_, b_;
};

/// Unet-style decoder: each stage upsamples (mirroring the encoder's
/// pooling), concatenates the matching skip, convolves and normalizes; a
/// full-resolution head maps to the output channels through a sigmoid so
/// values stay in [0,1].
class Decoder {
 public:
  Decoder(EncoderConfig cfg, int out_channels, std::uint64_t seed);

  Var forward(const Encoded& e) const;

  std::vector<Var> parameters() const;
  std::vector<std::pair<std::string, Var>> named_parameters(const std::string& prefix) const;

 private:
  EncoderConfig cfg_;
  int out_channels_;
  std::array<Var, 5> w_, b_;  // three skip stages, full-res stage, output head
};

struct GeneratorConfig {
  EncoderConfig encoder;
  /// Inject style at every skip scale (default) or at the bottleneck only.
  bool adain_skips = true;

  bool operator==(const GeneratorConfig&) const = default;
};

class Generator {
 public:
  Generator(GeneratorConfig cfg, std::uint64_t seed);

  Encoded encode(const Var& x) const { return enc_.forward(x); }
  Var decode(const Encoded& e) const { return dec_.forward(e); }
  Var reconstruct(const Var& x) const { return decode(encode(x)); }

  /// Re-styles content features with style statistics at the bottleneck and
  /// (configurably) every skip scale. Spatial layout follows the content.
  Encoded mix(const Encoded& content, const Encoded& style) const;

  /// (content->style, style->content) translations of two batches.
  std::pair<Var, Var> translate_pair(const Var& content, const Var& style) const;

  std::vector<Var> parameters() const;
  std::vector<std::pair<std::string, Var>> named_parameters() const;
  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  Encoder enc_;
  Decoder dec_;
};

/// Realness score and unit-norm embedding per batch element, both read off
/// the globally average-pooled last trunk block.
struct DiscriminatorOutput {
  Var realness;   // (N, 1)
  Var embedding;  // (N, C4), rows L2-normalized
};

class Discriminator {
 public:
  Discriminator(EncoderConfig cfg, std::uint64_t seed);

  DiscriminatorOutput forward(const Var& x) const;

  std::vector<Var> parameters() const;
  std::vector<std::pair<std::string, Var>> named_parameters() const;
  const EncoderConfig& config() const { return trunk_.config(); }

 private:
  Encoder trunk_;
  Var head_w_, head_b_;
};

/// Cosine similarity of discriminator embeddings for two single patches.
double similarity(const Discriminator& f, const ImagePatch& a, const ImagePatch& b);

/// Frozen feature extractor for the perceptual loss: three conv/relu/pool
/// blocks. Weights load from `weights_path` when given; otherwise the net
/// falls back to a fixed random initialization (random-feature perceptual
/// distance) and reports pretrained() == false.
struct PerceptualConfig {
  std::array<int, 3> block_channels{16, 32, 64};
  int tap_block = 3;  // 1..3: which block's activation is the feature
  std::string weights_path;

  bool operator==(const PerceptualConfig&) const = default;
};

class PerceptualNet {
 public:
  PerceptualNet(PerceptualConfig cfg, int in_channels, std::uint64_t seed);

  /// Feature activation at the configured tap; gradients flow to x only
  /// (parameters are frozen).
  Var features(const Var& x) const;

  bool pretrained() const { return pretrained_; }
  std::vector<Var> parameters() const;

 private:
  PerceptualConfig cfg_;
  std::array<Var, 3> w_, b_;
  bool pretrained_ = false;
};

/// Flat binary serialization of a parameter list (shape-checked on load;
/// round-trips bit-exactly).
void save_params(const std::vector<Var>& params, const std::string& path);
void load_params(const std::vector<Var>& params, const std::string& path);

/// FNV-1a over the raw bytes of all parameter values, for determinism and
/// freeze checks.
std::uint64_t params_fingerprint(const std::vector<Var>& params);

}  // namespace ssda2
