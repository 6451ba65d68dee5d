#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssda2/image.hpp"
#include "ssda2/rng.hpp"

namespace ssda2 {

/// Parametric spectral transform defining one synthetic domain:
/// out = clamp(gain * patch^gamma + bias, 0, 1), then Gaussian blur.
/// The identity spec leaves any patch bit-identical.
struct DomainSpec {
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> bias{0.0, 0.0, 0.0};
  std::array<double, 3> gamma{1.0, 1.0, 1.0};
  double blur_sigma = 0.0;

  bool is_identity() const {
    for (int c = 0; c < 3; ++c)
      if (gain[c] != 1.0 || bias[c] != 0.0 || gamma[c] != 1.0) return false;
    return blur_sigma == 0.0;
  }
};

ImagePatch apply_domain(const ImagePatch& patch, const DomainSpec& spec);

/// Anchor offsets along one axis for tiling: 0, stride, 2*stride, ... with
/// the final anchor clamped to the border (extent - patch). Count equals
/// floor((extent - patch) / stride) + 1.
std::vector<std::int64_t> tile_anchors(std::int64_t extent, std::int64_t patch,
                                       std::int64_t stride);

/// Cuts a scene into row-major square patches after integer downsampling.
/// Throws if the (downsampled) scene is smaller than the patch size; border
/// patches are anchored to the edge, never padded.
std::vector<ImagePatch> tile_scene(const ImagePatch& scene, std::int64_t patch,
                                   std::int64_t stride, std::int64_t downsample = 1);
std::vector<Mask> tile_mask(const Mask& mask, std::int64_t patch, std::int64_t stride,
                            std::int64_t downsample = 1);

/// Per-channel 16-bit -> 8-bit conversion. Values at or above the
/// (1 - clip_fraction) quantile map to 255, zero maps to 0, linear and
/// rounded in between. A constant-valued channel maps to all zeros.
cv::Mat clip16to8(const cv::Mat& scene, double clip_fraction = 0.02);

/// Spatial-only view used by twin augmentation. scale == 1 is a bit-exact
/// copy; scale > 1 upsamples then crops; scale < 1 crops a window then
/// upsamples back, so no padding is ever introduced.
struct ViewParams {
  double scale = 1.0;
  std::int64_t off_y = 0;
  std::int64_t off_x = 0;
  double sigma = 0.0;
};

ViewParams sample_view_params(std::int64_t side, Rng& rng);
ImagePatch apply_view(const ImagePatch& patch, const ViewParams& params);

/// Two spatial-only views of one patch (random resize, crop, optional
/// Gaussian blur). No channel-wise change beyond resampling, so both views
/// keep the source's style.
std::pair<ImagePatch, ImagePatch> augment_twin(const ImagePatch& patch, std::uint64_t seed);

/// Batch of twin views plus independently sampled style references.
struct TrainTriplet {
  std::vector<ImagePatch> a1;
  std::vector<ImagePatch> a2;
  std::vector<ImagePatch> b;
};

TrainTriplet sample_triplet(const std::vector<ImagePatch>& pool, int batch, Rng& rng);

/// Shapes-on-texture content with exact foreground masks. Domain-neutral:
/// all channels carry the same values until a DomainSpec is applied.
void gen_content(std::int64_t n, std::int64_t size, Rng& rng, std::vector<ImagePatch>& patches,
                 std::vector<Mask>& masks);

struct SynthDataset {
  std::vector<ImagePatch> patches;
  std::vector<Mask> masks;
  std::vector<int> domain_labels;  // evaluation only, never fed to training
  std::vector<DomainSpec> specs;
};

std::vector<DomainSpec> make_domain_specs(int n_domains, std::uint64_t seed);
SynthDataset make_synth_dataset(int n_domains, std::int64_t n_patches, std::uint64_t seed,
                                std::int64_t size = 64);

/// Plain-text key-value manifest describing scenes to tile.
/// Keys: patch, stride, downsample, clip, scene (repeatable; value is
/// "image[,mask[,source_id]]").
struct SceneEntry {
  std::string image_path;
  std::string mask_path;
  std::string source_id;
};

struct SceneManifest {
  std::vector<SceneEntry> scenes;
  std::int64_t patch = 256;
  std::int64_t stride = 128;
  std::int64_t downsample = 1;
  double clip = 0.02;

  static SceneManifest parse(const std::string& path);
};

/// Loads an unlabeled patch pool from either a directory of PNGs or a scene
/// manifest file (16-bit rasters pass through clip16to8 first).
std::vector<ImagePatch> load_patch_pool(const std::string& dir_or_manifest);

/// Loads a labeled dataset written by synth-gen: patches/, masks/, and an
/// optional domains.tsv sidecar with per-patch group labels.
struct LabeledDataset {
  std::vector<ImagePatch> patches;
  std::vector<Mask> masks;
  std::vector<std::string> names;
  std::vector<int> groups;  // empty when no sidecar present
};

LabeledDataset load_labeled_dataset(const std::string& dir);

}  // namespace ssda2
