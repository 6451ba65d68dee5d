#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

#include "ssda2/tensor.hpp"

namespace ssda2 {

/// RGB image patch, (H,W,C) doubles in [0,1]. The unit of translation.
struct ImagePatch {
  Tensor pixels;
  std::string source_id;
  std::optional<std::pair<std::int64_t, std::int64_t>> origin;

  std::int64_t height() const { return pixels.dim(0); }
  std::int64_t width() const { return pixels.dim(1); }
  std::int64_t channels() const { return pixels.dim(2); }
};

/// Binary segmentation mask, (H,W) with values in {0,1}.
using Mask = Tensor;

ImagePatch make_patch(std::int64_t h, std::int64_t w, std::string source_id = "");
bool patch_values_valid(const ImagePatch& p);

cv::Mat patch_to_mat(const ImagePatch& p);
ImagePatch mat_to_patch(const cv::Mat& m, std::string source_id = "");

ImagePatch load_patch_png(const std::string& path);
void save_patch_png(const ImagePatch& p, const std::string& path);

Mask load_mask_png(const std::string& path);
void save_mask_png(const Mask& m, const std::string& path);

/// Loads a raster preserving depth (16-bit TIFF stays CV_16U).
cv::Mat load_raster(const std::string& path);

/// (H,W,C) patches -> (N,C,H,W) batch tensor and back.
Tensor pack_nchw(const std::vector<ImagePatch>& patches);
std::vector<ImagePatch> unpack_nchw(const Tensor& batch);
/// Masks -> (N,1,H,W).
Tensor pack_masks(const std::vector<Mask>& masks);

}  // namespace ssda2
