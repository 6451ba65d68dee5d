#include "ssda2/image.hpp"

#include <cmath>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace ssda2 {

ImagePatch make_patch(std::int64_t h, std::int64_t w, std::string source_id) {
  ImagePatch p;
  p.pixels = Tensor({h, w, 3});
  p.source_id = std::move(source_id);
  return p;
}

bool patch_values_valid(const ImagePatch& p) {
  for (std::int64_t i = 0; i < p.pixels.size(); ++i) {
    const double v = p.pixels[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) return false;
  }
  return true;
}

cv::Mat patch_to_mat(const ImagePatch& p) {
  const int h = static_cast<int>(p.height()), w = static_cast<int>(p.width());
  const int c = static_cast<int>(p.channels());
  cv::Mat m(h, w, CV_64FC(c));
  std::memcpy(m.ptr<double>(), p.pixels.data(),
              static_cast<std::size_t>(p.pixels.size()) * sizeof(double));
  return m;
}

ImagePatch mat_to_patch(const cv::Mat& m, std::string source_id) {
  if (m.depth() != CV_64F) throw std::invalid_argument("mat_to_patch: expects CV_64F");
  ImagePatch p;
  p.pixels = Tensor({m.rows, m.cols, m.channels()});
  p.source_id = std::move(source_id);
  if (m.isContinuous()) {
    std::memcpy(p.pixels.data(), m.ptr<double>(),
                static_cast<std::size_t>(p.pixels.size()) * sizeof(double));
  } else {
    for (int y = 0; y < m.rows; ++y)
      std::memcpy(p.pixels.data() + static_cast<std::int64_t>(y) * m.cols * m.channels(),
                  m.ptr<double>(y),
                  static_cast<std::size_t>(m.cols) * m.channels() * sizeof(double));
  }
  return p;
}

ImagePatch load_patch_png(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw std::runtime_error("cannot read image: " + path);
  cv::Mat rgb;
  cv::cvtColor(img, rgb, cv::COLOR_BGR2RGB);
  ImagePatch p = make_patch(rgb.rows, rgb.cols, path);
  for (int y = 0; y < rgb.rows; ++y) {
    const cv::Vec3b* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.cols; ++x)
      for (int c = 0; c < 3; ++c) p.pixels.at3(y, x, c) = row[x][c] / 255.0;
  }
  return p;
}

void save_patch_png(const ImagePatch& p, const std::string& path) {
  if (p.channels() != 3) throw std::invalid_argument("save_patch_png: expects 3 channels");
  cv::Mat bgr(static_cast<int>(p.height()), static_cast<int>(p.width()), CV_8UC3);
  for (int y = 0; y < bgr.rows; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = p.pixels.at3(y, x, 2 - c);
        row[x][c] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
  }
  if (!cv::imwrite(path, bgr)) throw std::runtime_error("cannot write image: " + path);
}

Mask load_mask_png(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw std::runtime_error("cannot read mask: " + path);
  Mask m({img.rows, img.cols});
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) m.at2(y, x) = img.at<unsigned char>(y, x) > 127 ? 1.0 : 0.0;
  return m;
}

void save_mask_png(const Mask& m, const std::string& path) {
  cv::Mat img(static_cast<int>(m.dim(0)), static_cast<int>(m.dim(1)), CV_8UC1);
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x)
      img.at<unsigned char>(y, x) = m.at2(y, x) > 0.5 ? 255 : 0;
  if (!cv::imwrite(path, img)) throw std::runtime_error("cannot write mask: " + path);
}

cv::Mat load_raster(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
  if (img.empty()) throw std::runtime_error("cannot read raster: " + path);
  return img;
}

Tensor pack_nchw(const std::vector<ImagePatch>& patches) {
  if (patches.empty()) throw std::invalid_argument("pack_nchw: empty batch");
  const std::int64_t n = static_cast<std::int64_t>(patches.size());
  const std::int64_t h = patches[0].height(), w = patches[0].width(), c = patches[0].channels();
  Tensor out({n, c, h, w});
  for (std::int64_t i = 0; i < n; ++i) {
    const ImagePatch& p = patches[static_cast<std::size_t>(i)];
    if (p.height() != h || p.width() != w || p.channels() != c)
      throw std::invalid_argument("pack_nchw: inconsistent patch shapes");
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        for (std::int64_t ch = 0; ch < c; ++ch) out.at4(i, ch, y, x) = p.pixels.at3(y, x, ch);
  }
  return out;
}

std::vector<ImagePatch> unpack_nchw(const Tensor& batch) {
  if (batch.rank() != 4) throw std::invalid_argument("unpack_nchw: expects NCHW");
  const std::int64_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::vector<ImagePatch> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    ImagePatch p;
    p.pixels = Tensor({h, w, c});
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        for (std::int64_t ch = 0; ch < c; ++ch) p.pixels.at3(y, x, ch) = batch.at4(i, ch, y, x);
    out.push_back(std::move(p));
  }
  return out;
}

Tensor pack_masks(const std::vector<Mask>& masks) {
  if (masks.empty()) throw std::invalid_argument("pack_masks: empty batch");
  const std::int64_t n = static_cast<std::int64_t>(masks.size());
  const std::int64_t h = masks[0].dim(0), w = masks[0].dim(1);
  Tensor out({n, 1, h, w});
  for (std::int64_t i = 0; i < n; ++i) {
    const Mask& m = masks[static_cast<std::size_t>(i)];
    if (m.dim(0) != h || m.dim(1) != w)
      throw std::invalid_argument("pack_masks: inconsistent mask shapes");
    std::memcpy(out.data() + i * h * w, m.data(), static_cast<std::size_t>(h * w) * sizeof(double));
  }
  return out;
}

}  // namespace ssda2
