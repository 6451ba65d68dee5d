#include "ssda2/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace ssda2 {

namespace {

cv::Mat blur64(const cv::Mat& m, double sigma) {
  cv::Mat out;
  cv::GaussianBlur(m, out, cv::Size(0, 0), sigma, sigma);
  return out;
}

cv::Mat resize64(const cv::Mat& m, int h, int w, int interp = cv::INTER_LINEAR) {
  cv::Mat out;
  cv::resize(m, out, cv::Size(w, h), 0, 0, interp);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ImagePatch apply_domain(const ImagePatch& patch, const DomainSpec& spec) {
  ImagePatch out = patch;
  const std::int64_t h = patch.height(), w = patch.width(), c = patch.channels();
  if (c != 3) throw std::invalid_argument("apply_domain: expects RGB patch");
  bool affine = false, powd = false;
  for (int ch = 0; ch < 3; ++ch) {
    affine = affine || spec.gain[ch] != 1.0 || spec.bias[ch] != 0.0;
    powd = powd || spec.gamma[ch] != 1.0;
  }
  if (affine || powd) {
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        for (int ch = 0; ch < 3; ++ch) {
          double v = out.pixels.at3(y, x, ch);
          if (spec.gamma[ch] != 1.0) v = std::pow(v, spec.gamma[ch]);
          v = spec.gain[ch] * v + spec.bias[ch];
          out.pixels.at3(y, x, ch) = std::clamp(v, 0.0, 1.0);
        }
  }
  if (spec.blur_sigma > 0.0) out = mat_to_patch(blur64(patch_to_mat(out), spec.blur_sigma),
                                                out.source_id);
  return out;
}

std::vector<std::int64_t> tile_anchors(std::int64_t extent, std::int64_t patch,
                                       std::int64_t stride) {
  if (stride < 1) throw std::invalid_argument("tile_anchors: stride must be >= 1");
  if (extent < patch)
    throw std::invalid_argument("tile_anchors: extent " + std::to_string(extent) +
                                " smaller than patch " + std::to_string(patch));
  const std::int64_t last = extent - patch;
  const std::int64_t count = last / stride + 1;
  std::vector<std::int64_t> anchors(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count - 1; ++i) anchors[static_cast<std::size_t>(i)] = i * stride;
  anchors[static_cast<std::size_t>(count - 1)] = last;  // border anchored, no padding
  return anchors;
}

namespace {

template <typename CropFn>
void tile_impl(std::int64_t h, std::int64_t w, std::int64_t patch, std::int64_t stride,
               CropFn&& crop) {
  const auto rows = tile_anchors(h, patch, stride);
  const auto cols = tile_anchors(w, patch, stride);
  for (const auto r : rows)
    for (const auto c : cols) crop(r, c);
}

}  // namespace

std::vector<ImagePatch> tile_scene(const ImagePatch& scene, std::int64_t patch,
                                   std::int64_t stride, std::int64_t downsample) {
  if (downsample < 1) throw std::invalid_argument("tile_scene: downsample must be >= 1");
  ImagePatch src = scene;
  if (downsample > 1) {
    const int h = static_cast<int>(scene.height() / downsample);
    const int w = static_cast<int>(scene.width() / downsample);
    src = mat_to_patch(resize64(patch_to_mat(scene), h, w, cv::INTER_AREA), scene.source_id);
  }
  std::vector<ImagePatch> out;
  tile_impl(src.height(), src.width(), patch, stride, [&](std::int64_t r, std::int64_t c) {
    ImagePatch p = make_patch(patch, patch, src.source_id);
    for (std::int64_t y = 0; y < patch; ++y)
      for (std::int64_t x = 0; x < patch; ++x)
        for (std::int64_t ch = 0; ch < src.channels(); ++ch)
          p.pixels.at3(y, x, ch) = src.pixels.at3(r + y, c + x, ch);
    p.origin = {r, c};
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<Mask> tile_mask(const Mask& mask, std::int64_t patch, std::int64_t stride,
                            std::int64_t downsample) {
  if (downsample < 1) throw std::invalid_argument("tile_mask: downsample must be >= 1");
  Mask src = mask;
  if (downsample > 1) {
    const std::int64_t h = mask.dim(0) / downsample, w = mask.dim(1) / downsample;
    Mask ds({h, w});
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) ds.at2(y, x) = mask.at2(y * downsample, x * downsample);
    src = std::move(ds);
  }
  std::vector<Mask> out;
  tile_impl(src.dim(0), src.dim(1), patch, stride, [&](std::int64_t r, std::int64_t c) {
    Mask m({patch, patch});
    for (std::int64_t y = 0; y < patch; ++y)
      for (std::int64_t x = 0; x < patch; ++x) m.at2(y, x) = src.at2(r + y, c + x);
    out.push_back(std::move(m));
  });
  return out;
}

cv::Mat clip16to8(const cv::Mat& scene, double clip_fraction) {
  if (scene.empty()) throw std::invalid_argument("clip16to8: empty raster");
  if (!(clip_fraction > 0.0 && clip_fraction < 1.0))
    throw std::invalid_argument("clip16to8: clip_fraction must be in (0,1)");
  if (scene.depth() != CV_16U) throw std::invalid_argument("clip16to8: expects 16-bit raster");

  std::vector<cv::Mat> channels;
  cv::split(scene, channels);
  std::vector<cv::Mat> out8;
  for (auto& ch : channels) {
    std::vector<std::uint16_t> vals;
    vals.reserve(static_cast<std::size_t>(ch.total()));
    for (int y = 0; y < ch.rows; ++y) {
      const std::uint16_t* row = ch.ptr<std::uint16_t>(y);
      vals.insert(vals.end(), row, row + ch.cols);
    }
    std::sort(vals.begin(), vals.end());
    const auto n = static_cast<std::int64_t>(vals.size());
    const auto idx = static_cast<std::int64_t>(
        std::llround((1.0 - clip_fraction) * static_cast<double>(n - 1)));
    const double q = vals[static_cast<std::size_t>(std::clamp<std::int64_t>(idx, 0, n - 1))];

    cv::Mat o(ch.rows, ch.cols, CV_8UC1);
    if (vals.front() == vals.back()) {
      // Degenerate constant channel carries no radiometric information.
      o.setTo(0);
    } else {
      for (int y = 0; y < ch.rows; ++y) {
        const std::uint16_t* src = ch.ptr<std::uint16_t>(y);
        unsigned char* dst = o.ptr<unsigned char>(y);
        for (int x = 0; x < ch.cols; ++x) {
          const double v = std::min(static_cast<double>(src[x]), q);
          dst[x] = static_cast<unsigned char>(std::lround(255.0 * v / q));
        }
      }
    }
    out8.push_back(std::move(o));
  }
  cv::Mat merged;
  cv::merge(out8, merged);
  return merged;
}

ViewParams sample_view_params(std::int64_t side, Rng& rng) {
  ViewParams p;
  p.scale = rng.uniform(0.8, 1.2);
  if (p.scale >= 1.0) {
    const std::int64_t resized = std::llround(static_cast<double>(side) * p.scale);
    const std::int64_t room = std::max<std::int64_t>(resized - side, 0);
    p.off_y = room > 0 ? rng.uniform_int(room + 1) : 0;
    p.off_x = room > 0 ? rng.uniform_int(room + 1) : 0;
  } else {
    const std::int64_t window =
        std::max<std::int64_t>(std::llround(static_cast<double>(side) * p.scale), 1);
    const std::int64_t room = side - window;
    p.off_y = room > 0 ? rng.uniform_int(room + 1) : 0;
    p.off_x = room > 0 ? rng.uniform_int(room + 1) : 0;
  }
  p.sigma = rng.bernoulli(0.5) ? rng.uniform(0.0, 1.5) : 0.0;
  return p;
}

ImagePatch apply_view(const ImagePatch& patch, const ViewParams& params) {
  const std::int64_t side = patch.height();
  if (patch.width() != side) throw std::invalid_argument("apply_view: expects square patch");
  ImagePatch view = patch;
  if (params.scale > 1.0) {
    const int resized = static_cast<int>(std::llround(static_cast<double>(side) * params.scale));
    if (resized != side) {
      cv::Mat big = resize64(patch_to_mat(patch), resized, resized);
      cv::Mat crop = big(cv::Rect(static_cast<int>(params.off_x), static_cast<int>(params.off_y),
                                  static_cast<int>(side), static_cast<int>(side)))
                         .clone();
      view = mat_to_patch(crop, patch.source_id);
    }
  } else if (params.scale < 1.0) {
    const int window =
        std::max<int>(static_cast<int>(std::llround(static_cast<double>(side) * params.scale)), 1);
    cv::Mat m = patch_to_mat(patch);
    cv::Mat crop = m(cv::Rect(static_cast<int>(params.off_x), static_cast<int>(params.off_y),
                              window, window));
    view = mat_to_patch(resize64(crop, static_cast<int>(side), static_cast<int>(side)),
                        patch.source_id);
  }
  if (params.sigma > 1e-12)
    view = mat_to_patch(blur64(patch_to_mat(view), params.sigma), patch.source_id);
  view.origin = patch.origin;
  return view;
}

std::pair<ImagePatch, ImagePatch> augment_twin(const ImagePatch& patch, std::uint64_t seed) {
  if (patch.height() < 8 || patch.width() < 8)
    throw std::invalid_argument("augment_twin: patch side must be >= 8");
  Rng rng(derive_seed(seed, 0x7477696eULL));
  const ViewParams p1 = sample_view_params(patch.height(), rng);
  const ViewParams p2 = sample_view_params(patch.height(), rng);
  return {apply_view(patch, p1), apply_view(patch, p2)};
}

TrainTriplet sample_triplet(const std::vector<ImagePatch>& pool, int batch, Rng& rng) {
  if (pool.empty()) throw std::invalid_argument("sample_triplet: empty pool");
  TrainTriplet t;
  for (int i = 0; i < batch; ++i) {
    const auto ia = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(pool.size())));
    const auto ib = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(pool.size())));
    auto [v1, v2] = augment_twin(pool[ia], rng.raw());
    t.a1.push_back(std::move(v1));
    t.a2.push_back(std::move(v2));
    t.b.push_back(pool[ib]);
  }
  return t;
}

void gen_content(std::int64_t n, std::int64_t size, Rng& rng, std::vector<ImagePatch>& patches,
                 std::vector<Mask>& masks) {
  for (std::int64_t i = 0; i < n; ++i) {
    // Low-frequency textured background, identical across channels so the
    // content itself is style-neutral.
    cv::Mat low(8, 8, CV_64FC1);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) low.at<double>(y, x) = rng.uniform(0.35, 0.65);
    cv::Mat base = resize64(low, static_cast<int>(size), static_cast<int>(size));

    ImagePatch p = make_patch(size, size, "synth");
    Mask m({size, size});
    Tensor gray({size, size});
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x)
        gray.at2(y, x) = std::clamp(base.at<double>(static_cast<int>(y), static_cast<int>(x)) +
                                        rng.normal(0.0, 0.02),
                                    0.0, 1.0);

    const int n_shapes = 2 + static_cast<int>(rng.uniform_int(4));
    for (int s = 0; s < n_shapes; ++s) {
      const double delta = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.2, 0.35);
      if (rng.bernoulli(0.5)) {
        const double cy = rng.uniform(0.15, 0.85) * static_cast<double>(size);
        const double cx = rng.uniform(0.15, 0.85) * static_cast<double>(size);
        const double r = rng.uniform(0.08, 0.2) * static_cast<double>(size);
        for (std::int64_t y = 0; y < size; ++y)
          for (std::int64_t x = 0; x < size; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            if (dy * dy + dx * dx <= r * r) {
              gray.at2(y, x) = std::clamp(gray.at2(y, x) + delta, 0.0, 1.0);
              m.at2(y, x) = 1.0;
            }
          }
      } else {
        const auto y0 = static_cast<std::int64_t>(rng.uniform(0.1, 0.6) * static_cast<double>(size));
        const auto x0 = static_cast<std::int64_t>(rng.uniform(0.1, 0.6) * static_cast<double>(size));
        const auto hh = static_cast<std::int64_t>(rng.uniform(0.12, 0.35) * static_cast<double>(size));
        const auto ww = static_cast<std::int64_t>(rng.uniform(0.12, 0.35) * static_cast<double>(size));
        for (std::int64_t y = y0; y < std::min(size, y0 + hh); ++y)
          for (std::int64_t x = x0; x < std::min(size, x0 + ww); ++x) {
            gray.at2(y, x) = std::clamp(gray.at2(y, x) + delta, 0.0, 1.0);
            m.at2(y, x) = 1.0;
          }
      }
    }
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c) p.pixels.at3(y, x, c) = gray.at2(y, x);
    patches.push_back(std::move(p));
    masks.push_back(std::move(m));
  }
}

std::vector<DomainSpec> make_domain_specs(int n_domains, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x646f6dULL));
  std::vector<DomainSpec> specs;
  const double phase[3] = {0.0, 2.0943951023931953, 4.1887902047863905};
  for (int k = 0; k < n_domains; ++k) {
    const double ang =
        6.283185307179586 * static_cast<double>(k) / static_cast<double>(n_domains) +
        rng.uniform(-0.15, 0.15);
    DomainSpec s;
    for (int c = 0; c < 3; ++c) {
      s.gain[c] = 1.0 + 0.25 * std::cos(ang + phase[c]);
      s.bias[c] = 0.05 * std::sin(ang + 1.3 + phase[c]);
      s.gamma[c] = std::exp(0.25 * std::cos(ang + 2.1 + phase[c]));
    }
    s.blur_sigma = (k % 2 == 1) ? 0.5 : 0.0;
    specs.push_back(s);
  }
  return specs;
}

SynthDataset make_synth_dataset(int n_domains, std::int64_t n_patches, std::uint64_t seed,
                                std::int64_t size) {
  if (n_domains < 2) throw std::invalid_argument("make_synth_dataset: need at least 2 domains");
  SynthDataset ds;
  ds.specs = make_domain_specs(n_domains, seed);
  Rng rng(derive_seed(seed, 0x636f6e74ULL));
  std::vector<ImagePatch> content;
  gen_content(n_patches, size, rng, content, ds.masks);
  for (std::int64_t i = 0; i < n_patches; ++i) {
    const int d = static_cast<int>(i % n_domains);
    ds.patches.push_back(apply_domain(content[static_cast<std::size_t>(i)],
                                      ds.specs[static_cast<std::size_t>(d)]));
    ds.domain_labels.push_back(d);
  }
  return ds;
}

SceneManifest SceneManifest::parse(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  SceneManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key == "patch") m.patch = std::stoll(val);
    else if (key == "stride") m.stride = std::stoll(val);
    else if (key == "downsample") m.downsample = std::stoll(val);
    else if (key == "clip") m.clip = std::stod(val);
    else if (key == "scene") {
      SceneEntry e;
      std::stringstream ss(val);
      std::string field;
      int idx = 0;
      while (std::getline(ss, field, ',')) {
        field = trim(field);
        if (idx == 0) e.image_path = field;
        else if (idx == 1) e.mask_path = field;
        else if (idx == 2) e.source_id = field;
        ++idx;
      }
      if (e.source_id.empty()) e.source_id = e.image_path;
      m.scenes.push_back(std::move(e));
    } else {
      throw std::runtime_error("manifest: unknown key '" + key + "'");
    }
  }
  for (const auto& e : m.scenes) {
    if (!fs::exists(e.image_path))
      throw std::runtime_error("manifest: missing scene file " + e.image_path);
    if (!e.mask_path.empty() && !fs::exists(e.mask_path))
      throw std::runtime_error("manifest: missing mask file " + e.mask_path);
  }
  if (m.scenes.empty()) throw std::runtime_error("manifest: no scenes listed");
  return m;
}

namespace {

ImagePatch scene_to_patch(const std::string& path, double clip) {
  cv::Mat raw = load_raster(path);
  if (raw.depth() == CV_16U) raw = clip16to8(raw, clip);
  if (raw.depth() != CV_8U) throw std::runtime_error("unsupported raster depth: " + path);
  cv::Mat rgb;
  if (raw.channels() == 1) cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB);
  else if (raw.channels() == 3) cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
  else if (raw.channels() == 4) cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB);
  else throw std::runtime_error("unsupported channel count: " + path);
  ImagePatch p = make_patch(rgb.rows, rgb.cols, path);
  for (int y = 0; y < rgb.rows; ++y) {
    const cv::Vec3b* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.cols; ++x)
      for (int c = 0; c < 3; ++c) p.pixels.at3(y, x, c) = row[x][c] / 255.0;
  }
  return p;
}

std::vector<std::string> sorted_images(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".png" || ext == ".PNG") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::vector<ImagePatch> load_patch_pool(const std::string& dir_or_manifest) {
  std::vector<ImagePatch> pool;
  if (fs::is_directory(dir_or_manifest)) {
    // A synth-gen output directory keeps images under patches/.
    const std::string dir = fs::exists(fs::path(dir_or_manifest) / "patches")
                                ? (fs::path(dir_or_manifest) / "patches").string()
                                : dir_or_manifest;
    for (const auto& f : sorted_images(dir)) pool.push_back(load_patch_png(f));
  } else if (fs::exists(dir_or_manifest)) {
    const SceneManifest m = SceneManifest::parse(dir_or_manifest);
    for (const auto& e : m.scenes) {
      const ImagePatch scene = scene_to_patch(e.image_path, m.clip);
      auto tiles = tile_scene(scene, m.patch, m.stride, m.downsample);
      for (auto& t : tiles) {
        t.source_id = e.source_id;
        pool.push_back(std::move(t));
      }
    }
  } else {
    throw std::runtime_error("no such data path: " + dir_or_manifest);
  }
  if (pool.empty()) throw std::runtime_error("no patches found in " + dir_or_manifest);
  return pool;
}

LabeledDataset load_labeled_dataset(const std::string& dir) {
  LabeledDataset ds;
  const fs::path root(dir);
  const fs::path pdir = fs::exists(root / "patches") ? root / "patches" : root;
  const fs::path mdir = root / "masks";
  if (!fs::is_directory(mdir))
    throw std::runtime_error("labeled dataset needs a masks/ directory under " + dir);
  for (const auto& f : sorted_images(pdir.string())) {
    const std::string stem = fs::path(f).stem().string();
    const fs::path mask_path = mdir / (stem + ".png");
    if (!fs::exists(mask_path))
      throw std::runtime_error("missing mask for patch " + stem);
    ds.patches.push_back(load_patch_png(f));
    ds.masks.push_back(load_mask_png(mask_path.string()));
    ds.names.push_back(stem);
  }
  if (ds.patches.empty()) throw std::runtime_error("no labeled patches in " + dir);
  const fs::path sidecar = root / "domains.tsv";
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    std::string name;
    int label;
    std::unordered_map<std::string, int> by_name;
    while (in >> name >> label) by_name[name] = label;
    for (const auto& stem : ds.names) {
      const auto it = by_name.find(stem);
      ds.groups.push_back(it == by_name.end() ? 0 : it->second);
    }
  }
  return ds;
}

}  // namespace ssda2
