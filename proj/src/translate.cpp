#include "ssda2/translate.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ssda2/train.hpp"

namespace ssda2 {

namespace {

void require_translatable(const ImagePatch& p, const char* role) {
  if (p.pixels.rank() != 3 || p.channels() != 3)
    throw std::invalid_argument(std::string("translate: ") + role +
                                " must be an (H,W,3) patch, got " + p.pixels.shape_str());
  if (p.height() != p.width())
    throw std::invalid_argument(std::string("translate: ") + role + " must be square, got " +
                                std::to_string(p.height()) + "x" + std::to_string(p.width()));
  try {
    check_patch_side(p.height());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("translate: ") + role + " unsupported: " + e.what());
  }
}

}  // namespace

Generator load_generator(const std::string& ckpt_path) {
  Trainer t = load_trainer(ckpt_path);
  return std::move(t.generator());
}

ImagePatch translate(const Generator& gen, const ImagePatch& content, const ImagePatch& style) {
  require_translatable(content, "content");
  require_translatable(style, "style");
  NoGradGuard ng;
  const Var c = constant(pack_nchw({content}));
  const Var s = constant(pack_nchw({style}));
  const Var out = gen.decode(gen.mix(gen.encode(c), gen.encode(s)));
  ImagePatch result = unpack_nchw(out->value)[0];
  result.source_id = content.source_id;
  result.origin = content.origin;
  return result;
}

AugmentHook::AugmentHook(Generator gen, std::vector<ImagePatch> reference_pool, double p,
                         std::uint64_t seed)
    : gen_(std::move(gen)),
      pool_(std::move(reference_pool)),
      p_(p),
      rng_(derive_seed(seed, 0x617567686bULL)) {
  if (pool_.empty()) throw std::invalid_argument("AugmentHook: reference pool is empty");
  if (!(p_ >= 0.0 && p_ <= 1.0))
    throw std::invalid_argument("AugmentHook: p must be in [0,1], got " + std::to_string(p_));
  for (const auto& r : pool_) require_translatable(r, "reference");
}

std::pair<ImagePatch, Mask> AugmentHook::operator()(const ImagePatch& patch, const Mask& mask) {
  return {(*this)(patch), mask};
}

ImagePatch AugmentHook::operator()(const ImagePatch& patch) {
  ++calls_;
  if (!rng_.bernoulli(p_)) return patch;
  ++applied_;
  const auto idx =
      static_cast<std::size_t>(rng_.uniform_int(static_cast<std::int64_t>(pool_.size())));
  return translate(gen_, patch, pool_[idx]);
}

ImagePatch translate_grid(const Generator& gen, const std::vector<ImagePatch>& patches) {
  if (patches.empty()) throw std::invalid_argument("translate_grid: patch list is empty");
  const std::int64_t side = patches.front().height();
  for (const auto& p : patches) {
    require_translatable(p, "grid patch");
    if (p.height() != side)
      throw std::invalid_argument("translate_grid: patches must share one shape, got sides " +
                                  std::to_string(side) + " and " + std::to_string(p.height()));
  }
  const auto n = static_cast<std::int64_t>(patches.size());
  ImagePatch grid = make_patch(n * side, n * side, "grid");
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      const ImagePatch& cell = (i == j)
          ? patches[static_cast<std::size_t>(i)]
          : translate(gen, patches[static_cast<std::size_t>(i)], patches[static_cast<std::size_t>(j)]);
      for (std::int64_t y = 0; y < side; ++y)
        for (std::int64_t x = 0; x < side; ++x)
          for (std::int64_t c = 0; c < 3; ++c)
            grid.pixels.at3(i * side + y, j * side + x, c) = cell.pixels.at3(y, x, c);
    }
  }
  return grid;
}

double edge_correlation(const ImagePatch& a, const ImagePatch& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw std::invalid_argument("edge_correlation: shape mismatch " + a.pixels.shape_str() +
                                " vs " + b.pixels.shape_str());
  const std::int64_t h = a.height(), w = a.width();

  // Channel-mean image, then central-difference gradient magnitude with
  // clamped borders.
  const auto edge_map = [h, w](const ImagePatch& p) {
    const std::int64_t ch = p.channels();
    std::vector<double> gray(static_cast<std::size_t>(h * w), 0.0);
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::int64_t c = 0; c < ch; ++c) s += p.pixels.at3(y, x, c);
        gray[static_cast<std::size_t>(y * w + x)] = s / static_cast<double>(ch);
      }
    std::vector<double> mag(gray.size(), 0.0);
    const auto at = [&gray, h, w](std::int64_t y, std::int64_t x) {
      y = std::max<std::int64_t>(0, std::min(h - 1, y));
      x = std::max<std::int64_t>(0, std::min(w - 1, x));
      return gray[static_cast<std::size_t>(y * w + x)];
    };
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const double gx = 0.5 * (at(y, x + 1) - at(y, x - 1));
        const double gy = 0.5 * (at(y + 1, x) - at(y - 1, x));
        mag[static_cast<std::size_t>(y * w + x)] = std::hypot(gx, gy);
      }
    return mag;
  };

  const std::vector<double> ma = edge_map(a), mb = edge_map(b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    dot += ma[i] * mb[i];
    na += ma[i] * ma[i];
    nb += mb[i] * mb[i];
  }
  constexpr double kFlat = 1e-24;
  if (na < kFlat && nb < kFlat) return 1.0;  // two featureless images agree
  if (na < kFlat || nb < kFlat) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace ssda2
