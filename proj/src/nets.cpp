#include "ssda2/nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace ssda2 {

namespace {

bool spatial_trivial(const Var& x) { return x->value.dim(2) * x->value.dim(3) == 1; }

Tensor he_conv_init(int out_c, int in_c, int k, Rng& rng) {
  Tensor w({out_c, in_c, k, k});
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
  return w;
}

Tensor linear_init(int out_c, int in_c, Rng& rng) {
  Tensor w({out_c, in_c});
  const double stddev = std::sqrt(1.0 / static_cast<double>(in_c));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
  return w;
}

Var conv_leaf(int out_c, int in_c, Rng& rng, bool trainable = true) {
  return make_leaf(he_conv_init(out_c, in_c, 3, rng), trainable);
}

Var bias_leaf(int out_c, bool trainable = true) {
  return make_leaf(Tensor::zeros({out_c}), trainable);
}

/// conv3x3 -> instance norm -> 2x max pool -> ReLU. Norm and pool are
/// skipped once the spatial extent is 1x1, where neither is defined /
/// useful; `pooled` reports what happened so a decoder can mirror it.
Var trunk_block(const Var& x, const Var& w, const Var& b, bool& pooled) {
  Var h = conv2d(x, w, b);
  if (!spatial_trivial(h)) h = instance_norm(h);
  pooled = h->value.dim(2) > 1;
  if (pooled) h = maxpool2(h);
  return relu(h);
}

}  // namespace

void check_patch_side(std::int64_t side) {
  if (side >= 16 && side % 16 == 0) return;
  if (side >= 1 && side < 16 && (side & (side - 1)) == 0) return;
  throw std::invalid_argument(
      "patch side must be divisible by 16 (or a power of two below 16 for reduced test "
      "geometries); got " +
      std::to_string(side));
}

Var instance_norm(const Var& x, double eps) {
  const Var mu = mean_spatial(x);
  const Var centered = bc_add(x, scale(mu, -1.0));
  const Var var = mean_spatial(square(centered));
  return bc_mul(centered, rsqrt_eps(var, eps));
}

Var adain(const Var& content, const Var& style, double eps) {
  const Tensor& cv = content->value;
  const Tensor& sv = style->value;
  if (cv.rank() != 4 || sv.rank() != 4 || cv.dim(0) != sv.dim(0) || cv.dim(1) != sv.dim(1))
    throw std::invalid_argument("adain: batch/channel mismatch " + cv.shape_str() + " vs " +
                                sv.shape_str());
  const Var mu_c = mean_spatial(content);
  const Var centered = bc_add(content, scale(mu_c, -1.0));
  const Var var_c = mean_spatial(square(centered));
  const Var mu_s = mean_spatial(style);
  const Var centered_s = bc_add(style, scale(mu_s, -1.0));
  const Var var_s = mean_spatial(square(centered_s));
  const Var normed = bc_mul(centered, rsqrt_eps(var_c, eps));
  return bc_add(bc_mul(normed, sqrt_eps(var_s, eps)), mu_s);
}

// ---- Encoder ----

Encoder::Encoder(EncoderConfig cfg, int in_channels, std::uint64_t seed)
    : cfg_(cfg), in_channels_(in_channels) {
  Rng rng(derive_seed(seed, 0x656e63ULL));
  int c_in = in_channels;
  for (int i = 0; i < 4; ++i) {
    const int c_out = cfg_.block_channels[static_cast<std::size_t>(i)];
    if (c_out < 1) throw std::invalid_argument("Encoder: block channels must be positive");
    w_[static_cast<std::size_t>(i)] = conv_leaf(c_out, c_in, rng);
    b_[static_cast<std::size_t>(i)] = bias_leaf(c_out);
    c_in = c_out;
  }
}

Encoded Encoder::forward(const Var& x) const {
  const Tensor& xv = x->value;
  if (xv.rank() != 4) throw std::invalid_argument("Encoder: expects (N,C,H,W), got " + xv.shape_str());
  if (xv.dim(1) != in_channels_)
    throw std::invalid_argument("Encoder: expected " + std::to_string(in_channels_) +
                                " input channels, got " + std::to_string(xv.dim(1)));
  if (xv.dim(2) != xv.dim(3))
    throw std::invalid_argument("Encoder: expects square patches, got " + xv.shape_str());
  check_patch_side(xv.dim(2));

  Encoded e;
  Var h = x;
  for (int i = 0; i < 4; ++i) {
    bool pooled = false;
    h = trunk_block(h, w_[static_cast<std::size_t>(i)], b_[static_cast<std::size_t>(i)], pooled);
    e.pooled[static_cast<std::size_t>(i)] = pooled;
    if (i < 3) e.skips[static_cast<std::size_t>(i)] = h;
  }
  e.bottleneck = h;
  return e;
}

std::vector<Var> Encoder::parameters() const {
  std::vector<Var> p;
  for (int i = 0; i < 4; ++i) {
    p.push_back(w_[static_cast<std::size_t>(i)]);
    p.push_back(b_[static_cast<std::size_t>(i)]);
  }
  return p;
}

std::vector<std::pair<std::string, Var>> Encoder::named_parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Var>> p;
  for (int i = 0; i < 4; ++i) {
    p.emplace_back(prefix + ".block" + std::to_string(i + 1) + ".w",
                   w_[static_cast<std::size_t>(i)]);
    p.emplace_back(prefix + ".block" + std::to_string(i + 1) + ".b",
                   b_[static_cast<std::size_t>(i)]);
  }
  return p;
}

// ---- Decoder ----

Decoder::Decoder(EncoderConfig cfg, int out_channels, std::uint64_t seed)
    : cfg_(cfg), out_channels_(out_channels) {
  Rng rng(derive_seed(seed, 0x646563ULL));
  const auto& c = cfg_.block_channels;
  // Stage s consumes the upsampled running feature concatenated with the
  // encoder skip of the matching scale.
  const int in0 = c[3] + c[2], in1 = c[2] + c[1], in2 = c[1] + c[0];
  w_[0] = conv_leaf(c[2], in0, rng);
  b_[0] = bias_leaf(c[2]);
  w_[1] = conv_leaf(c[1], in1, rng);
  b_[1] = bias_leaf(c[1]);
  w_[2] = conv_leaf(c[0], in2, rng);
  b_[2] = bias_leaf(c[0]);
  w_[3] = conv_leaf(c[3], c[0], rng);  // light full-resolution stage
  b_[3] = bias_leaf(c[3]);
  w_[4] = conv_leaf(out_channels, c[3], rng);
  b_[4] = bias_leaf(out_channels);
}

Var Decoder::forward(const Encoded& e) const {
  if (!e.bottleneck) throw std::invalid_argument("Decoder: undefined bottleneck");
  Var h = e.bottleneck;
  for (int s = 0; s < 3; ++s) {
    if (e.pooled[static_cast<std::size_t>(3 - s)]) h = upsample2(h);
    const Var& skip = e.skips[static_cast<std::size_t>(2 - s)];
    if (!skip) throw std::invalid_argument("Decoder: missing skip feature");
    h = concat_channels(h, skip);  // throws on mismatched skip shapes
    h = conv2d(h, w_[static_cast<std::size_t>(s)], b_[static_cast<std::size_t>(s)]);
    if (!spatial_trivial(h)) h = instance_norm(h);
    h = relu(h);
  }
  if (e.pooled[0]) h = upsample2(h);
  h = conv2d(h, w_[3], b_[3]);
  if (!spatial_trivial(h)) h = instance_norm(h);
  h = relu(h);
  h = conv2d(h, w_[4], b_[4]);
  return sigmoid(h);
}

std::vector<Var> Decoder::parameters() const {
  std::vector<Var> p;
  for (int i = 0; i < 5; ++i) {
    p.push_back(w_[static_cast<std::size_t>(i)]);
    p.push_back(b_[static_cast<std::size_t>(i)]);
  }
  return p;
}

std::vector<std::pair<std::string, Var>> Decoder::named_parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Var>> p;
  for (int i = 0; i < 5; ++i) {
    p.emplace_back(prefix + ".stage" + std::to_string(i + 1) + ".w",
                   w_[static_cast<std::size_t>(i)]);
    p.emplace_back(prefix + ".stage" + std::to_string(i + 1) + ".b",
                   b_[static_cast<std::size_t>(i)]);
  }
  return p;
}

// ---- Generator ----

Generator::Generator(GeneratorConfig cfg, std::uint64_t seed)
    : cfg_(cfg),
      enc_(cfg.encoder, 3, derive_seed(seed, 1)),
      dec_(cfg.encoder, 3, derive_seed(seed, 2)) {}

Encoded Generator::mix(const Encoded& content, const Encoded& style) const {
  Encoded m;
  m.bottleneck = adain(content.bottleneck, style.bottleneck);
  for (int i = 0; i < 3; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    m.skips[idx] = cfg_.adain_skips ? adain(content.skips[idx], style.skips[idx])
                                    : content.skips[idx];
  }
  m.pooled = content.pooled;
  return m;
}

std::pair<Var, Var> Generator::translate_pair(const Var& content, const Var& style) const {
  const Encoded ec = encode(content);
  const Encoded es = encode(style);
  return {decode(mix(ec, es)), decode(mix(es, ec))};
}

std::vector<Var> Generator::parameters() const {
  std::vector<Var> p = enc_.parameters();
  const auto d = dec_.parameters();
  p.insert(p.end(), d.begin(), d.end());
  return p;
}

std::vector<std::pair<std::string, Var>> Generator::named_parameters() const {
  auto p = enc_.named_parameters("gen.enc");
  const auto d = dec_.named_parameters("gen.dec");
  p.insert(p.end(), d.begin(), d.end());
  return p;
}

// ---- Discriminator ----

Discriminator::Discriminator(EncoderConfig cfg, std::uint64_t seed)
    : trunk_(cfg, 3, derive_seed(seed, 3)) {
  Rng rng(derive_seed(seed, 4));
  head_w_ = make_leaf(linear_init(1, cfg.block_channels[3], rng), true);
  head_b_ = make_leaf(Tensor::zeros({1}), true);
}

DiscriminatorOutput Discriminator::forward(const Var& x) const {
  const Encoded e = trunk_.forward(x);
  const Var pooled = mean_spatial(e.bottleneck);  // (N, C4)
  DiscriminatorOutput out;
  out.realness = linear(pooled, head_w_, head_b_);
  out.embedding = l2_normalize_rows(pooled);
  return out;
}

std::vector<Var> Discriminator::parameters() const {
  std::vector<Var> p = trunk_.parameters();
  p.push_back(head_w_);
  p.push_back(head_b_);
  return p;
}

std::vector<std::pair<std::string, Var>> Discriminator::named_parameters() const {
  auto p = trunk_.named_parameters("dis.trunk");
  p.emplace_back("dis.head.w", head_w_);
  p.emplace_back("dis.head.b", head_b_);
  return p;
}

double similarity(const Discriminator& f, const ImagePatch& a, const ImagePatch& b) {
  NoGradGuard ng;
  const Var xa = constant(pack_nchw({a}));
  const Var xb = constant(pack_nchw({b}));
  const Var ea = f.forward(xa).embedding;
  const Var eb = f.forward(xb).embedding;
  return rowdot(ea, eb)->value[0];
}

// ---- PerceptualNet ----

PerceptualNet::PerceptualNet(PerceptualConfig cfg, int in_channels, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg_.tap_block < 1 || cfg_.tap_block > 3)
    throw std::invalid_argument("PerceptualNet: tap_block must be 1..3");
  Rng rng(derive_seed(seed, 0x706572ULL));
  int c_in = in_channels;
  for (int i = 0; i < 3; ++i) {
    const int c_out = cfg_.block_channels[static_cast<std::size_t>(i)];
    w_[static_cast<std::size_t>(i)] = conv_leaf(c_out, c_in, rng, /*trainable=*/false);
    b_[static_cast<std::size_t>(i)] = bias_leaf(c_out, /*trainable=*/false);
    c_in = c_out;
  }
  if (!cfg_.weights_path.empty()) {
    std::ifstream probe(cfg_.weights_path, std::ios::binary);
    if (probe) {
      load_params(parameters(), cfg_.weights_path);
      pretrained_ = true;
    } else {
      std::cerr << "[perceptual] weights file '" << cfg_.weights_path
                << "' not found; falling back to fixed random features\n";
    }
  }
}

Var PerceptualNet::features(const Var& x) const {
  Var h = x;
  for (int i = 0; i < cfg_.tap_block; ++i) {
    h = conv2d(h, w_[static_cast<std::size_t>(i)], b_[static_cast<std::size_t>(i)]);
    h = relu(h);
    if (h->value.dim(2) > 1) h = maxpool2(h);
  }
  return h;
}

std::vector<Var> PerceptualNet::parameters() const {
  std::vector<Var> p;
  for (int i = 0; i < 3; ++i) {
    p.push_back(w_[static_cast<std::size_t>(i)]);
    p.push_back(b_[static_cast<std::size_t>(i)]);
  }
  return p;
}

// ---- parameter serialization ----

namespace {
constexpr char kParamMagic[8] = {'S', 'S', 'D', 'A', '2', 'P', 'A', 'R'};
}

void save_params(const std::vector<Var>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write parameter file: " + path);
  out.write(kParamMagic, 8);
  const std::uint64_t count = params.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& p : params) {
    const Tensor& t = p->value;
    const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
    out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (int d = 0; d < t.rank(); ++d) {
      const std::int64_t dim = t.dim(d);
      out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    }
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("short write to parameter file: " + path);
}

void load_params(const std::vector<Var>& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read parameter file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kParamMagic, 8) != 0)
    throw std::runtime_error("not a parameter file: " + path);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (count != params.size())
    throw std::runtime_error("parameter count mismatch in " + path + ": file has " +
                             std::to_string(count) + ", model has " +
                             std::to_string(params.size()));
  for (const auto& p : params) {
    Tensor& t = p->value;
    std::uint32_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    if (rank != static_cast<std::uint32_t>(t.rank()))
      throw std::runtime_error("parameter rank mismatch in " + path);
    for (int d = 0; d < t.rank(); ++d) {
      std::int64_t dim = 0;
      in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
      if (dim != t.dim(d))
        throw std::runtime_error("parameter shape mismatch in " + path + ": expected " +
                                 t.shape_str());
    }
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!in) throw std::runtime_error("truncated parameter file: " + path);
}

std::uint64_t params_fingerprint(const std::vector<Var>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](const unsigned char* bytes, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params) {
    const Tensor& t = p->value;
    mix(reinterpret_cast<const unsigned char*>(t.data()),
        static_cast<std::size_t>(t.size()) * sizeof(double));
  }
  return h;
}

}  // namespace ssda2
