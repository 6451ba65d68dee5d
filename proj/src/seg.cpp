#include "ssda2/seg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace ssda2 {

double iou(const Mask& pred, const Mask& gt, bool both_empty_is_one) {
  if (!pred.same_shape(gt))
    throw std::invalid_argument("iou: shape mismatch " + pred.shape_str() + " vs " +
                                gt.shape_str());
  std::int64_t inter = 0, uni = 0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0.0;
    const bool g = gt[i] != 0.0;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return both_empty_is_one ? 1.0 : std::nan("");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double style_gap(const ImagePatch& a, const ImagePatch& b) {
  if (a.channels() != b.channels())
    throw std::invalid_argument("style_gap: channel count mismatch");
  const auto stats = [](const ImagePatch& p, std::int64_t c) {
    const std::int64_t n = p.height() * p.width();
    double mean = 0.0;
    for (std::int64_t y = 0; y < p.height(); ++y)
      for (std::int64_t x = 0; x < p.width(); ++x) mean += p.pixels.at3(y, x, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t y = 0; y < p.height(); ++y)
      for (std::int64_t x = 0; x < p.width(); ++x) {
        const double d = p.pixels.at3(y, x, c) - mean;
        var += d * d;
      }
    return std::pair<double, double>(mean, std::sqrt(var / static_cast<double>(n)));
  };
  double gap = 0.0;
  for (std::int64_t c = 0; c < a.channels(); ++c) {
    const auto [ma, sa] = stats(a, c);
    const auto [mb, sb] = stats(b, c);
    gap += std::abs(ma - mb) + std::abs(sa - sb);
  }
  return gap;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---- SegNet ----

namespace {

Tensor he_conv_init(int out_c, int in_c, int k, Rng& rng) {
  Tensor w({out_c, in_c, k, k});
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
  return w;
}

Var conv_leaf(int out_c, int in_c, int k, Rng& rng) {
  return make_leaf(he_conv_init(out_c, in_c, k, rng), true);
}

Var bias_leaf(int out_c) { return make_leaf(Tensor::zeros({out_c}), true); }

}  // namespace

SegNet::SegNet(std::array<int, 4> block_channels, std::uint64_t seed)
    : channels_(block_channels) {
  for (int c : channels_)
    if (c < 1) throw std::invalid_argument("SegNet: block channels must be positive");
  Rng rng(derive_seed(seed, 0x736567ULL));
  stem_w_ = conv_leaf(channels_[0], 3, 3, rng);
  stem_b_ = bias_leaf(channels_[0]);
  int c_in = channels_[0];
  for (std::size_t s = 0; s < 4; ++s) {
    const int c_out = channels_[s];
    res_w_[2 * s] = conv_leaf(c_out, c_in, 3, rng);
    res_b_[2 * s] = bias_leaf(c_out);
    res_w_[2 * s + 1] = conv_leaf(c_out, c_out, 3, rng);
    res_b_[2 * s + 1] = bias_leaf(c_out);
    if (c_in != c_out) {
      proj_w_[s] = conv_leaf(c_out, c_in, 1, rng);
      proj_b_[s] = bias_leaf(c_out);
    }
    c_in = c_out;
  }
  // Decoder stages fuse the upsampled deeper map with the same-scale skip.
  dec_w_[0] = conv_leaf(channels_[2], channels_[3] + channels_[2], 3, rng);
  dec_b_[0] = bias_leaf(channels_[2]);
  dec_w_[1] = conv_leaf(channels_[1], channels_[2] + channels_[1], 3, rng);
  dec_b_[1] = bias_leaf(channels_[1]);
  dec_w_[2] = conv_leaf(channels_[0], channels_[1] + channels_[0], 3, rng);
  dec_b_[2] = bias_leaf(channels_[0]);
  head_w_ = conv_leaf(1, channels_[0], 3, rng);
  head_b_ = bias_leaf(1);
}

Var SegNet::forward(const Var& x) const {
  const Tensor& xv = x->value;
  if (xv.rank() != 4 || xv.dim(1) != 3)
    throw std::invalid_argument("SegNet: expects (N,3,H,W), got " + xv.shape_str());
  if (xv.dim(2) != xv.dim(3) || xv.dim(2) < 8 || xv.dim(2) % 8 != 0)
    throw std::invalid_argument(
        "SegNet: patch side must be square and divisible by 8, got " + xv.shape_str());

  const auto stage = [this](const Var& in, std::size_t s) {
    Var h = relu(conv2d(in, res_w_[2 * s], res_b_[2 * s]));
    h = conv2d(h, res_w_[2 * s + 1], res_b_[2 * s + 1]);
    const Var idn = proj_w_[s] ? conv2d(in, proj_w_[s], proj_b_[s]) : in;
    return relu(add(h, idn));
  };

  Var h = relu(conv2d(x, stem_w_, stem_b_));
  const Var s0 = stage(h, 0);
  const Var s1 = stage(maxpool2(s0), 1);
  const Var s2 = stage(maxpool2(s1), 2);
  const Var bottom = stage(maxpool2(s2), 3);

  Var d = relu(conv2d(concat_channels(upsample2(bottom), s2), dec_w_[0], dec_b_[0]));
  d = relu(conv2d(concat_channels(upsample2(d), s1), dec_w_[1], dec_b_[1]));
  d = relu(conv2d(concat_channels(upsample2(d), s0), dec_w_[2], dec_b_[2]));
  return conv2d(d, head_w_, head_b_);
}

std::vector<Var> SegNet::parameters() const {
  std::vector<Var> out{stem_w_, stem_b_};
  for (std::size_t s = 0; s < 4; ++s) {
    out.push_back(res_w_[2 * s]);
    out.push_back(res_b_[2 * s]);
    out.push_back(res_w_[2 * s + 1]);
    out.push_back(res_b_[2 * s + 1]);
    if (proj_w_[s]) {
      out.push_back(proj_w_[s]);
      out.push_back(proj_b_[s]);
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    out.push_back(dec_w_[i]);
    out.push_back(dec_b_[i]);
  }
  out.push_back(head_w_);
  out.push_back(head_b_);
  return out;
}

std::int64_t SegNet::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p->value.size();
  return n;
}

// ---- SegTrainer ----

SegTrainer::SegTrainer(SegConfig cfg)
    : cfg_(cfg), net_(cfg.block_channels, cfg.seed) {
  if (cfg_.batch_size < 1) throw std::invalid_argument("SegConfig: batch_size must be >= 1");
  params_ = net_.parameters();
  opt_.kind = cfg_.optimizer;
  opt_.momentum = cfg_.momentum;
  opt_.init(params_);
}

double SegTrainer::train_step(const std::vector<ImagePatch>& patches,
                              const std::vector<Mask>& masks) {
  if (patches.empty() || patches.size() != masks.size())
    throw std::invalid_argument("SegTrainer: patch/mask batch mismatch");
  const double lr = poly_lr(iteration_, cfg_.total_iters, cfg_.base_lr, cfg_.poly_power);
  const Var x = constant(pack_nchw(patches));
  const Var target = constant(pack_masks(masks));
  zero_grad(params_);
  const Var loss = bce_with_logits(net_.forward(x), target);
  const double value = loss->value.item();
  if (!std::isfinite(value)) {
    if (!diag_dir_.empty()) {
      const fs::path root = fs::path(diag_dir_) / ("nonfinite_iter" + std::to_string(iteration_));
      std::error_code ec;
      fs::create_directories(root, ec);
      if (!ec)
        for (std::size_t i = 0; i < patches.size(); ++i)
          save_patch_png(patches[i], (root / ("patch_" + std::to_string(i) + ".png")).string());
    }
    throw std::runtime_error("non-finite segmentation loss at iteration " +
                             std::to_string(iteration_));
  }
  backward(loss);
  clip_grad_norm(params_, cfg_.max_grad_norm);
  opt_.step(params_, lr);
  ++iteration_;
  return value;
}

std::string SegTrainer::fit(const LabeledDataset& data, AugmentHook* hook,
                            const std::string& out_dir) {
  if (data.patches.empty() || data.patches.size() != data.masks.size())
    throw std::invalid_argument("SegTrainer::fit: dataset needs matching patches and masks");
  fs::create_directories(out_dir);
  if (diag_dir_.empty()) diag_dir_ = out_dir;
  const std::string ckpt_path = (fs::path(out_dir) / "seg_checkpoint.bin").string();
  const std::string log_path = (fs::path(out_dir) / "loss_log.tsv").string();

  const bool fresh_log = iteration_ == 0 || !fs::exists(log_path);
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot open loss log: " + log_path);
  if (fresh_log) log << "iter\tlr\tbce\n";

  const auto n = static_cast<std::int64_t>(data.patches.size());
  try {
    while (iteration_ < cfg_.total_iters) {
      const std::int64_t iter = iteration_;
      Rng rng(derive_seed(cfg_.seed, static_cast<std::uint64_t>(iter), 0x73626174ULL));
      std::vector<ImagePatch> batch;
      std::vector<Mask> labels;
      for (int k = 0; k < cfg_.batch_size; ++k) {
        const auto idx = static_cast<std::size_t>(rng.uniform_int(n));
        if (hook) {
          auto [p, m] = (*hook)(data.patches[idx], data.masks[idx]);
          batch.push_back(std::move(p));
          labels.push_back(std::move(m));
        } else {
          batch.push_back(data.patches[idx]);
          labels.push_back(data.masks[idx]);
        }
      }
      const double lr = poly_lr(iter, cfg_.total_iters, cfg_.base_lr, cfg_.poly_power);
      const double bce = train_step(batch, labels);
      char line[96];
      std::snprintf(line, sizeof(line), "%lld\t%.17g\t%.17g",
                    static_cast<long long>(iter), lr, bce);
      log << line << "\n";
      log.flush();
      if (cfg_.ckpt_every > 0 && (iter + 1) % cfg_.ckpt_every == 0) save_checkpoint(ckpt_path);
    }
  } catch (...) {
    save_checkpoint((fs::path(out_dir) / "seg_checkpoint_abort.bin").string());
    throw;
  }
  save_checkpoint(ckpt_path);
  return ckpt_path;
}

Mask SegTrainer::predict(const ImagePatch& patch, double threshold) {
  NoGradGuard ng;
  const Var logits = net_.forward(constant(pack_nchw({patch})));
  Mask out({patch.height(), patch.width()});
  for (std::int64_t y = 0; y < patch.height(); ++y)
    for (std::int64_t x = 0; x < patch.width(); ++x) {
      const double p = 1.0 / (1.0 + std::exp(-logits->value.at4(0, 0, y, x)));
      out.at2(y, x) = p >= threshold ? 1.0 : 0.0;
    }
  return out;
}

namespace {

constexpr char kSegMagic[8] = {'S', 'S', 'D', 'A', '2', 'S', 'G', 'C'};
constexpr std::uint32_t kSegVersion = 1;

}  // namespace

void SegTrainer::save_checkpoint(const std::string& path) const {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kSegMagic, 8);
    out.write(reinterpret_cast<const char*>(&kSegVersion), sizeof(kSegVersion));
    out.write(reinterpret_cast<const char*>(&iteration_), sizeof(iteration_));
    const std::uint64_t n = params_.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& p : params_) write_tensor(out, p->value);
    opt_.write(out);
    if (!out) throw std::runtime_error("short write to checkpoint: " + path);
  }
  std::ofstream meta(path + ".meta", std::ios::trunc);
  if (!meta) throw std::runtime_error("cannot write checkpoint manifest");
  meta << std::setprecision(17);
  meta << "format_version=" << kSegVersion << "\n";
  meta << "iteration=" << iteration_ << "\n";
  meta << "seed=" << cfg_.seed << "\n";
  meta << "batch_size=" << cfg_.batch_size << "\n";
  meta << "base_lr=" << cfg_.base_lr << "\n";
  meta << "poly_power=" << cfg_.poly_power << "\n";
  meta << "total_iters=" << cfg_.total_iters << "\n";
  meta << "optimizer=" << cfg_.optimizer << "\n";
  meta << "momentum=" << cfg_.momentum << "\n";
  meta << "max_grad_norm=" << cfg_.max_grad_norm << "\n";
  meta << "channels=" << cfg_.block_channels[0] << "," << cfg_.block_channels[1] << ","
       << cfg_.block_channels[2] << "," << cfg_.block_channels[3] << "\n";
  meta << "params_fingerprint=" << params_fingerprint(params_) << "\n";
}

void SegTrainer::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kSegMagic, 8) != 0)
    throw std::runtime_error("not a segmentation checkpoint: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kSegVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  in.read(reinterpret_cast<char*>(&iteration_), sizeof(iteration_));
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n != params_.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (const auto& p : params_) {
    Tensor t = read_tensor(in);
    if (!t.same_shape(p->value))
      throw std::runtime_error("checkpoint: parameter shape mismatch, expected " +
                               p->value.shape_str() + " got " + t.shape_str());
    p->value = std::move(t);
  }
  opt_.read(in);
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
}

SegTrainer load_seg_trainer(const std::string& ckpt_path) {
  std::ifstream in(ckpt_path + ".meta");
  if (!in) throw std::runtime_error("missing checkpoint manifest: " + ckpt_path + ".meta");
  SegConfig cfg;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "batch_size") cfg.batch_size = std::stoi(val);
    else if (key == "base_lr") cfg.base_lr = std::stod(val);
    else if (key == "poly_power") cfg.poly_power = std::stod(val);
    else if (key == "total_iters") cfg.total_iters = std::stoll(val);
    else if (key == "optimizer") cfg.optimizer = val;
    else if (key == "momentum") cfg.momentum = std::stod(val);
    else if (key == "max_grad_norm") cfg.max_grad_norm = std::stod(val);
    else if (key == "channels") {
      std::stringstream ss(val);
      std::string tok;
      int i = 0;
      while (std::getline(ss, tok, ',') && i < 4)
        cfg.block_channels[static_cast<std::size_t>(i++)] = std::stoi(tok);
      if (i != 4) throw std::runtime_error("manifest: bad channels line");
    }
  }
  SegTrainer t(cfg);
  t.load_checkpoint(ckpt_path);
  return t;
}

// ---- Evaluation ----

EvalResult evaluate_seg(SegTrainer& trainer, const LabeledDataset& data, double threshold) {
  if (data.patches.empty() || data.patches.size() != data.masks.size())
    throw std::invalid_argument("evaluate_seg: dataset needs matching patches and masks");
  // Group label per patch; a dataset without the sidecar is one group "0".
  std::vector<int> groups = data.groups;
  if (groups.empty()) groups.assign(data.patches.size(), 0);

  struct Accum {
    std::int64_t inter = 0, uni = 0;
  };
  std::vector<std::pair<int, Accum>> acc;
  const auto slot = [&acc](int g) -> Accum& {
    for (auto& [label, a] : acc)
      if (label == g) return a;
    acc.emplace_back(g, Accum{});
    return acc.back().second;
  };

  for (std::size_t i = 0; i < data.patches.size(); ++i) {
    const Mask pred = trainer.predict(data.patches[i], threshold);
    const Mask& gt = data.masks[i];
    if (!pred.same_shape(gt)) throw std::invalid_argument("evaluate_seg: mask shape mismatch");
    Accum& a = slot(groups[i]);
    for (std::int64_t j = 0; j < pred.size(); ++j) {
      const bool p = pred[j] != 0.0;
      const bool g = gt[j] != 0.0;
      a.inter += (p && g) ? 1 : 0;
      a.uni += (p || g) ? 1 : 0;
    }
  }

  EvalResult r;
  r.seed = trainer.config().seed;
  for (const auto& [label, a] : acc)
    r.group_iou.emplace_back(
        label, a.uni == 0 ? 1.0 : static_cast<double>(a.inter) / static_cast<double>(a.uni));
  std::sort(r.group_iou.begin(), r.group_iou.end());
  for (const auto& [label, v] : r.group_iou) r.mean_iou += v;
  r.mean_iou /= static_cast<double>(r.group_iou.size());

  // Hash of the fields that determine this evaluation (FNV-1a over a
  // canonical string); identical configs hash identically.
  std::ostringstream canon;
  const SegConfig& c = trainer.config();
  canon << std::setprecision(17) << c.block_channels[0] << ',' << c.block_channels[1] << ','
        << c.block_channels[2] << ',' << c.block_channels[3] << '|' << c.batch_size << '|'
        << c.base_lr << '|' << c.poly_power << '|' << c.total_iters << '|' << c.seed << '|'
        << c.optimizer << '|' << c.momentum << '|' << c.max_grad_norm << '|' << threshold;
  std::uint64_t h = 1469598103934665603ULL;
  for (const char ch : canon.str()) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  r.config_hash = h;
  return r;
}

// ---- Experiment ----

namespace {

LabeledDataset styled_split(std::int64_t n, std::int64_t side, std::uint64_t seed,
                            const DomainSpec& spec, int group, const std::string& tag) {
  Rng rng(seed);
  std::vector<ImagePatch> content;
  std::vector<Mask> masks;
  gen_content(n, side, rng, content, masks);
  LabeledDataset d;
  for (std::int64_t i = 0; i < n; ++i) {
    ImagePatch p = apply_domain(content[static_cast<std::size_t>(i)], spec);
    p.source_id = tag + "_" + std::to_string(i);
    d.names.push_back(p.source_id);
    d.patches.push_back(std::move(p));
    d.masks.push_back(masks[static_cast<std::size_t>(i)]);
    d.groups.push_back(group);
  }
  return d;
}

void write_bar_plot(const std::string& path, const std::vector<ExperimentRow>& rows,
                    double baseline_median, double augmented_median) {
  const int w = 640, h = 420, base_y = h - 60, top_y = 40;
  cv::Mat canvas(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto y_of = [&](double v) {
    return base_y - static_cast<int>(v * (base_y - top_y));
  };
  cv::line(canvas, {60, base_y}, {w - 20, base_y}, {0, 0, 0}, 1);
  cv::line(canvas, {60, base_y}, {60, top_y}, {0, 0, 0}, 1);
  for (int tick = 0; tick <= 10; tick += 2) {
    const double v = tick / 10.0;
    cv::line(canvas, {55, y_of(v)}, {60, y_of(v)}, {0, 0, 0}, 1);
    cv::putText(canvas, cv::format("%.1f", v), {18, y_of(v) + 4}, cv::FONT_HERSHEY_SIMPLEX,
                0.4, {0, 0, 0}, 1);
  }
  const int group_w = (w - 100) / 2;
  const auto arm_x = [&](const std::string& arm) { return arm == "baseline" ? 80 : 80 + group_w; };
  const cv::Scalar fill_base(180, 120, 60), fill_aug(60, 140, 60);
  // Thin per-seed bars, then a bold median bar per arm.
  int idx_base = 0, idx_aug = 0;
  for (const auto& row : rows) {
    const bool is_base = row.arm == "baseline";
    int& idx = is_base ? idx_base : idx_aug;
    const int x0 = arm_x(row.arm) + idx * 34;
    cv::rectangle(canvas, {x0, y_of(row.iou_fg)}, {x0 + 26, base_y},
                  is_base ? fill_base : fill_aug, cv::FILLED);
    cv::putText(canvas, cv::format("s%llu", static_cast<unsigned long long>(row.seed)),
                {x0, base_y + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.38, {0, 0, 0}, 1);
    ++idx;
  }
  const auto median_marker = [&](const std::string& arm, double v) {
    const int x0 = arm_x(arm);
    cv::line(canvas, {x0 - 6, y_of(v)}, {x0 + idx_base * 34 + 6, y_of(v)}, {0, 0, 255}, 2);
    cv::putText(canvas, cv::format("%s median %.3f", arm.c_str(), v), {x0, top_y - 14},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1);
  };
  median_marker("baseline", baseline_median);
  median_marker("augmented", augmented_median);
  cv::putText(canvas, "target IoU", {10, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0}, 1);
  if (!cv::imwrite(path, canvas)) throw std::runtime_error("cannot write plot: " + path);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw std::invalid_argument("run_experiment: needs at least one seed");
  fs::create_directories(cfg.out_dir);

  const DomainSpec identity{};
  const DomainSpec target_spec = cfg.shifted_target ? cfg.shift : identity;
  const LabeledDataset source_train =
      styled_split(cfg.n_labeled, cfg.side, derive_seed(cfg.data_seed, 1), identity, 0, "src");
  const LabeledDataset target_unlabeled = styled_split(
      cfg.n_unlabeled, cfg.side, derive_seed(cfg.data_seed, 2), target_spec, 1, "tgt");
  const LabeledDataset target_eval =
      styled_split(cfg.n_eval, cfg.side, derive_seed(cfg.data_seed, 3), target_spec, 1, "ev");

  ExperimentReport report;
  for (std::size_t i = 0; i < target_eval.patches.size(); ++i)
    report.eval_style_gap +=
        style_gap(source_train.patches[i % source_train.patches.size()], target_eval.patches[i]);
  report.eval_style_gap /= static_cast<double>(target_eval.patches.size());

  // One translation model per scenario, trained on the unlabeled union; the
  // per-seed variation under study is the segmentation training.
  std::vector<ImagePatch> union_pool = source_train.patches;
  union_pool.insert(union_pool.end(), target_unlabeled.patches.begin(),
                    target_unlabeled.patches.end());
  TrainConfig icfg = cfg.i2i;
  icfg.seed = derive_seed(cfg.data_seed, 0x693269ULL);
  Trainer i2i(icfg);
  report.i2i_ckpt = i2i.fit(union_pool, (fs::path(cfg.out_dir) / "i2i").string());
  Generator gen = std::move(i2i.generator());

  std::vector<double> base_ious, aug_ious;
  for (const std::uint64_t seed : cfg.seeds) {
    for (const bool augmented : {false, true}) {
      SegConfig scfg = cfg.seg;
      scfg.seed = derive_seed(seed, augmented ? 0x617567ULL : 0x62617365ULL);
      SegTrainer trainer(scfg);
      const std::string run_dir =
          (fs::path(cfg.out_dir) /
           ((augmented ? "augmented_s" : "baseline_s") + std::to_string(seed)))
              .string();
      if (augmented) {
        AugmentHook hook(gen, target_unlabeled.patches, cfg.augment_p,
                         derive_seed(seed, 0x686f6f6bULL));
        trainer.fit(source_train, &hook, run_dir);
      } else {
        trainer.fit(source_train, nullptr, run_dir);
      }
      const EvalResult ev = evaluate_seg(trainer, target_eval);
      report.rows.push_back({augmented ? "augmented" : "baseline", seed, ev.mean_iou});
      (augmented ? aug_ious : base_ious).push_back(ev.mean_iou);
    }
  }
  report.baseline_median = median(base_ious);
  report.augmented_median = median(aug_ious);

  report.table_path = (fs::path(cfg.out_dir) / "results.tsv").string();
  std::ofstream table(report.table_path, std::ios::trunc);
  if (!table) throw std::runtime_error("cannot write results table");
  table << "config\tseed\tgroup\tiou\n" << std::setprecision(17);
  for (const auto& row : report.rows)
    table << row.arm << "\t" << row.seed << "\t1\t" << row.iou_fg << "\n";
  table << "# baseline_median\t" << report.baseline_median << "\n";
  table << "# augmented_median\t" << report.augmented_median << "\n";
  table << "# eval_style_gap\t" << report.eval_style_gap << "\n";
  table << "# shifted_target\t" << (cfg.shifted_target ? 1 : 0) << "\n";

  report.plot_path = (fs::path(cfg.out_dir) / "results.png").string();
  write_bar_plot(report.plot_path, report.rows, report.baseline_median,
                 report.augmented_median);
  return report;
}

}  // namespace ssda2
