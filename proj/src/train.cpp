#include "ssda2/train.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace ssda2 {

double poly_lr(std::int64_t iter, std::int64_t total_iters, double base_lr, double power) {
  if (base_lr <= 0.0) throw std::invalid_argument("poly_lr: base_lr must be > 0");
  if (total_iters < 1) throw std::invalid_argument("poly_lr: total_iters must be >= 1");
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(total_iters);
  if (frac <= 0.0) return 0.0;
  return base_lr * std::pow(frac, power);
}

double lr_at(std::int64_t iter, const TrainConfig& cfg) {
  return poly_lr(iter, cfg.total_iters, cfg.base_lr, cfg.poly_power);
}

TrainTriplet triplet_for_iteration(const TrainConfig& cfg, std::int64_t iter,
                                   const std::vector<ImagePatch>& pool) {
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(iter), 0x74726970ULL));
  return sample_triplet(pool, cfg.batch_size, rng);
}

double clip_grad_norm(const std::vector<Var>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p->has_grad()) continue;
    const Tensor& g = p->grad;
    for (std::int64_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params) {
      if (!p->has_grad()) continue;
      Tensor& g = p->grad;
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= scale;
    }
  }
  return norm;
}

// ---- OptState ----

void OptState::init(const std::vector<Var>& params) {
  if (kind != "sgd" && kind != "adam")
    throw std::invalid_argument("OptState: unknown optimizer '" + kind + "'");
  if (slot1.size() == params.size()) return;
  slot1.clear();
  slot2.clear();
  for (const auto& p : params) {
    slot1.push_back(Tensor::zeros(p->value.shape()));
    if (kind == "adam") slot2.push_back(Tensor::zeros(p->value.shape()));
  }
}

void OptState::step(const std::vector<Var>& params, double lr) {
  init(params);
  if (kind == "sgd") {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& v = slot1[i];
      Tensor& val = params[i]->value;
      if (!params[i]->has_grad()) {
        for (std::int64_t j = 0; j < v.size(); ++j) {
          v[j] = momentum * v[j];
          val[j] -= lr * v[j];
        }
        continue;
      }
      const Tensor& g = params[i]->grad;
      for (std::int64_t j = 0; j < val.size(); ++j) {
        v[j] = momentum * v[j] + g[j];
        val[j] -= lr * v[j];
      }
    }
    return;
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& m = slot1[i];
    Tensor& v = slot2[i];
    Tensor& val = params[i]->value;
    for (std::int64_t j = 0; j < val.size(); ++j) {
      const double g = params[i]->has_grad() ? params[i]->grad[j] : 0.0;
      m[j] = beta1 * m[j] + (1.0 - beta1) * g;
      v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
      val[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
    }
  }
}

void OptState::write(std::ostream& out) const {
  const std::uint32_t klen = static_cast<std::uint32_t>(kind.size());
  out.write(reinterpret_cast<const char*>(&klen), sizeof(klen));
  out.write(kind.data(), klen);
  out.write(reinterpret_cast<const char*>(&momentum), sizeof(momentum));
  out.write(reinterpret_cast<const char*>(&beta1), sizeof(beta1));
  out.write(reinterpret_cast<const char*>(&beta2), sizeof(beta2));
  out.write(reinterpret_cast<const char*>(&eps), sizeof(eps));
  out.write(reinterpret_cast<const char*>(&t), sizeof(t));
  const auto write_slots = [&out](const std::vector<Tensor>& slots) {
    const std::uint64_t n = slots.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& s : slots) write_tensor(out, s);
  };
  write_slots(slot1);
  write_slots(slot2);
}

void OptState::read(std::istream& in) {
  std::uint32_t klen = 0;
  in.read(reinterpret_cast<char*>(&klen), sizeof(klen));
  if (!in || klen > 16) throw std::runtime_error("checkpoint: bad optimizer record");
  kind.assign(klen, '\0');
  in.read(kind.data(), klen);
  in.read(reinterpret_cast<char*>(&momentum), sizeof(momentum));
  in.read(reinterpret_cast<char*>(&beta1), sizeof(beta1));
  in.read(reinterpret_cast<char*>(&beta2), sizeof(beta2));
  in.read(reinterpret_cast<char*>(&eps), sizeof(eps));
  in.read(reinterpret_cast<char*>(&t), sizeof(t));
  const auto read_slots = [&in](std::vector<Tensor>& slots) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n > 1'000'000) throw std::runtime_error("checkpoint: bad slot count");
    slots.clear();
    for (std::uint64_t i = 0; i < n; ++i) slots.push_back(read_tensor(in));
  };
  read_slots(slot1);
  read_slots(slot2);
  if (!in) throw std::runtime_error("checkpoint: truncated optimizer state");
}

// ---- Trainer ----

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)),
      gen_(cfg_.gen, derive_seed(cfg_.seed, 0x67656eULL)),
      dis_(cfg_.gen.encoder, derive_seed(cfg_.seed, 0x646973ULL)),
      per_(cfg_.per, 3, derive_seed(cfg_.seed, 0x706572ULL)) {
  if (cfg_.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  gen_params_ = gen_.parameters();
  dis_params_ = dis_.parameters();
  opt_g_.kind = cfg_.optimizer;
  opt_d_.kind = cfg_.optimizer;
  opt_g_.momentum = cfg_.momentum;
  opt_d_.momentum = cfg_.momentum;
  opt_g_.init(gen_params_);
  opt_d_.init(dis_params_);
}

namespace {

bool report_finite(const LossReport& r) {
  return std::isfinite(r.rec) && std::isfinite(r.adv_gen) && std::isfinite(r.adv_dis) &&
         std::isfinite(r.cyc) && std::isfinite(r.per) && std::isfinite(r.con_gen) &&
         std::isfinite(r.con_dis) && std::isfinite(r.gen_total) && std::isfinite(r.dis_total);
}

void dump_diagnostics(const std::string& dir, std::int64_t iter, const TrainTriplet& t,
                      const LossReport& r) {
  if (dir.empty()) return;
  const fs::path root = fs::path(dir) / ("nonfinite_iter" + std::to_string(iter));
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) return;  // diagnostics are best-effort
  for (std::size_t i = 0; i < t.a1.size(); ++i) {
    save_patch_png(t.a1[i], (root / ("a1_" + std::to_string(i) + ".png")).string());
    save_patch_png(t.a2[i], (root / ("a2_" + std::to_string(i) + ".png")).string());
    save_patch_png(t.b[i], (root / ("b_" + std::to_string(i) + ".png")).string());
  }
  std::ofstream out(root / "losses.tsv");
  out << loss_log_header() << "\n" << loss_log_line(iter, 0.0, r) << "\n";
}

}  // namespace

LossReport Trainer::train_step(const TrainTriplet& t) {
  const double lr = lr_at(iteration_, cfg_);
  const Var a1 = constant(pack_nchw(t.a1));
  const Var a2 = constant(pack_nchw(t.a2));
  const Var b = constant(pack_nchw(t.b));

  LossReport report;
  report.per_pretrained = per_.pretrained();

  // Discriminator substep. Translations are produced without a graph and
  // wrapped as constants: the generator is a fixed sampler here.
  const std::uint64_t gen_fp = params_fingerprint(gen_params_);
  Var fake_ab_c, fake_ba_c;
  {
    NoGradGuard ng;
    const auto pair = gen_.translate_pair(a1, b);
    fake_ab_c = constant(pair.first->value);
    fake_ba_c = constant(pair.second->value);
  }
  zero_grad(dis_params_);
  const Var adv_d = loss_adv_dis(dis_, a1, b, fake_ab_c, fake_ba_c);
  const Var con_d = loss_con_dis(dis_, a1, a2, fake_ab_c, cfg_.per_anchor_contrastive);
  const Var dis_total = weighted_dis_total(cfg_.weights, adv_d, con_d);
  backward(dis_total);
  report.adv_dis = adv_d->value.item();
  report.con_dis = con_d->value.item();
  clip_grad_norm(dis_params_, cfg_.max_grad_norm);
  opt_d_.step(dis_params_, lr);
  if (params_fingerprint(gen_params_) != gen_fp)
    throw std::logic_error("train_step: discriminator substep mutated generator parameters");
  const std::uint64_t dis_fp = params_fingerprint(dis_params_);

  // Generator substep against the just-updated discriminator. Gradients
  // reach discriminator parameters but only generator slots are stepped;
  // the stale grads are cleared on the next discriminator substep.
  zero_grad(gen_params_);
  const TranslationOutputs o = run_generator(gen_, a1, b);
  const Var rec = loss_rec(o, a1, b);
  const Var adv_g = loss_adv_gen(dis_, o.fake_ab, o.fake_ba);
  const Var cyc = loss_cyc(o, a1, b);
  const Var per_l = loss_per(per_, o, a1, b);
  const Var con_g = loss_con_gen(dis_, o.fake_ab, b, a2, cfg_.per_anchor_contrastive);
  const Var gen_total = weighted_gen_total(cfg_.weights, rec, adv_g, cyc, per_l, con_g);
  backward(gen_total);
  report.rec = rec->value.item();
  report.adv_gen = adv_g->value.item();
  report.cyc = cyc->value.item();
  report.per = per_l->value.item();
  report.con_gen = con_g->value.item();
  clip_grad_norm(gen_params_, cfg_.max_grad_norm);
  opt_g_.step(gen_params_, lr);
  if (params_fingerprint(dis_params_) != dis_fp)
    throw std::logic_error("train_step: generator substep mutated discriminator parameters");

  aggregate(report, cfg_.weights);
  if (!report_finite(report)) {
    dump_diagnostics(diag_dir_, iteration_, t, report);
    throw std::runtime_error("non-finite loss at iteration " + std::to_string(iteration_) +
                             "; diagnostics dumped" +
                             (diag_dir_.empty() ? " (no diagnostics dir set)" : " to " + diag_dir_));
  }
  ++iteration_;
  return report;
}

LossReport Trainer::eval_probe(const TrainTriplet& t) {
  NoGradGuard ng;
  const Var a1 = constant(pack_nchw(t.a1));
  const Var a2 = constant(pack_nchw(t.a2));
  const Var b = constant(pack_nchw(t.b));

  LossReport report;
  report.per_pretrained = per_.pretrained();
  const TranslationOutputs o = run_generator(gen_, a1, b);
  report.adv_dis =
      loss_adv_dis(dis_, a1, b, o.fake_ab, o.fake_ba)->value.item();
  report.con_dis = loss_con_dis(dis_, a1, a2, o.fake_ab, cfg_.per_anchor_contrastive)
                       ->value.item();
  report.rec = loss_rec(o, a1, b)->value.item();
  report.adv_gen = loss_adv_gen(dis_, o.fake_ab, o.fake_ba)->value.item();
  report.cyc = loss_cyc(o, a1, b)->value.item();
  report.per = loss_per(per_, o, a1, b)->value.item();
  report.con_gen = loss_con_gen(dis_, o.fake_ab, b, a2, cfg_.per_anchor_contrastive)
                       ->value.item();
  aggregate(report, cfg_.weights);
  return report;
}

std::string Trainer::fit(const std::vector<ImagePatch>& pool, const std::string& out_dir) {
  fs::create_directories(out_dir);
  if (diag_dir_.empty()) diag_dir_ = out_dir;
  const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.bin").string();
  const std::string log_path = (fs::path(out_dir) / "loss_log.tsv").string();

  const bool fresh_log = iteration_ == 0 || !fs::exists(log_path);
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot open loss log: " + log_path);
  if (fresh_log) log << loss_log_header() << "\n";

  try {
    while (iteration_ < cfg_.total_iters) {
      const std::int64_t iter = iteration_;
      const TrainTriplet triplet = triplet_for_iteration(cfg_, iter, pool);
      const double lr = lr_at(iter, cfg_);
      const LossReport r = train_step(triplet);
      log << loss_log_line(iter, lr, r) << "\n";
      log.flush();
      if (cfg_.ckpt_every > 0 && (iter + 1) % cfg_.ckpt_every == 0)
        save_checkpoint(ckpt_path);
    }
  } catch (...) {
    save_checkpoint((fs::path(out_dir) / "checkpoint_abort.bin").string());
    throw;
  }
  save_checkpoint(ckpt_path);
  return ckpt_path;
}

namespace {

constexpr char kCkptMagic[8] = {'S', 'S', 'D', 'A', '2', 'C', 'K', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

void write_param_block(std::ostream& out, const std::vector<Var>& params) {
  const std::uint64_t n = params.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const auto& p : params) write_tensor(out, p->value);
}

void read_param_block(std::istream& in, const std::vector<Var>& params) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (const auto& p : params) {
    Tensor t = read_tensor(in);
    if (!t.same_shape(p->value))
      throw std::runtime_error("checkpoint: parameter shape mismatch, expected " +
                               p->value.shape_str() + " got " + t.shape_str());
    p->value = std::move(t);
  }
}

std::string meta_path_for(const std::string& ckpt_path) { return ckpt_path + ".meta"; }

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kCkptMagic, 8);
    out.write(reinterpret_cast<const char*>(&kCkptVersion), sizeof(kCkptVersion));
    out.write(reinterpret_cast<const char*>(&iteration_), sizeof(iteration_));
    write_param_block(out, gen_params_);
    write_param_block(out, dis_params_);
    write_param_block(out, per_.parameters());
    opt_g_.write(out);
    opt_d_.write(out);
    if (!out) throw std::runtime_error("short write to checkpoint: " + path);
  }
  std::ofstream meta(meta_path_for(path), std::ios::trunc);
  if (!meta) throw std::runtime_error("cannot write checkpoint manifest");
  meta << std::setprecision(17);
  meta << "format_version=" << kCkptVersion << "\n";
  meta << "iteration=" << iteration_ << "\n";
  meta << "seed=" << cfg_.seed << "\n";
  meta << "batch_size=" << cfg_.batch_size << "\n";
  meta << "base_lr=" << cfg_.base_lr << "\n";
  meta << "poly_power=" << cfg_.poly_power << "\n";
  meta << "total_iters=" << cfg_.total_iters << "\n";
  meta << "optimizer=" << cfg_.optimizer << "\n";
  meta << "momentum=" << cfg_.momentum << "\n";
  meta << "max_grad_norm=" << cfg_.max_grad_norm << "\n";
  meta << "channels=" << cfg_.gen.encoder.block_channels[0] << ","
       << cfg_.gen.encoder.block_channels[1] << "," << cfg_.gen.encoder.block_channels[2] << ","
       << cfg_.gen.encoder.block_channels[3] << "\n";
  meta << "adain_skips=" << (cfg_.gen.adain_skips ? 1 : 0) << "\n";
  meta << "per_anchor_contrastive=" << (cfg_.per_anchor_contrastive ? 1 : 0) << "\n";
  meta << "per_tap_block=" << cfg_.per.tap_block << "\n";
  meta << "per_weights=" << cfg_.per.weights_path << "\n";
  meta << "lambda=" << cfg_.weights.l_rec << "," << cfg_.weights.l_adv << ","
       << cfg_.weights.l_cyc << "," << cfg_.weights.l_per << "," << cfg_.weights.l_con << "\n";
  // Sampling streams derive from (seed, iteration); that pair is the whole
  // RNG state.
  meta << "sampling_stream=derived(seed,iteration)\n";
  meta << "gen_fingerprint=" << params_fingerprint(gen_params_) << "\n";
  meta << "dis_fingerprint=" << params_fingerprint(dis_params_) << "\n";
  meta << "per_fingerprint=" << params_fingerprint(per_.parameters()) << "\n";
}

void Trainer::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCkptVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  in.read(reinterpret_cast<char*>(&iteration_), sizeof(iteration_));
  read_param_block(in, gen_params_);
  read_param_block(in, dis_params_);
  read_param_block(in, per_.parameters());
  opt_g_.read(in);
  opt_d_.read(in);
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
}

TrainConfig read_checkpoint_config(const std::string& ckpt_path) {
  const std::string meta_path = meta_path_for(ckpt_path);
  std::ifstream in(meta_path);
  if (!in) throw std::runtime_error("missing checkpoint manifest: " + meta_path);
  TrainConfig cfg;
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
    else if (key == "adain_skips") cfg.gen.adain_skips = val == "1";
    else if (key == "per_anchor_contrastive") cfg.per_anchor_contrastive = val == "1";
    else if (key == "per_tap_block") cfg.per.tap_block = std::stoi(val);
    else if (key == "per_weights") cfg.per.weights_path = val;
    else if (key == "channels") {
      std::stringstream ss(val);
      std::string tok;
      int i = 0;
      while (std::getline(ss, tok, ',') && i < 4)
        cfg.gen.encoder.block_channels[static_cast<std::size_t>(i++)] = std::stoi(tok);
      if (i != 4) throw std::runtime_error("manifest: bad channels line");
    } else if (key == "lambda") {
      std::stringstream ss(val);
      std::string tok;
      double v[5] = {0, 0, 0, 0, 0};
      int i = 0;
      while (std::getline(ss, tok, ',') && i < 5) v[i++] = std::stod(tok);
      if (i != 5) throw std::runtime_error("manifest: bad lambda line");
      cfg.weights = {v[0], v[1], v[2], v[3], v[4]};
    }
  }
  return cfg;
}

Trainer load_trainer(const std::string& ckpt_path) {
  Trainer t(read_checkpoint_config(ckpt_path));
  t.load_checkpoint(ckpt_path);
  return t;
}

}  // namespace ssda2
