#include "ssda2/config.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace ssda2 {

std::string version_string() { return std::string("ssda2 ") + kVersion; }

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& expected,
                            const std::string& got) {
  throw std::invalid_argument("config: key \"" + key + "\" expects " + expected + ", got \"" +
                              got + "\"");
}

std::int64_t want_int(const std::string& key, const std::string& val) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), out);
  if (ec != std::errc{} || ptr != val.data() + val.size())
    bad_value(key, "an integer", val);
  return out;
}

std::uint64_t want_uint(const std::string& key, const std::string& val) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), out);
  if (ec != std::errc{} || ptr != val.data() + val.size())
    bad_value(key, "a non-negative integer", val);
  return out;
}

double want_real(const std::string& key, const std::string& val) {
  try {
    std::size_t used = 0;
    const double out = std::stod(val, &used);
    if (used != val.size()) bad_value(key, "a real number", val);
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, "a real number", val);
  }
}

bool want_flag(const std::string& key, const std::string& val) {
  if (val == "1" || val == "true") return true;
  if (val == "0" || val == "false") return false;
  bad_value(key, "a flag (0/1/true/false)", val);
}

template <std::size_t N>
std::array<int, N> want_channels(const std::string& key, const std::string& val) {
  std::array<int, N> out{};
  std::stringstream ss(val);
  std::string tok;
  std::size_t i = 0;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (i >= N || tok.empty()) bad_value(key, std::to_string(N) + " positive integers", val);
    const std::int64_t c = want_int(key, tok);
    if (c < 1) bad_value(key, std::to_string(N) + " positive integers", val);
    out[i++] = static_cast<int>(c);
  }
  if (i != N) bad_value(key, std::to_string(N) + " positive integers", val);
  return out;
}

std::vector<std::uint64_t> want_seed_list(const std::string& key, const std::string& val) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(val);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) bad_value(key, "comma-separated seeds", val);
    out.push_back(want_uint(key, tok));
  }
  if (out.empty()) bad_value(key, "comma-separated seeds", val);
  return out;
}

void require(bool ok, const std::string& key, const std::string& constraint) {
  if (!ok) throw std::invalid_argument("config: key \"" + key + "\" must be " + constraint);
}

void apply_key(AppConfig& c, const std::string& key, const std::string& val) {
  if (key == "lambda1") c.i2i.weights.l_rec = want_real(key, val);
  else if (key == "lambda2") c.i2i.weights.l_adv = want_real(key, val);
  else if (key == "lambda3") c.i2i.weights.l_cyc = want_real(key, val);
  else if (key == "lambda4") c.i2i.weights.l_per = want_real(key, val);
  else if (key == "lambda5") c.i2i.weights.l_con = want_real(key, val);
  else if (key == "channels") c.i2i.gen.encoder.block_channels = want_channels<4>(key, val);
  else if (key == "adain_skips") c.i2i.gen.adain_skips = want_flag(key, val);
  else if (key == "per_channels") c.i2i.per.block_channels = want_channels<3>(key, val);
  else if (key == "per_tap") c.i2i.per.tap_block = static_cast<int>(want_int(key, val));
  else if (key == "per_weights") c.i2i.per.weights_path = val;
  else if (key == "batch_size") c.i2i.batch_size = static_cast<int>(want_int(key, val));
  else if (key == "base_lr") c.i2i.base_lr = want_real(key, val);
  else if (key == "poly_power") c.i2i.poly_power = want_real(key, val);
  else if (key == "total_iters") c.i2i.total_iters = want_int(key, val);
  else if (key == "seed") c.i2i.seed = want_uint(key, val);
  else if (key == "optimizer") c.i2i.optimizer = val;
  else if (key == "momentum") c.i2i.momentum = want_real(key, val);
  else if (key == "max_grad_norm") c.i2i.max_grad_norm = want_real(key, val);
  else if (key == "per_anchor_contrastive") c.i2i.per_anchor_contrastive = want_flag(key, val);
  else if (key == "ckpt_every") c.i2i.ckpt_every = want_int(key, val);
  else if (key == "seg_channels") c.seg.block_channels = want_channels<4>(key, val);
  else if (key == "seg_batch_size") c.seg.batch_size = static_cast<int>(want_int(key, val));
  else if (key == "seg_base_lr") c.seg.base_lr = want_real(key, val);
  else if (key == "seg_poly_power") c.seg.poly_power = want_real(key, val);
  else if (key == "seg_total_iters") c.seg.total_iters = want_int(key, val);
  else if (key == "seg_seed") c.seg.seed = want_uint(key, val);
  else if (key == "seg_optimizer") c.seg.optimizer = val;
  else if (key == "seg_momentum") c.seg.momentum = want_real(key, val);
  else if (key == "seg_max_grad_norm") c.seg.max_grad_norm = want_real(key, val);
  else if (key == "seg_ckpt_every") c.seg.ckpt_every = want_int(key, val);
  else if (key == "exp_seeds") c.exp_seeds = want_seed_list(key, val);
  else if (key == "exp_data_seed") c.exp_data_seed = want_uint(key, val);
  else if (key == "exp_side") c.exp_side = want_int(key, val);
  else if (key == "exp_n_labeled") c.exp_n_labeled = want_int(key, val);
  else if (key == "exp_n_unlabeled") c.exp_n_unlabeled = want_int(key, val);
  else if (key == "exp_n_eval") c.exp_n_eval = want_int(key, val);
  else if (key == "exp_augment_p") c.exp_augment_p = want_real(key, val);
  else if (key == "exp_shifted") c.exp_shifted = want_flag(key, val);
  else throw std::invalid_argument("config: unknown key \"" + key + "\"");
}

void validate(const AppConfig& c) {
  require(c.i2i.batch_size >= 1, "batch_size", ">= 1");
  require(c.i2i.base_lr > 0.0, "base_lr", "> 0");
  require(c.i2i.total_iters >= 1, "total_iters", ">= 1");
  require(c.i2i.optimizer == "sgd" || c.i2i.optimizer == "adam", "optimizer",
          "\"sgd\" or \"adam\"");
  require(c.i2i.per.tap_block >= 1 && c.i2i.per.tap_block <= 3, "per_tap", "in 1..3");
  require(c.i2i.ckpt_every >= 0, "ckpt_every", ">= 0");
  require(c.seg.batch_size >= 1, "seg_batch_size", ">= 1");
  require(c.seg.base_lr > 0.0, "seg_base_lr", "> 0");
  require(c.seg.total_iters >= 1, "seg_total_iters", ">= 1");
  require(c.seg.optimizer == "sgd" || c.seg.optimizer == "adam", "seg_optimizer",
          "\"sgd\" or \"adam\"");
  require(c.seg.ckpt_every >= 0, "seg_ckpt_every", ">= 0");
  require(c.exp_side >= 8 && c.exp_side % 8 == 0, "exp_side", "a multiple of 8");
  require(c.exp_n_labeled >= 1, "exp_n_labeled", ">= 1");
  require(c.exp_n_unlabeled >= 1, "exp_n_unlabeled", ">= 1");
  require(c.exp_n_eval >= 1, "exp_n_eval", ">= 1");
  require(c.exp_augment_p >= 0.0 && c.exp_augment_p <= 1.0, "exp_augment_p", "in [0,1]");
}

template <std::size_t N>
std::string join_channels(const std::array<int, N>& a) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ',';
    out += std::to_string(a[i]);
  }
  return out;
}

}  // namespace

AppConfig parse_config_text(const std::string& text) {
  AppConfig cfg;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    apply_key(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  validate(cfg);
  return cfg;
}

AppConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string emit_config(const AppConfig& c) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "# translation training\n";
  out << "lambda1=" << c.i2i.weights.l_rec << "\n";
  out << "lambda2=" << c.i2i.weights.l_adv << "\n";
  out << "lambda3=" << c.i2i.weights.l_cyc << "\n";
  out << "lambda4=" << c.i2i.weights.l_per << "\n";
  out << "lambda5=" << c.i2i.weights.l_con << "\n";
  out << "channels=" << join_channels(c.i2i.gen.encoder.block_channels) << "\n";
  out << "adain_skips=" << (c.i2i.gen.adain_skips ? 1 : 0) << "\n";
  out << "per_channels=" << join_channels(c.i2i.per.block_channels) << "\n";
  out << "per_tap=" << c.i2i.per.tap_block << "\n";
  out << "per_weights=" << c.i2i.per.weights_path << "\n";
  out << "batch_size=" << c.i2i.batch_size << "\n";
  out << "base_lr=" << c.i2i.base_lr << "\n";
  out << "poly_power=" << c.i2i.poly_power << "\n";
  out << "total_iters=" << c.i2i.total_iters << "\n";
  out << "seed=" << c.i2i.seed << "\n";
  out << "optimizer=" << c.i2i.optimizer << "\n";
  out << "momentum=" << c.i2i.momentum << "\n";
  out << "max_grad_norm=" << c.i2i.max_grad_norm << "\n";
  out << "per_anchor_contrastive=" << (c.i2i.per_anchor_contrastive ? 1 : 0) << "\n";
  out << "ckpt_every=" << c.i2i.ckpt_every << "\n";
  out << "# segmentation training\n";
  out << "seg_channels=" << join_channels(c.seg.block_channels) << "\n";
  out << "seg_batch_size=" << c.seg.batch_size << "\n";
  out << "seg_base_lr=" << c.seg.base_lr << "\n";
  out << "seg_poly_power=" << c.seg.poly_power << "\n";
  out << "seg_total_iters=" << c.seg.total_iters << "\n";
  out << "seg_seed=" << c.seg.seed << "\n";
  out << "seg_optimizer=" << c.seg.optimizer << "\n";
  out << "seg_momentum=" << c.seg.momentum << "\n";
  out << "seg_max_grad_norm=" << c.seg.max_grad_norm << "\n";
  out << "seg_ckpt_every=" << c.seg.ckpt_every << "\n";
  out << "# experiment layout\n";
  out << "exp_seeds=";
  for (std::size_t i = 0; i < c.exp_seeds.size(); ++i)
    out << (i ? "," : "") << c.exp_seeds[i];
  out << "\n";
  out << "exp_data_seed=" << c.exp_data_seed << "\n";
  out << "exp_side=" << c.exp_side << "\n";
  out << "exp_n_labeled=" << c.exp_n_labeled << "\n";
  out << "exp_n_unlabeled=" << c.exp_n_unlabeled << "\n";
  out << "exp_n_eval=" << c.exp_n_eval << "\n";
  out << "exp_augment_p=" << c.exp_augment_p << "\n";
  out << "exp_shifted=" << (c.exp_shifted ? 1 : 0) << "\n";
  return out.str();
}

void apply_env_overrides(AppConfig& cfg) {
  const char* env = std::getenv("SSDA2_SEED");
  if (!env) return;
  const std::string val(env);
  std::uint64_t seed = 0;
  const auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), seed);
  if (ec != std::errc{} || ptr != val.data() + val.size() || val.empty())
    throw std::invalid_argument("SSDA2_SEED must be a non-negative integer, got \"" + val +
                                "\"");
  cfg.i2i.seed = seed;
  cfg.seg.seed = seed;
}

void write_run_stamp(const std::string& out_dir, const AppConfig& cfg,
                     const std::string& invocation) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "config.resolved", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write resolved config in " + out_dir);
    out << emit_config(cfg);
  }
  std::ofstream stamp(fs::path(out_dir) / "run_stamp.txt", std::ios::trunc);
  if (!stamp) throw std::runtime_error("cannot write run stamp in " + out_dir);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char when[32] = {0};
  std::strftime(when, sizeof(when), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  stamp << "version=" << version_string() << "\n";
  stamp << "invocation=" << invocation << "\n";
  stamp << "seed=" << cfg.i2i.seed << "\n";
  stamp << "seg_seed=" << cfg.seg.seed << "\n";
  stamp << "time_utc=" << when << "\n";
}

}  // namespace ssda2
