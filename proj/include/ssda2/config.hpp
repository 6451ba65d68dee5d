#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssda2/seg.hpp"
#include "ssda2/train.hpp"

namespace ssda2 {

/// Release identifier stamped into run directories and shown by --version.
inline constexpr const char* kVersion = "0.1.0";
std::string version_string();

/// Everything the command-line tool can configure from one key=value file:
/// the translation run, the segmentation run, and the experiment layout.
/// Field defaults are the documented defaults of the file format.
struct AppConfig {
  TrainConfig i2i;
  SegConfig seg;
  std::vector<std::uint64_t> exp_seeds{1, 2, 3};
  std::uint64_t exp_data_seed = 100;
  std::int64_t exp_side = 32;
  std::int64_t exp_n_labeled = 64;
  std::int64_t exp_n_unlabeled = 64;
  std::int64_t exp_n_eval = 48;
  double exp_augment_p = 0.5;
  bool exp_shifted = true;

  bool operator==(const AppConfig&) const = default;
};

/// Parses `key = value` lines ('#' comments and blank lines allowed). Every
/// key is optional; an empty file yields the defaults. Unknown keys and
/// ill-typed or out-of-range values raise std::invalid_argument naming the
/// key and the expected type.
AppConfig parse_config_text(const std::string& text);

/// parse_config_text over a file's contents; the file must exist.
AppConfig parse_config(const std::string& path);

/// Serializes every key with full precision so that
/// parse_config_text(emit_config(c)) == c.
std::string emit_config(const AppConfig& cfg);

/// Applies the SSDA2_SEED environment variable (when set) to both run
/// seeds; a malformed value raises std::invalid_argument.
void apply_env_overrides(AppConfig& cfg);

/// Writes the resolved configuration, the seeds, the version stamp, and the
/// invocation line into out_dir (creating it). Called before any
/// computation so a crashed run still documents itself.
void write_run_stamp(const std::string& out_dir, const AppConfig& cfg,
                     const std::string& invocation);

}  // namespace ssda2
