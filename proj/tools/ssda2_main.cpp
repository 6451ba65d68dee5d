#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ssda2/config.hpp"
#include "ssda2/seg.hpp"

using namespace ssda2;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kSubcommands = {
    "synth-gen", "train-i2i", "translate", "grid", "train-seg", "evaluate", "experiment"};

std::string join_args(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t prev = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t cur = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         prev + (a[i - 1] == b[j - 1] ? 0 : 1)});
      prev = cur;
    }
  }
  return row[b.size()];
}

std::string closest_subcommand(const std::string& word) {
  std::string best = kSubcommands.front();
  std::size_t best_d = edit_distance(word, best);
  for (const auto& cand : kSubcommands) {
    const std::size_t d = edit_distance(word, cand);
    if (d < best_d) {
      best_d = d;
      best = cand;
    }
  }
  return best;
}

void save_dataset(const SynthDataset& ds, const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "patches");
  fs::create_directories(fs::path(out_dir) / "masks");
  std::ofstream sidecar(fs::path(out_dir) / "domains.tsv", std::ios::trunc);
  for (std::size_t i = 0; i < ds.patches.size(); ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "p%04zu", i);
    save_patch_png(ds.patches[i], (fs::path(out_dir) / "patches" / (std::string(name) + ".png")).string());
    save_mask_png(ds.masks[i], (fs::path(out_dir) / "masks" / (std::string(name) + ".png")).string());
    sidecar << name << "\t" << ds.domain_labels[i] << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cout << "usage: ssda2 <subcommand> [options]\n"
                 "subcommands: synth-gen | train-i2i | translate | grid | train-seg | "
                 "evaluate | experiment\n"
                 "run 'ssda2 --help' for details\n";
    return 2;
  }
  const std::string first = argv[1];
  if (!first.empty() && first[0] != '-' &&
      std::find(kSubcommands.begin(), kSubcommands.end(), first) == kSubcommands.end()) {
    std::cerr << "error: unknown subcommand \"" << first << "\"; did you mean \""
              << closest_subcommand(first) << "\"?\n";
    return 2;
  }

  CLI::App app{"Self-supervised domain-agnostic image translation toolkit"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir, ckpt_path, content_path, style_path;
  std::string augment_ckpt, refs_path, seeds_csv;
  std::uint64_t seed_flag = 0;
  std::int64_t iters_flag = 0, seg_iters_flag = 0;
  int domains = 2, grid_n = 4;
  std::int64_t n_patches = 24, side = 64;
  double threshold = 0.5, augment_p = -1.0;
  bool control = false;

  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--seed", seed_flag, "override every configured seed");
  };

  CLI::App* synth = app.add_subcommand("synth-gen", "generate a labeled multi-domain synthetic dataset");
  add_config(synth);
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--domains", domains, "number of synthetic domains (>= 2)");
  synth->add_option("--patches", n_patches, "total patch count");
  synth->add_option("--side", side, "square patch side");

  CLI::App* traini = app.add_subcommand("train-i2i", "train the translation model on an unlabeled pool");
  add_config(traini);
  traini->add_option("--data", data_path, "patch directory or scene manifest")->required();
  traini->add_option("--out", out_dir, "run directory")->required();
  traini->add_option("--iters", iters_flag, "override total iterations");
  traini->add_option("--resume", ckpt_path, "checkpoint to continue from");

  CLI::App* trans = app.add_subcommand("translate", "restyle one patch with another patch's style");
  add_config(trans);
  trans->add_option("--ckpt", ckpt_path, "translation checkpoint")->required();
  trans->add_option("--content", content_path, "content patch PNG")->required();
  trans->add_option("--style", style_path, "style patch PNG")->required();
  trans->add_option("--out", out_dir, "output directory")->required();

  CLI::App* grid = app.add_subcommand("grid", "render the all-pairs translation grid");
  add_config(grid);
  grid->add_option("--ckpt", ckpt_path, "translation checkpoint")->required();
  grid->add_option("--data", data_path, "patch pool directory")->required();
  grid->add_option("--n", grid_n, "grid side (first n pool patches)");
  grid->add_option("--out", out_dir, "output directory")->required();

  CLI::App* trains = app.add_subcommand("train-seg", "train the segmentation model on labeled patches");
  add_config(trains);
  trains->add_option("--data", data_path, "labeled dataset directory")->required();
  trains->add_option("--out", out_dir, "run directory")->required();
  trains->add_option("--iters", seg_iters_flag, "override total iterations");
  trains->add_option("--augment-ckpt", augment_ckpt, "translation checkpoint for restyling augmentation");
  trains->add_option("--refs", refs_path, "style reference pool for augmentation");
  trains->add_option("--augment-p", augment_p, "per-patch restyling probability");

  CLI::App* eval = app.add_subcommand("evaluate", "score a segmentation checkpoint on a labeled dataset");
  add_config(eval);
  eval->add_option("--ckpt", ckpt_path, "segmentation checkpoint")->required();
  eval->add_option("--data", data_path, "labeled dataset directory")->required();
  eval->add_option("--out", out_dir, "output directory")->required();
  eval->add_option("--threshold", threshold, "foreground probability threshold");

  CLI::App* exper = app.add_subcommand("experiment", "run the baseline-vs-augmented study end to end");
  add_config(exper);
  exper->add_option("--out", out_dir, "experiment directory")->required();
  exper->add_flag("--control", control, "keep the target style identical to the source");
  exper->add_option("--seeds", seeds_csv, "comma-separated per-arm seeds");
  exper->add_option("--iters", iters_flag, "override translation iterations");
  exper->add_option("--seg-iters", seg_iters_flag, "override segmentation iterations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    AppConfig cfg = config_path.empty() ? AppConfig{} : parse_config(config_path);
    apply_env_overrides(cfg);
    for (CLI::App* sub : {synth, traini, trans, grid, trains, eval, exper})
      if (sub->parsed() && sub->count("--seed")) {
        cfg.i2i.seed = seed_flag;
        cfg.seg.seed = seed_flag;
      }
    const std::string invocation = join_args(argc, argv);

    if (synth->parsed()) {
      if (domains < 2) throw std::invalid_argument("--domains must be >= 2");
      write_run_stamp(out_dir, cfg, invocation);
      const SynthDataset ds = make_synth_dataset(domains, n_patches, cfg.i2i.seed, side);
      save_dataset(ds, out_dir);
      std::cout << "wrote " << ds.patches.size() << " patches across " << domains
                << " domains to " << out_dir << "\n";
    } else if (traini->parsed()) {
      if (traini->count("--iters")) cfg.i2i.total_iters = iters_flag;
      write_run_stamp(out_dir, cfg, invocation);
      const std::vector<ImagePatch> pool = load_patch_pool(data_path);
      if (!ckpt_path.empty()) {
        Trainer t = load_trainer(ckpt_path);
        std::cout << "resumed at iteration " << t.iteration() << "\n"
                  << t.fit(pool, out_dir) << "\n";
      } else {
        Trainer t(cfg.i2i);
        std::cout << t.fit(pool, out_dir) << "\n";
      }
    } else if (trans->parsed()) {
      write_run_stamp(out_dir, cfg, invocation);
      const Generator gen = load_generator(ckpt_path);
      const ImagePatch result =
          translate(gen, load_patch_png(content_path), load_patch_png(style_path));
      const std::string out_png = (fs::path(out_dir) / "translated.png").string();
      save_patch_png(result, out_png);
      std::cout << out_png << "\n";
    } else if (grid->parsed()) {
      write_run_stamp(out_dir, cfg, invocation);
      const Generator gen = load_generator(ckpt_path);
      std::vector<ImagePatch> pool = load_patch_pool(data_path);
      if (static_cast<int>(pool.size()) < grid_n)
        throw std::invalid_argument("grid needs at least " + std::to_string(grid_n) +
                                    " patches, found " + std::to_string(pool.size()));
      pool.resize(static_cast<std::size_t>(grid_n));
      const std::string out_png = (fs::path(out_dir) / "grid.png").string();
      save_patch_png(translate_grid(gen, pool), out_png);
      std::cout << out_png << "\n";
    } else if (trains->parsed()) {
      if (trains->count("--iters")) cfg.seg.total_iters = seg_iters_flag;
      if (augment_ckpt.empty() != refs_path.empty())
        throw std::invalid_argument("--augment-ckpt and --refs must be given together");
      write_run_stamp(out_dir, cfg, invocation);
      const LabeledDataset data = load_labeled_dataset(data_path);
      SegTrainer trainer(cfg.seg);
      if (!augment_ckpt.empty()) {
        const double p = augment_p < 0.0 ? cfg.exp_augment_p : augment_p;
        AugmentHook hook(load_generator(augment_ckpt), load_patch_pool(refs_path), p,
                         derive_seed(cfg.seg.seed, 0x686f6f6bULL));
        std::cout << trainer.fit(data, &hook, out_dir) << "\n";
      } else {
        std::cout << trainer.fit(data, nullptr, out_dir) << "\n";
      }
    } else if (eval->parsed()) {
      write_run_stamp(out_dir, cfg, invocation);
      SegTrainer trainer = load_seg_trainer(ckpt_path);
      const EvalResult r = evaluate_seg(trainer, load_labeled_dataset(data_path), threshold);
      std::ofstream table(fs::path(out_dir) / "evaluation.tsv", std::ios::trunc);
      table << "group\tiou\n";
      for (const auto& [group, value] : r.group_iou) table << group << "\t" << value << "\n";
      table << "# mean_iou\t" << r.mean_iou << "\n";
      std::cout << "mean IoU " << r.mean_iou << " over " << r.group_iou.size()
                << " group(s)\n";
    } else if (exper->parsed()) {
      ExperimentConfig ecfg;
      ecfg.out_dir = out_dir;
      ecfg.seeds = cfg.exp_seeds;
      ecfg.data_seed = cfg.exp_data_seed;
      ecfg.side = cfg.exp_side;
      ecfg.n_labeled = cfg.exp_n_labeled;
      ecfg.n_unlabeled = cfg.exp_n_unlabeled;
      ecfg.n_eval = cfg.exp_n_eval;
      ecfg.shifted_target = control ? false : cfg.exp_shifted;
      ecfg.augment_p = cfg.exp_augment_p;
      ecfg.i2i = cfg.i2i;
      ecfg.seg = cfg.seg;
      if (exper->count("--iters")) ecfg.i2i.total_iters = iters_flag;
      if (exper->count("--seg-iters")) ecfg.seg.total_iters = seg_iters_flag;
      if (!seeds_csv.empty()) {
        ecfg.seeds.clear();
        std::stringstream ss(seeds_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) ecfg.seeds.push_back(std::stoull(tok));
      }
      write_run_stamp(out_dir, cfg, invocation);
      const ExperimentReport r = run_experiment(ecfg);
      for (const auto& row : r.rows)
        std::cout << row.arm << " seed " << row.seed << ": IoU " << row.iou_fg << "\n";
      std::cout << "baseline median " << r.baseline_median << ", augmented median "
                << r.augmented_median << ", delta "
                << (r.augmented_median - r.baseline_median) << "\n"
                << r.table_path << "\n"
                << r.plot_path << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
