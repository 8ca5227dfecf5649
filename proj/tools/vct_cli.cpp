// SPDX-License-Identifier: Apache-2.0
// Command-line harness: source training, streaming adaptation, mode
// ablation, and post-run analysis over run directories.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vct/analysis.hpp"
#include "vct/checkpoint.hpp"
#include "vct/config.hpp"
#include "vct/io.hpp"
#include "vct/runner.hpp"

namespace {

using namespace vct;

// Layered configuration: defaults, then the config file, then --set
// overrides, then the dedicated flags.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;

  void attach(CLI::App* cmd, bool with_out = true) {
    cmd->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "Override one key, e.g. --set adapt.mode=full")->take_all();
    cmd->add_option("--seed", seed, "Master seed (overrides the file)")->each([this](const std::string&) {
      seed_given = true;
    });
    if (with_out) cmd->add_option("--out", out, "Output directory");
  }

  RunConfig resolve(const std::string& default_leaf) const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_run_config(read_file(config_path), cfg);
    for (const std::string& s : sets) apply_override(cfg, s);
    if (seed_given) apply_override(cfg, "run.seed=" + std::to_string(seed));
    if (!out.empty()) cfg.out = out;
    if (cfg.out.empty()) {
      const char* root = std::getenv("VCT_OUT_ROOT");
      cfg.out = std::string(root && *root ? root : "runs") + "/" + default_leaf + "-seed" + std::to_string(cfg.seed);
    }
    cfg.validate();
    return cfg;
  }
};

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

Trajectory load_run_trajectory(const std::string& dir) {
  const std::string path = dir + "/" + kTrajectoryFile;
  if (!std::filesystem::exists(path)) throw InputError("missing trajectory file: " + path);
  // The run's name comes from its summary-bearing config, keeping
  // report columns self-describing.
  RunConfig cfg = parse_run_config(read_file(dir + "/" + kRunConfigFile), RunConfig{});
  Trajectory t = parse_trajectory_csv(read_file(path), adapt_mode_name(cfg.adapt.mode));
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-level conditioning-token test-time adaptation workbench"};
  app.require_subcommand(1);

  ConfigArgs train_args, adapt_args, ablate_args, sweep_args;
  bool adapt_oracle = false;
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Suppress progress lines");

  CLI::App* cmd_train = app.add_subcommand("train", "Train the source model and write a checkpoint");
  train_args.attach(cmd_train);

  CLI::App* cmd_adapt = app.add_subcommand("adapt", "Run streaming adaptation from a checkpoint");
  adapt_args.attach(cmd_adapt);
  std::string adapt_ckpt;
  cmd_adapt->add_option("--checkpoint", adapt_ckpt, "Source checkpoint")->required()->check(CLI::ExistingFile);
  cmd_adapt->add_flag("--oracle", adapt_oracle, "Label-using reference run (diagnostics only)");

  CLI::App* cmd_ablate = app.add_subcommand("ablate", "Run every adaptation mode on one identical stream");
  ablate_args.attach(cmd_ablate);
  std::string ablate_ckpt;
  cmd_ablate->add_option("--checkpoint", ablate_ckpt, "Source checkpoint")->required()->check(CLI::ExistingFile);

  CLI::App* cmd_analyze = app.add_subcommand("analyze", "Post-run reports over finished run directories");
  cmd_analyze->require_subcommand(1);

  CLI::App* an_similarity = cmd_analyze->add_subcommand(
      "similarity", "Per-batch cosine similarity of each run's domain token to the oracle's");
  std::string sim_oracle_dir, sim_out;
  std::vector<std::string> sim_runs;
  an_similarity->add_option("--oracle", sim_oracle_dir, "Oracle run directory")->required();
  an_similarity->add_option("--runs", sim_runs, "Run directories to compare")->required()->take_all();
  an_similarity->add_option("--out", sim_out, "Output directory")->required();

  CLI::App* an_pca = cmd_analyze->add_subcommand("pca", "2-D principal-component projection of token trajectories");
  std::vector<std::string> pca_runs;
  std::string pca_out;
  an_pca->add_option("--runs", pca_runs, "Run directories to project")->required()->take_all();
  an_pca->add_option("--out", pca_out, "Output directory")->required();

  CLI::App* an_sweep = cmd_analyze->add_subcommand("sweep", "Token-rate sensitivity sweep (one run per grid point)");
  sweep_args.attach(an_sweep);
  std::string sweep_ckpt;
  an_sweep->add_option("--checkpoint", sweep_ckpt, "Source checkpoint")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  if (cmd_train->parsed()) {
    return guarded([&] {
      RunConfig cfg = train_args.resolve("train");
      TrainResult res = run_training(cfg, cfg.out, [&](const EpochLog& e) {
        if (!quiet)
          std::printf("epoch %d: train_loss=%s clean_accuracy=%s\n", e.epoch, format_real(e.train_loss).c_str(),
                      format_real(e.test_accuracy).c_str());
      });
      std::printf("checkpoint: %s\n", (cfg.out + "/" + kCheckpointFile).c_str());
      std::printf("clean_accuracy: %s\n", format_real(res.log.empty() ? 0.0 : res.log.back().test_accuracy).c_str());
      return 0;
    });
  }

  if (cmd_adapt->parsed()) {
    return guarded([&] {
      RunConfig cfg = adapt_args.resolve(adapt_oracle ? "oracle" : "adapt");
      ViTModel model = load_checkpoint(adapt_ckpt);
      RunArtifacts a = run_adaptation(model, cfg, cfg.out, adapt_oracle);
      std::printf("run: %s\nname: %s\naccuracy: %s\n", cfg.out.c_str(), a.name.c_str(),
                  format_real(a.accuracy).c_str());
      return 0;
    });
  }

  if (cmd_ablate->parsed()) {
    return guarded([&] {
      RunConfig cfg = ablate_args.resolve("ablate");
      ViTModel model = load_checkpoint(ablate_ckpt);
      std::vector<RunArtifacts> rows = run_ablation(model, cfg, cfg.out);
      std::printf("table: %s\n", (cfg.out + "/" + kAblationFile).c_str());
      for (const RunArtifacts& a : rows)
        std::printf("%-16s accuracy=%s pass_rate=%s\n", a.name.c_str(), format_real(a.accuracy).c_str(),
                    format_real(a.mean_pass_rate).c_str());
      return 0;
    });
  }

  if (an_similarity->parsed()) {
    return guarded([&] {
      Trajectory oracle =
          parse_trajectory_csv(read_file(sim_oracle_dir + "/" + kTrajectoryFile), "oracle");
      std::vector<Trajectory> runs;
      for (const std::string& dir : sim_runs) runs.push_back(load_run_trajectory(dir));
      SimilarityReport report = similarity_report(runs, oracle);
      ensure_dir(sim_out);
      write_file_atomic(sim_out + "/similarity.csv", report.per_batch_csv());
      write_file_atomic(sim_out + "/similarity_summary.csv", report.summary_csv());
      std::printf("wrote %s/similarity.csv and similarity_summary.csv\n", sim_out.c_str());
      return 0;
    });
  }

  if (an_pca->parsed()) {
    return guarded([&] {
      ensure_dir(pca_out);
      for (const std::string& dir : pca_runs) {
        Trajectory t = load_run_trajectory(dir);
        write_file_atomic(pca_out + "/" + t.name + "_pca.csv", pca_csv(pca_project(t.snapshots, 2)));
      }
      std::printf("wrote %zu projection file(s) under %s\n", pca_runs.size(), pca_out.c_str());
      return 0;
    });
  }

  if (an_sweep->parsed()) {
    return guarded([&] {
      RunConfig cfg = sweep_args.resolve("sweep");
      ViTModel model = load_checkpoint(sweep_ckpt);
      const std::vector<StreamBatch> stream = build_stream(cfg);
      const std::vector<double> grid = default_rate_grid();
      const std::vector<SweepPoint> points = sensitivity_sweep(model, stream, cfg.adapt, grid, grid);
      ensure_dir(cfg.out);
      write_file_atomic(cfg.out + "/sweep.csv", sweep_csv(points));
      write_file_atomic(cfg.out + "/" + kRunConfigFile, serialize_run_config(cfg));
      std::printf("wrote %s/sweep.csv (%zu points)\n", cfg.out.c_str(), points.size());
      return 0;
    });
  }

  return 0;
}
