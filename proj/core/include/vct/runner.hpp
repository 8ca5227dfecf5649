// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vct/config.hpp"
#include "vct/train.hpp"

namespace vct {

// File names inside a run directory. `records`, `predictions`,
// `trajectory`, `tokens_mean`, `manifest`, `run_config` and `summary`
// are deterministic in (config, checkpoint); `timings` is wall-clock and
// excluded from byte comparisons.
inline constexpr const char* kRunConfigFile = "run_config.ini";
inline constexpr const char* kRecordsFile = "records.csv";
inline constexpr const char* kPredictionsFile = "predictions.csv";
inline constexpr const char* kTrajectoryFile = "trajectory.csv";
inline constexpr const char* kTokensMeanFile = "tokens_mean.csv";
inline constexpr const char* kManifestFile = "stream_manifest.csv";
inline constexpr const char* kTimingsFile = "timings.csv";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kAblationFile = "ablation.csv";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kTrainingLogFile = "training_log.csv";

struct RunArtifacts {
  std::string name;  // adapt mode name, or "oracle"
  double accuracy = 0;
  double mean_pass_rate = 0;  // fraction of samples the entropy filter kept
  int batches = 0;
  long samples = 0;
  std::uint32_t signature = 0;  // fingerprint of (checkpoint, stream, seed)
};

// Fingerprint shared by every run over the same checkpoint + stream +
// seed; reports refuse to mix runs whose fingerprints differ.
std::uint32_t run_signature(const ViTModel& model, const std::vector<StreamBatch>& stream, std::uint64_t seed);

// The corrupted test stream a config describes: generate the test split,
// apply the corruption (severity 0 = clean), schedule it, and keep the
// first max_batches batches.
std::vector<StreamBatch> build_stream(const RunConfig& cfg);

// One full streaming adaptation over cfg's stream, starting from
// `model`, writing every artifact into `dir` (created if needed). With
// `oracle` set the label-using reference loop runs instead and the
// per-sample files are skipped.
RunArtifacts run_adaptation(const ViTModel& model, const RunConfig& cfg, const std::string& dir, bool oracle = false);

// Runs every adaptation mode over the identical stream, one
// subdirectory per mode, plus an "ablation.csv" comparison table.
std::vector<RunArtifacts> run_ablation(const ViTModel& model, const RunConfig& cfg, const std::string& root);

// Source training per cfg: writes checkpoint.bin, training_log.csv and
// run_config.ini into `dir`; forwards per-epoch logs to `on_epoch`.
TrainResult run_training(const RunConfig& cfg, const std::string& dir,
                         const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace vct
