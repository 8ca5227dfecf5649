// SPDX-License-Identifier: Apache-2.0
#include "vct/runner.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>

#include "json.hpp"
#include "vct/analysis.hpp"
#include "vct/checkpoint.hpp"
#include "vct/io.hpp"

namespace vct {

namespace {

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string join(const std::string& dir, const char* file) { return dir + "/" + file; }

double mean_of(const Tensor& t) {
  double sum = 0;
  for (std::size_t i = 0; i < t.size(); ++i) sum += t.data()[i];
  return t.size() ? sum / static_cast<double>(t.size()) : 0.0;
}

Tensor column_mean(const Tensor& rows) {
  const int n = rows.dim(0), d = rows.dim(1);
  Tensor mean({d});
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < d; ++j) mean.data()[j] += rows.at(r, j);
  for (int j = 0; j < d; ++j) mean.data()[j] /= static_cast<Real>(n);
  return mean;
}

void write_summary(const std::string& dir, const RunConfig& cfg, const RunArtifacts& a, bool oracle) {
  nlohmann::json summary;
  summary["accuracy"] = a.accuracy;
  summary["batches"] = a.batches;
  summary["corruption"] = corruption_kind_name(cfg.corruption.kind);
  if (!oracle) summary["mean_pass_rate"] = a.mean_pass_rate;
  summary["name"] = a.name;
  summary["protocol"] = protocol_name(cfg.protocol);
  summary["samples"] = a.samples;
  summary["seed"] = cfg.seed;
  summary["severity"] = cfg.corruption.severity;
  summary["signature"] = hex32(a.signature);
  write_file_atomic(join(dir, kSummaryFile), summary.dump(2) + "\n");
}

}  // namespace

std::uint32_t run_signature(const ViTModel& model, const std::vector<StreamBatch>& stream, std::uint64_t seed) {
  const std::string ckpt = serialize_checkpoint(model);
  std::uint32_t sig = crc32(ckpt.data(), ckpt.size());
  const std::string manifest = stream_manifest_csv(stream);
  sig = crc32(manifest.data(), manifest.size(), sig);
  unsigned char seed_le[8];
  for (int i = 0; i < 8; ++i) seed_le[i] = static_cast<unsigned char>((seed >> (8 * i)) & 0xFF);
  return crc32(seed_le, sizeof seed_le, sig);
}

std::vector<StreamBatch> build_stream(const RunConfig& cfg) {
  cfg.validate();
  Split test = generate_split(cfg.dataset_spec(), "test");
  if (cfg.corruption.severity > 0) test.images = corrupt(test.images, cfg.corruption);
  std::vector<StreamBatch> stream = schedule(test, cfg.protocol, cfg.stream_batch, cfg.seed);
  if (cfg.max_batches > 0 && static_cast<int>(stream.size()) > cfg.max_batches)
    stream.resize(static_cast<std::size_t>(cfg.max_batches));
  return stream;
}

RunArtifacts run_adaptation(const ViTModel& model, const RunConfig& cfg, const std::string& dir, bool oracle) {
  if (model.cfg.num_classes != cfg.model.num_classes || model.cfg.embed_dim != cfg.model.embed_dim ||
      model.cfg.image_size != cfg.model.image_size || model.cfg.channels != cfg.model.channels)
    throw ConfigError("checkpoint geometry does not match the [model] section");
  const std::vector<StreamBatch> stream = build_stream(cfg);
  ensure_dir(dir);

  RunArtifacts artifacts;
  artifacts.name = oracle ? "oracle" : adapt_mode_name(cfg.adapt.mode);
  artifacts.batches = static_cast<int>(stream.size());
  artifacts.signature = run_signature(model, stream, cfg.seed);

  Trajectory domain_trail, mean_trail;
  domain_trail.name = mean_trail.name = artifacts.name;
  domain_trail.signature = mean_trail.signature = artifacts.signature;

  std::string records, predictions, timings;
  long correct = 0, kept = 0;

  if (oracle) {
    records = "batch_index,batch_size,loss\n";
    const auto t0 = std::chrono::steady_clock::now();
    OracleRun run = oracle_adapt_run(model, stream, cfg.adapt);
    const double total_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    timings = "batch_index,wall_ms\ntotal," + format_real(total_ms) + "\n";
    for (std::size_t j = 0; j < stream.size(); ++j) {
      records += std::to_string(j) + "," + std::to_string(stream[j].sample_ids.size()) + "," +
                 format_real(run.losses[j]) + "\n";
      artifacts.samples += static_cast<long>(stream[j].sample_ids.size());
    }
    domain_trail.snapshots = std::move(run.domain_trajectory);
    artifacts.accuracy = run.accuracy;
  } else {
    records = "batch_index,batch_size,accuracy,mean_entropy,pass_rate,loss,grad_norm\n";
    predictions = "batch_index,slot,sample_id,label,prediction,entropy,reliable\n";
    timings = "batch_index,wall_ms\n";

    ViTModel work = model;
    TokenState state = init_token_state(work);
    PhaseHooks hooks;
    hooks.after_predict = [&](const TokenState& st, const Tensor&) {
      mean_trail.snapshots.push_back(column_mean(compose_tokens(st)));
    };

    for (const StreamBatch& batch : stream) {
      const auto t0 = std::chrono::steady_clock::now();
      BatchResult r = adapt_batch(work, state, batch.adaptation_view(), cfg.adapt, &hooks);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

      const int b = static_cast<int>(batch.sample_ids.size());
      int batch_correct = 0;
      for (int i = 0; i < b; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        if (r.predictions[si] == batch.labels[si]) ++batch_correct;
        predictions += std::to_string(batch.batch_index) + "," + std::to_string(i) + "," +
                       std::to_string(batch.sample_ids[si]) + "," + std::to_string(batch.labels[si]) + "," +
                       std::to_string(r.predictions[si]) + "," + format_real(r.entropies.at(i)) + "," +
                       std::to_string(static_cast<int>(r.mask[si])) + "\n";
      }
      correct += batch_correct;
      kept += r.reliable;
      artifacts.samples += b;

      records += std::to_string(batch.batch_index) + "," + std::to_string(b) + "," +
                 format_real(static_cast<double>(batch_correct) / b) + "," + format_real(mean_of(r.entropies)) +
                 "," + format_real(static_cast<double>(r.reliable) / b) + "," + format_real(r.loss) + "," +
                 format_real(r.grad_norm) + "\n";
      timings += std::to_string(batch.batch_index) + "," + format_real(ms) + "\n";
      domain_trail.snapshots.push_back(state.domain);
    }
    artifacts.accuracy = artifacts.samples ? static_cast<double>(correct) / static_cast<double>(artifacts.samples) : 0;
    artifacts.mean_pass_rate =
        artifacts.samples ? static_cast<double>(kept) / static_cast<double>(artifacts.samples) : 0;
  }

  // The stored manifest describes the run, not its location: clearing
  // the destination keeps identical runs byte-identical wherever they
  // land.
  RunConfig stored = cfg;
  stored.out.clear();
  write_file_atomic(join(dir, kRunConfigFile), serialize_run_config(stored));
  write_file_atomic(join(dir, kManifestFile), stream_manifest_csv(stream));
  write_file_atomic(join(dir, kRecordsFile), records);
  if (!oracle) write_file_atomic(join(dir, kPredictionsFile), predictions);
  write_file_atomic(join(dir, kTrajectoryFile), trajectory_csv(domain_trail));
  if (!oracle) write_file_atomic(join(dir, kTokensMeanFile), trajectory_csv(mean_trail));
  write_file_atomic(join(dir, kTimingsFile), timings);
  write_summary(dir, cfg, artifacts, oracle);
  return artifacts;
}

std::vector<RunArtifacts> run_ablation(const ViTModel& model, const RunConfig& cfg, const std::string& root) {
  ensure_dir(root);
  std::vector<RunArtifacts> rows;
  std::string table = "mode,accuracy,mean_pass_rate\n";
  for (AdaptMode mode : all_adapt_modes()) {
    RunConfig sub = cfg;
    sub.adapt.mode = mode;
    RunArtifacts a = run_adaptation(model, sub, root + "/" + adapt_mode_name(mode));
    table += std::string(adapt_mode_name(mode)) + "," + format_real(a.accuracy) + "," +
             format_real(a.mean_pass_rate) + "\n";
    rows.push_back(std::move(a));
  }
  write_file_atomic(root + "/" + kAblationFile, table);
  return rows;
}

TrainResult run_training(const RunConfig& cfg, const std::string& dir,
                         const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  ensure_dir(dir);
  Dataset ds = generate_dataset(cfg.dataset_spec());
  ViTModel init = init_model(cfg.model, cfg.seed);
  TrainResult result = train_source(init, ds.train, ds.test, cfg.train, on_epoch);
  RunConfig stored = cfg;
  stored.out.clear();
  write_file_atomic(join(dir, kRunConfigFile), serialize_run_config(stored));
  save_checkpoint(join(dir, kCheckpointFile), result.model);
  write_file_atomic(join(dir, kTrainingLogFile), training_log_csv(result.log));
  return result;
}

}  // namespace vct
