// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vct/engine.hpp"
#include "vct/stream.hpp"
#include "vct/vit.hpp"

namespace vct {

// Deterministic mini-batch gradient descent with classical momentum and
// global-norm gradient clipping over every parameter, class token
// included. Fixed learning rate, optional decoupled weight decay, fresh
// shuffle each epoch.
struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double clip_norm = 1.0;  // <=0 disables clipping
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct EpochLog {
  int epoch = 0;            // 1-based
  double train_loss = 0;    // mean cross-entropy over the epoch
  double test_accuracy = 0; // clean accuracy after the epoch
};

struct TrainResult {
  ViTModel model;
  std::vector<EpochLog> log;
};

// Trains a copy of `init`. Zero epochs returns the initialization
// untouched; otherwise an end accuracy below 0.80 raises TrainingError as
// a misconfiguration guard. `on_epoch`, when given, observes each epoch
// as it completes (progress reporting).
TrainResult train_source(const ViTModel& init, const Split& train, const Split& test, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {});

// Accuracy of the frozen model (class token as-is) on a split.
double evaluate_accuracy(const ViTModel& model, const Split& split, int eval_batch = 256);

std::string training_log_csv(const std::vector<EpochLog>& log);

// Label-using reference adaptation for analysis: the same bi-level token
// update loop and rates as the online engine, but driven by cross-entropy
// against the true labels, without the sharpness excursion or the
// reliability mask. Records the domain token after every batch.
struct OracleRun {
  std::vector<Tensor> domain_trajectory;  // one [d] snapshot per batch
  std::vector<double> losses;             // per-batch cross-entropy
  double accuracy = 0;                    // post-update predictions
  TokenState final_state;
};

OracleRun oracle_adapt_run(ViTModel model, const std::vector<StreamBatch>& stream, const AdaptConfig& cfg);

}  // namespace vct
