// SPDX-License-Identifier: Apache-2.0
#include "vct/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "vct/io.hpp"
#include "vct/kernels.hpp"

namespace vct {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative, got " + std::to_string(epochs));
  if (batch_size < 1) throw ConfigError("batch_size must be positive, got " + std::to_string(batch_size));
  if (learning_rate <= 0) throw ConfigError("learning_rate must be positive, got " + std::to_string(learning_rate));
  if (momentum < 0 || momentum >= 1)
    throw ConfigError("momentum must lie in [0,1), got " + std::to_string(momentum));
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative, got " + std::to_string(weight_decay));
}

namespace {

Tensor gather_rows(const Split& split, const std::vector<int>& order, int start, int stop) {
  const int c = split.images.dim(1), s = split.images.dim(2);
  const std::size_t pixels = static_cast<std::size_t>(c) * s * s;
  Tensor images({stop - start, c, s, s});
  for (int r = start; r < stop; ++r)
    std::memcpy(images.data() + static_cast<std::size_t>(r - start) * pixels,
                split.images.data() + static_cast<std::size_t>(order[static_cast<std::size_t>(r)]) * pixels,
                pixels * sizeof(Real));
  return images;
}

// Rows of the stored class token, built on the tape so the token receives
// the summed per-row gradient.
Traced broadcast_token(GradTape& tape, const Traced& token, int rows) {
  return tape.add_bias(Traced(Tensor({rows, token.value.dim(0)})), token);
}

}  // namespace

TrainResult train_source(const ViTModel& init, const Split& train, const Split& test, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  const int n = train.images.rank() == 4 ? train.images.dim(0) : 0;
  if (n == 0 || train.labels.size() != static_cast<std::size_t>(n))
    throw ShapeError("train_source expects a non-empty labeled split");

  TrainResult result;
  result.model = init;
  if (cfg.epochs == 0) return result;

  ViTModel& model = result.model;
  ParamSet params = all_params(model);
  Rng rng(derive_seed(cfg.seed, "train"));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  // Momentum buffers, one per parameter tensor, in registry order.
  std::vector<Tensor> velocity;
  velocity.reserve(params.items.size());
  for (const auto& item : params.items) velocity.emplace_back(item.second->shape());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int stop = std::min(n, start + cfg.batch_size);
      Tensor images = gather_rows(train, order, start, stop);
      std::vector<int> labels;
      for (int r = start; r < stop; ++r)
        labels.push_back(train.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])]);

      GradTape tape;
      Traced tokens = broadcast_token(tape, tape.watch("token", model.class_token), stop - start);
      Traced loss = tape.cross_entropy(forward_traced(tape, model, images, tokens, WatchKind::all), labels);
      loss_sum += static_cast<double>(loss.value.at(0)) * (stop - start);
      GradMap grads = tape.backward(loss);
      if (cfg.clip_norm > 0) {
        double sq = 0;
        for (const auto& [name, g] : grads) {
          (void)name;
          for (Real v : g.vec()) sq += static_cast<double>(v) * v;
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
          const Real scale = static_cast<Real>(cfg.clip_norm / norm);
          for (auto& [name, g] : grads) {
            (void)name;
            for (Real& v : g.vec()) v *= scale;
          }
        }
      }
      const Real mu = static_cast<Real>(cfg.momentum);
      const Real lr = static_cast<Real>(cfg.learning_rate);
      for (std::size_t p = 0; p < params.items.size(); ++p) {
        auto it = grads.find(params.items[p].first);
        if (it == grads.end()) continue;
        Real* v = velocity[p].data();
        Real* w = params.items[p].second->data();
        const Real* g = it->second.data();
        const std::size_t count = velocity[p].size();
        for (std::size_t k = 0; k < count; ++k) {
          v[k] = mu * v[k] + g[k];
          w[k] -= lr * v[k];
        }
      }
      if (cfg.weight_decay > 0) {
        const Real keep = static_cast<Real>(1.0 - cfg.learning_rate * cfg.weight_decay);
        for (const auto& [name, tensor] : params.items) {
          (void)name;
          for (Real& v : tensor->vec()) v *= keep;
        }
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / n;
    entry.test_accuracy = evaluate_accuracy(model, test);
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }

  const double final_accuracy = result.log.back().test_accuracy;
  if (final_accuracy < 0.80)
    throw TrainingError("source training ended at " + format_real(final_accuracy) +
                        " clean accuracy, below the 0.80 sanity floor; check rates, epochs and data");
  return result;
}

double evaluate_accuracy(const ViTModel& model, const Split& split, int eval_batch) {
  const int n = split.images.rank() == 4 ? split.images.dim(0) : 0;
  if (n == 0 || split.labels.size() != static_cast<std::size_t>(n))
    throw ShapeError("evaluate_accuracy expects a non-empty labeled split");
  if (eval_batch < 1) throw ConfigError("eval batch must be positive");

  const int c = split.images.dim(1), s = split.images.dim(2);
  const std::size_t pixels = static_cast<std::size_t>(c) * s * s;
  int correct = 0;
  for (int start = 0; start < n; start += eval_batch) {
    const int stop = std::min(n, start + eval_batch);
    Tensor images({stop - start, c, s, s});
    std::memcpy(images.data(), split.images.data() + static_cast<std::size_t>(start) * pixels,
                static_cast<std::size_t>(stop - start) * pixels * sizeof(Real));
    Tensor tokens({stop - start, model.cfg.embed_dim});
    for (int r = 0; r < stop - start; ++r)
      std::memcpy(&tokens.at(r, 0), model.class_token.data(),
                  static_cast<std::size_t>(model.cfg.embed_dim) * sizeof(Real));
    const std::vector<int> preds = argmax_rows(forward(model, images, tokens));
    for (int r = 0; r < stop - start; ++r)
      if (preds[static_cast<std::size_t>(r)] == split.labels[static_cast<std::size_t>(start + r)]) ++correct;
  }
  return static_cast<double>(correct) / n;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string csv = "epoch,train_loss,clean_test_accuracy\n";
  for (const EpochLog& e : log)
    csv += std::to_string(e.epoch) + "," + format_real(e.train_loss) + "," + format_real(e.test_accuracy) + "\n";
  return csv;
}

OracleRun oracle_adapt_run(ViTModel model, const std::vector<StreamBatch>& stream, const AdaptConfig& cfg) {
  OracleRun run;
  TokenState state = init_token_state(model);
  int correct = 0, total = 0;

  for (const StreamBatch& batch : stream) {
    const Tensor& images = batch.images;
    const int rows = images.dim(0);
    ensure_instance_rows(state, rows, !resets_instance(cfg.mode));

    const bool use_domain = adapts_domain(cfg.mode) && cfg.domain_rate != 0;
    const bool use_instance = adapts_instance(cfg.mode) && cfg.instance_rate != 0;
    const bool use_norms = adapts_norms(cfg.mode) && cfg.norm_rate != 0;

    if (use_domain || use_instance || use_norms) {
      GradTape tape;
      Traced domain = use_domain ? tape.watch("domain", state.domain) : Traced(state.domain);
      Traced instance = use_instance ? tape.watch("instance", state.instance) : Traced(state.instance);
      Traced tokens = tape.add_bias(instance, domain);
      const WatchKind kind = use_norms ? WatchKind::ln_only : WatchKind::none;
      Traced loss = tape.cross_entropy(forward_traced(tape, model, images, tokens, kind), batch.labels);
      run.losses.push_back(static_cast<double>(loss.value.at(0)));
      GradMap grads = tape.backward(loss);

      ParamSet norm_set = ln_params(model);
      if (use_domain) {
        ParamSet group;
        group.add("domain", &state.domain);
        apply_step(group, grads, -cfg.domain_rate);
      }
      if (use_instance) {
        ParamSet group;
        group.add("instance", &state.instance);
        apply_step(group, grads, -cfg.instance_rate);
      }
      if (use_norms) apply_step(norm_set, grads, -cfg.norm_rate);
    } else {
      auto ce = kernels::cross_entropy(forward(model, images, compose_tokens(state)), batch.labels);
      run.losses.push_back(static_cast<double>(ce.out.at(0)));
    }

    const std::vector<int> preds = argmax_rows(forward(model, images, compose_tokens(state)));
    for (std::size_t r = 0; r < preds.size(); ++r) {
      ++total;
      if (preds[r] == batch.labels[r]) ++correct;
    }
    if (resets_instance(cfg.mode)) reset_instance(state);
    run.domain_trajectory.push_back(state.domain);
  }
  run.accuracy = total > 0 ? static_cast<double>(correct) / total : 0;
  run.final_state = state;
  return run;
}

}  // namespace vct
