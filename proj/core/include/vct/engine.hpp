// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vct/loss.hpp"
#include "vct/vit.hpp"

namespace vct {

// What gets adapted online. `source_only` freezes everything; all other
// modes also adapt the layer-norm affines (subject to norm_rate).
enum class AdaptMode {
  source_only,    // frozen source model
  norm_only,      // layer-norm affines only
  domain_only,    // slow domain token (+ norms)
  instance_only,  // fast per-sample tokens, reset each batch (+ norms)
  full_no_reset,  // both tokens, instance tokens carried across batches
  full,           // both tokens, instance tokens reset each batch
};

bool adapts_domain(AdaptMode m);
bool adapts_instance(AdaptMode m);
bool adapts_norms(AdaptMode m);
bool resets_instance(AdaptMode m);

AdaptMode parse_adapt_mode(const std::string& name);  // throws ConfigError
const char* adapt_mode_name(AdaptMode m);
const std::vector<AdaptMode>& all_adapt_modes();

struct AdaptConfig {
  AdaptMode mode = AdaptMode::full;
  double domain_rate = 0.005;     // slow token step size
  double instance_rate = 0.01;    // fast token step size
  double norm_rate = 0.001;       // layer-norm affine step size
  double sam_radius = 0.05;       // sharpness-aware perturbation radius
  double entropy_threshold = -1;  // < 0 resolves to default_entropy_threshold

  double threshold_for(int num_classes) const;
};

// Online token state. The first-layer class token is the sum of a slowly
// updated domain token shared by the stream and a per-sample instance
// token. A parameter group participates in a step only when its mode
// adapts it and its rate is nonzero, so zero rates reproduce the smaller
// mode bit for bit.
struct TokenState {
  Tensor domain;    // [d], starts from the source-trained class token
  Tensor instance;  // [rows, d], zero-initialised
};

TokenState init_token_state(const ViTModel& model);
// instance + domain per row; requires matching widths.
Tensor compose_tokens(const TokenState& state);
// Resize the instance block. With carry_over, new row r starts from old
// row r % old_rows; otherwise rows start at zero.
void ensure_instance_rows(TokenState& state, int rows, bool carry_over);
void reset_instance(TokenState& state);

// Observation points inside one batch, in execution order.
struct PhaseHooks {
  std::function<void(const TokenState&)> after_gradients;  // gradients ready, nothing stepped yet
  std::function<void(const TokenState&)> after_update;     // parameters stepped, nothing predicted yet
  std::function<void(const TokenState&, const Tensor& logits)> after_predict;  // before the instance reset
};

struct BatchResult {
  std::vector<int> predictions;     // argmax after the update
  Tensor logits;                    // post-update logits
  Tensor entropies;                 // pre-update entropies (mask source)
  std::vector<unsigned char> mask;  // reliability mask
  int reliable = 0;
  double loss = 0;       // pre-update masked mean entropy
  double grad_norm = 0;  // gradient norm over the watched set
  bool adapted = false;  // a gradient step was taken
  bool perturbed = false;
};

// One stream step: gradient at the current state, parameter update,
// prediction at the updated state, then the mode's instance reset.
BatchResult adapt_batch(ViTModel& model, TokenState& state, const Tensor& images, const AdaptConfig& cfg,
                        const PhaseHooks* hooks = nullptr);

}  // namespace vct
