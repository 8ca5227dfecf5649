// SPDX-License-Identifier: Apache-2.0
#include "vct/engine.hpp"

#include <cstring>

#include "vct/kernels.hpp"

namespace vct {

bool adapts_domain(AdaptMode m) {
  return m == AdaptMode::domain_only || m == AdaptMode::full_no_reset || m == AdaptMode::full;
}

bool adapts_instance(AdaptMode m) {
  return m == AdaptMode::instance_only || m == AdaptMode::full_no_reset || m == AdaptMode::full;
}

bool adapts_norms(AdaptMode m) { return m != AdaptMode::source_only; }

bool resets_instance(AdaptMode m) { return m != AdaptMode::full_no_reset; }

namespace {

constexpr std::pair<const char*, AdaptMode> kModeNames[] = {
    {"source_only", AdaptMode::source_only},     {"norm_only", AdaptMode::norm_only},
    {"domain_only", AdaptMode::domain_only},     {"instance_only", AdaptMode::instance_only},
    {"full_no_reset", AdaptMode::full_no_reset}, {"full", AdaptMode::full},
};

}  // namespace

AdaptMode parse_adapt_mode(const std::string& name) {
  for (const auto& [text, mode] : kModeNames)
    if (name == text) return mode;
  std::string known;
  for (const auto& [text, mode] : kModeNames) {
    (void)mode;
    known += known.empty() ? text : std::string(", ") + text;
  }
  throw ConfigError("unknown adapt mode '" + name + "' (known: " + known + ")");
}

const char* adapt_mode_name(AdaptMode m) {
  for (const auto& [text, mode] : kModeNames)
    if (mode == m) return text;
  throw UsageError("unnamed adapt mode");
}

const std::vector<AdaptMode>& all_adapt_modes() {
  static const std::vector<AdaptMode> modes = {AdaptMode::source_only,    AdaptMode::norm_only,
                                               AdaptMode::domain_only,    AdaptMode::instance_only,
                                               AdaptMode::full_no_reset,  AdaptMode::full};
  return modes;
}

double AdaptConfig::threshold_for(int num_classes) const {
  return entropy_threshold >= 0 ? entropy_threshold : default_entropy_threshold(num_classes);
}

TokenState init_token_state(const ViTModel& model) {
  TokenState state;
  state.domain = model.class_token;
  return state;
}

Tensor compose_tokens(const TokenState& state) {
  if (state.instance.rank() != 2 || state.domain.rank() != 1 || state.instance.dim(1) != state.domain.dim(0))
    throw UsageError("compose_tokens needs instance [rows,d] and domain [d]; call ensure_instance_rows first");
  return kernels::add_bias(state.instance, state.domain);
}

void ensure_instance_rows(TokenState& state, int rows, bool carry_over) {
  if (rows <= 0) throw UsageError("instance rows must be positive");
  const int d = state.domain.dim(0);
  const bool sized = state.instance.rank() == 2 && state.instance.dim(1) == d;
  if (sized && state.instance.dim(0) == rows) return;
  Tensor next({rows, d});
  if (carry_over && sized && state.instance.dim(0) > 0) {
    const int old_rows = state.instance.dim(0);
    for (int r = 0; r < rows; ++r)
      std::memcpy(&next.at(r, 0), &state.instance.at(r % old_rows, 0), sizeof(Real) * static_cast<std::size_t>(d));
  }
  state.instance = next;
}

void reset_instance(TokenState& state) { state.instance.fill(Real(0)); }

BatchResult adapt_batch(ViTModel& model, TokenState& state, const Tensor& images, const AdaptConfig& cfg,
                        const PhaseHooks* hooks) {
  if (images.rank() != 4) throw ShapeError("adapt_batch expects images [b,c,h,w], got " + images.shape_str());
  const int batch = images.dim(0);
  ensure_instance_rows(state, batch, !resets_instance(cfg.mode));

  const bool use_domain = adapts_domain(cfg.mode) && cfg.domain_rate != 0;
  const bool use_instance = adapts_instance(cfg.mode) && cfg.instance_rate != 0;
  const bool use_norms = adapts_norms(cfg.mode) && cfg.norm_rate != 0;
  const double threshold = cfg.threshold_for(model.cfg.num_classes);

  BatchResult out;
  if (use_domain || use_instance || use_norms) {
    ParamSet watched;
    if (use_domain) watched.add("domain", &state.domain);
    if (use_instance) watched.add("instance", &state.instance);
    ParamSet norm_set = ln_params(model);
    if (use_norms)
      for (const auto& [name, tensor] : norm_set.items) watched.add(name, tensor);

    auto trace = [&](GradTape& tape) -> Traced {
      Traced domain = use_domain ? tape.watch("domain", state.domain) : Traced(state.domain);
      Traced instance = use_instance ? tape.watch("instance", state.instance) : Traced(state.instance);
      Traced tokens = tape.add_bias(instance, domain);
      const WatchKind kind = use_norms ? WatchKind::ln_only : WatchKind::none;
      return tape.entropy(forward_traced(tape, model, images, tokens, kind));
    };
    SamResult sam = sam_step(trace, watched, threshold, cfg.sam_radius);
    out.entropies = sam.entropies;
    out.mask = sam.mask;
    out.reliable = sam.reliable;
    out.loss = sam.loss;
    out.grad_norm = sam.grad_norm;
    out.perturbed = sam.perturbed;
    out.adapted = true;
    if (hooks && hooks->after_gradients) hooks->after_gradients(state);

    if (use_domain) {
      ParamSet group;
      group.add("domain", &state.domain);
      apply_step(group, sam.grads, -cfg.domain_rate);
    }
    if (use_instance) {
      ParamSet group;
      group.add("instance", &state.instance);
      apply_step(group, sam.grads, -cfg.instance_rate);
    }
    if (use_norms) apply_step(norm_set, sam.grads, -cfg.norm_rate);
    if (hooks && hooks->after_update) hooks->after_update(state);
    out.logits = forward(model, images, compose_tokens(state));
  } else {
    // Nothing to step: one forward serves both the objective report and
    // the predictions, matching a frozen source model bit for bit.
    out.logits = forward(model, images, compose_tokens(state));
    ObjectiveEval ev = eval_objective(out.logits, threshold);
    out.entropies = ev.entropies;
    out.mask = ev.mask;
    out.reliable = ev.reliable;
    out.loss = ev.loss;
    if (hooks && hooks->after_gradients) hooks->after_gradients(state);
    if (hooks && hooks->after_update) hooks->after_update(state);
  }

  out.predictions = argmax_rows(out.logits);
  if (hooks && hooks->after_predict) hooks->after_predict(state, out.logits);

  if (resets_instance(cfg.mode)) reset_instance(state);
  return out;
}

}  // namespace vct
