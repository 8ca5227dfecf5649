// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "vct/tape.hpp"

namespace vct {

inline constexpr Real kLayerNormEps = Real(1e-6);

struct ViTConfig {
  int image_size = 32;
  int patch_size = 8;
  int channels = 3;
  int embed_dim = 64;
  int num_layers = 4;
  int num_heads = 4;
  int mlp_ratio = 4;
  int num_classes = 10;

  int patches_per_side() const { return image_size / patch_size; }
  int num_patches() const { return patches_per_side() * patches_per_side(); }
  int seq_len() const { return num_patches() + 1; }
  int patch_dim() const { return channels * patch_size * patch_size; }
  void validate() const;  // throws ConfigError naming the offending field
};

struct LayerParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Pre-norm encoder: per block LN -> attention -> residual, then
// LN -> MLP(GELU) -> residual; a closing layer norm is applied to the
// class-token slot before the linear head, as in standard pre-norm
// transformers (without it the residual stream never reaches unit scale
// and plain gradient descent stalls). Slot 0 of pos_embed belongs to the
// class token.
struct ViTModel {
  ViTConfig cfg;
  Tensor patch_weight;  // [patch_dim, d]
  Tensor patch_bias;    // [d]
  Tensor pos_embed;     // [seq_len, d]
  Tensor class_token;   // [d], the source-trained token
  std::vector<LayerParams> layers;
  Tensor final_gamma, final_beta;  // closing layer norm
  Tensor head_weight;              // [d, num_classes]
  Tensor head_bias;                // [num_classes]
};

// Zero-filled model with the shapes implied by cfg; the single place where
// parameter shapes are defined.
ViTModel make_model(const ViTConfig& cfg);
ViTModel init_model(const ViTConfig& cfg, std::uint64_t seed);

// Which model parameters are registered on the tape. Token inputs are
// handled by the caller, so `all` covers everything except the token.
enum class WatchKind { none, ln_only, all };

// images [b,c,h,w] with per-sample tokens [b,d] -> logits [b,k].
Traced forward_traced(GradTape& tape, const ViTModel& model, const Tensor& images, const Traced& tokens,
                      WatchKind watch);

// Plain inference: same code path with nothing watched, hence bit-identical
// to the traced forward at equal parameters.
Tensor forward(const ViTModel& model, const Tensor& images, const Tensor& tokens);

// Patch embedding including patch-slot positional rows; exposed for tests.
Tensor encode_patches(const ViTModel& model, const Tensor& images);
// One encoder block on [b,s,d]; exposed for tests.
Tensor encoder_block(const LayerParams& lp, int num_heads, const Tensor& seq);

// Parameter registries; names are shared with forward_traced.
ParamSet ln_params(ViTModel& model);
ParamSet all_params(ViTModel& model);  // includes class_token under "token"

bool models_equal(const ViTModel& a, const ViTModel& b);

}  // namespace vct
