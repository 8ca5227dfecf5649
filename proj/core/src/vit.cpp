// SPDX-License-Identifier: Apache-2.0
#include "vct/vit.hpp"

#include <string>

#include "vct/kernels.hpp"

namespace vct {

void ViTConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v <= 0) throw ConfigError(std::string(field) + " must be positive, got " + std::to_string(v));
  };
  positive(image_size, "image_size");
  positive(patch_size, "patch_size");
  positive(channels, "channels");
  positive(embed_dim, "embed_dim");
  positive(num_layers, "num_layers");
  positive(num_heads, "num_heads");
  positive(mlp_ratio, "mlp_ratio");
  positive(num_classes, "num_classes");
  if (image_size % patch_size != 0)
    throw ConfigError("patch_size " + std::to_string(patch_size) + " does not tile image_size " +
                      std::to_string(image_size));
  if (embed_dim % num_heads != 0)
    throw ConfigError("num_heads " + std::to_string(num_heads) + " does not divide embed_dim " +
                      std::to_string(embed_dim));
}

ViTModel make_model(const ViTConfig& cfg) {
  cfg.validate();
  const int d = cfg.embed_dim;
  ViTModel m;
  m.cfg = cfg;
  m.patch_weight = Tensor({cfg.patch_dim(), d});
  m.patch_bias = Tensor({d});
  m.pos_embed = Tensor({cfg.seq_len(), d});
  m.class_token = Tensor({d});
  m.layers.resize(static_cast<std::size_t>(cfg.num_layers));
  for (auto& lp : m.layers) {
    lp.ln1_gamma = Tensor({d});
    lp.ln1_beta = Tensor({d});
    lp.wq = Tensor({d, d});
    lp.bq = Tensor({d});
    lp.wk = Tensor({d, d});
    lp.bk = Tensor({d});
    lp.wv = Tensor({d, d});
    lp.bv = Tensor({d});
    lp.wo = Tensor({d, d});
    lp.bo = Tensor({d});
    lp.ln2_gamma = Tensor({d});
    lp.ln2_beta = Tensor({d});
    lp.mlp_w1 = Tensor({d, cfg.mlp_ratio * d});
    lp.mlp_b1 = Tensor({cfg.mlp_ratio * d});
    lp.mlp_w2 = Tensor({cfg.mlp_ratio * d, d});
    lp.mlp_b2 = Tensor({d});
  }
  m.final_gamma = Tensor({d});
  m.final_beta = Tensor({d});
  m.head_weight = Tensor({d, cfg.num_classes});
  m.head_bias = Tensor({cfg.num_classes});
  return m;
}

ViTModel init_model(const ViTConfig& cfg, std::uint64_t seed) {
  ViTModel m = make_model(cfg);
  Rng rng(derive_seed(seed, "model_init"));
  const double sd = 0.02;
  auto fill_randn = [&](Tensor& t) {
    for (auto& v : t.vec()) v = Real(rng.normal(0.0, sd));
  };
  fill_randn(m.patch_weight);
  fill_randn(m.pos_embed);
  fill_randn(m.class_token);
  for (auto& lp : m.layers) {
    lp.ln1_gamma.fill(Real(1));
    lp.ln2_gamma.fill(Real(1));
    fill_randn(lp.wq);
    fill_randn(lp.wk);
    fill_randn(lp.wv);
    fill_randn(lp.wo);
    fill_randn(lp.mlp_w1);
    fill_randn(lp.mlp_w2);
  }
  m.final_gamma.fill(Real(1));
  fill_randn(m.head_weight);
  return m;
}

namespace {

std::string enc(int i, const char* field) { return "enc." + std::to_string(i) + "." + field; }

// Wraps a model tensor either as a watched tape leaf or as a constant.
struct WeightCtx {
  GradTape& tape;
  bool watched;
  Traced operator()(const std::string& name, const Tensor& t) const {
    return watched ? tape.watch(name, t) : Traced(t);
  }
};

Traced block_traced(GradTape& t, const LayerParams& lp, int heads, const Traced& seq, int layer, bool watch_ln,
                    bool watch_all) {
  WeightCtx ln{t, watch_ln || watch_all};
  WeightCtx w{t, watch_all};
  Traced h1 = t.layer_norm(seq, ln(enc(layer, "ln1.gamma"), lp.ln1_gamma), ln(enc(layer, "ln1.beta"), lp.ln1_beta),
                           kLayerNormEps);
  GradTape::AttnArgs attn{w(enc(layer, "wq"), lp.wq), w(enc(layer, "bq"), lp.bq), w(enc(layer, "wk"), lp.wk),
                          w(enc(layer, "bk"), lp.bk), w(enc(layer, "wv"), lp.wv), w(enc(layer, "bv"), lp.bv),
                          w(enc(layer, "wo"), lp.wo), w(enc(layer, "bo"), lp.bo)};
  Traced res1 = t.add(seq, t.attention(h1, attn, heads));
  Traced h2 = t.layer_norm(res1, ln(enc(layer, "ln2.gamma"), lp.ln2_gamma), ln(enc(layer, "ln2.beta"), lp.ln2_beta),
                           kLayerNormEps);
  Traced m1 = t.gelu(t.add_bias(t.matmul(h2, w(enc(layer, "mlp.w1"), lp.mlp_w1)), w(enc(layer, "mlp.b1"), lp.mlp_b1)));
  Traced m2 = t.add_bias(t.matmul(m1, w(enc(layer, "mlp.w2"), lp.mlp_w2)), w(enc(layer, "mlp.b2"), lp.mlp_b2));
  return t.add(res1, m2);
}

}  // namespace

Traced forward_traced(GradTape& tape, const ViTModel& model, const Tensor& images, const Traced& tokens,
                      WatchKind watch) {
  const ViTConfig& cfg = model.cfg;
  if (images.rank() != 4 || images.dim(1) != cfg.channels || images.dim(2) != cfg.image_size ||
      images.dim(3) != cfg.image_size)
    throw ShapeError("forward expects images [b," + std::to_string(cfg.channels) + "," +
                     std::to_string(cfg.image_size) + "," + std::to_string(cfg.image_size) + "], got " +
                     images.shape_str());
  if (tokens.value.rank() != 2 || tokens.value.dim(0) != images.dim(0) || tokens.value.dim(1) != cfg.embed_dim)
    throw ShapeError("forward expects tokens [b," + std::to_string(cfg.embed_dim) + "] matching the batch, got " +
                     tokens.value.shape_str());

  const bool watch_all = watch == WatchKind::all;
  const bool watch_ln = watch == WatchKind::ln_only;
  WeightCtx w{tape, watch_all};

  Traced patches = tape.extract_patches(Traced(images), cfg.patch_size);
  patches = tape.add_bias(tape.matmul(patches, w("patch.w", model.patch_weight)), w("patch.b", model.patch_bias));
  Traced pos = w("pos", model.pos_embed);
  patches = tape.add_positional(patches, pos, 1);
  Traced tok = tape.add_positional(tokens, pos, 0);
  Traced seq = tape.concat_token(tok, patches);
  for (int i = 0; i < cfg.num_layers; ++i)
    seq = block_traced(tape, model.layers[static_cast<std::size_t>(i)], cfg.num_heads, seq, i, watch_ln, watch_all);
  Traced cm = tape.take_token(seq);
  WeightCtx ln{tape, watch_ln || watch_all};
  cm = tape.layer_norm(cm, ln("final.gamma", model.final_gamma), ln("final.beta", model.final_beta), kLayerNormEps);
  return tape.add_bias(tape.matmul(cm, w("head.w", model.head_weight)), w("head.b", model.head_bias));
}

Tensor forward(const ViTModel& model, const Tensor& images, const Tensor& tokens) {
  GradTape scratch;
  return forward_traced(scratch, model, images, Traced(tokens), WatchKind::none).value;
}

Tensor encode_patches(const ViTModel& model, const Tensor& images) {
  Tensor p = kernels::extract_patches(images, model.cfg.patch_size);
  p = kernels::add_bias(kernels::matmul_flat(p, model.patch_weight), model.patch_bias);
  return kernels::add_positional(p, model.pos_embed, 1);
}

Tensor encoder_block(const LayerParams& lp, int num_heads, const Tensor& seq) {
  GradTape scratch;
  return block_traced(scratch, lp, num_heads, Traced(seq), 0, false, false).value;
}

ParamSet ln_params(ViTModel& model) {
  ParamSet set;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const int li = static_cast<int>(i);
    set.add(enc(li, "ln1.gamma"), &model.layers[i].ln1_gamma);
    set.add(enc(li, "ln1.beta"), &model.layers[i].ln1_beta);
    set.add(enc(li, "ln2.gamma"), &model.layers[i].ln2_gamma);
    set.add(enc(li, "ln2.beta"), &model.layers[i].ln2_beta);
  }
  set.add("final.gamma", &model.final_gamma);
  set.add("final.beta", &model.final_beta);
  return set;
}

ParamSet all_params(ViTModel& model) {
  ParamSet set;
  set.add("patch.w", &model.patch_weight);
  set.add("patch.b", &model.patch_bias);
  set.add("pos", &model.pos_embed);
  set.add("token", &model.class_token);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const int li = static_cast<int>(i);
    LayerParams& lp = model.layers[i];
    set.add(enc(li, "ln1.gamma"), &lp.ln1_gamma);
    set.add(enc(li, "ln1.beta"), &lp.ln1_beta);
    set.add(enc(li, "wq"), &lp.wq);
    set.add(enc(li, "bq"), &lp.bq);
    set.add(enc(li, "wk"), &lp.wk);
    set.add(enc(li, "bk"), &lp.bk);
    set.add(enc(li, "wv"), &lp.wv);
    set.add(enc(li, "bv"), &lp.bv);
    set.add(enc(li, "wo"), &lp.wo);
    set.add(enc(li, "bo"), &lp.bo);
    set.add(enc(li, "ln2.gamma"), &lp.ln2_gamma);
    set.add(enc(li, "ln2.beta"), &lp.ln2_beta);
    set.add(enc(li, "mlp.w1"), &lp.mlp_w1);
    set.add(enc(li, "mlp.b1"), &lp.mlp_b1);
    set.add(enc(li, "mlp.w2"), &lp.mlp_w2);
    set.add(enc(li, "mlp.b2"), &lp.mlp_b2);
  }
  set.add("final.gamma", &model.final_gamma);
  set.add("final.beta", &model.final_beta);
  set.add("head.w", &model.head_weight);
  set.add("head.b", &model.head_bias);
  return set;
}

bool models_equal(const ViTModel& a, const ViTModel& b) {
  auto pa = all_params(const_cast<ViTModel&>(a));
  auto pb = all_params(const_cast<ViTModel&>(b));
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.items.size(); ++i) {
    if (pa.items[i].first != pb.items[i].first) return false;
    if (!bitwise_equal(*pa.items[i].second, *pb.items[i].second)) return false;
  }
  return true;
}

}  // namespace vct
