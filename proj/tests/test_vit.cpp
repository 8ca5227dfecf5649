// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "vct/vit.hpp"

using namespace vct;

namespace {

ViTConfig tiny_config() {
  ViTConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.channels = 2;
  cfg.embed_dim = 16;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.mlp_ratio = 2;
  cfg.num_classes = 3;
  return cfg;
}

Tensor random_images(const ViTConfig& cfg, int batch, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::randn({batch, cfg.channels, cfg.image_size, cfg.image_size}, rng, 1.0);
}

}  // namespace

TEST_CASE("config validation names the offending field") {
  CHECK_NOTHROW(ViTConfig{}.validate());
  CHECK_NOTHROW(tiny_config().validate());

  ViTConfig bad = tiny_config();
  bad.patch_size = 3;  // does not tile image_size 8
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = tiny_config();
  bad.num_heads = 3;  // does not divide embed_dim 16
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = tiny_config();
  bad.embed_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = tiny_config();
  bad.num_classes = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("default config matches the documented geometry") {
  ViTConfig cfg;
  CHECK(cfg.num_patches() == 16);
  CHECK(cfg.seq_len() == 17);
  CHECK(cfg.patch_dim() == 192);

  // Total trainable scalars for the default geometry, counted by hand:
  // patch embed 192*64+64, positions 17*64, token 64, four blocks of
  // (2*128 layer-norm + 4*(4096+64) attention + 64*256+256 + 256*64+64),
  // closing layer norm 2*64, head 64*10+10.
  ViTModel m = init_model(cfg, 1);
  ParamSet params = all_params(m);
  std::size_t total = 0;
  for (const auto& item : params.items) total += item.second->size();
  CHECK(total == 214218);
  // Per-block pairs plus the closing norm.
  CHECK(ln_params(m).size() == std::size_t(4 * cfg.num_layers + 2));
}

TEST_CASE("init_model is seed-deterministic and seed-sensitive") {
  ViTConfig cfg = tiny_config();
  ViTModel a = init_model(cfg, 7);
  ViTModel b = init_model(cfg, 7);
  ViTModel c = init_model(cfg, 8);
  CHECK(models_equal(a, b));
  CHECK(!models_equal(a, c));

  // Layer norms start as the identity transform.
  CHECK(a.layers[0].ln1_gamma.at(0) == Real(1));
  CHECK(a.layers[0].ln1_beta.at(0) == Real(0));
  // make_model is the zero shell.
  ViTModel z = make_model(cfg);
  ParamSet params = all_params(z);
  for (const auto& [name, t] : params.items) {
    (void)name;
    for (Real v : t->vec()) CHECK(v == Real(0));
  }
}

TEST_CASE("zero images embed to the positional rows when the patch bias is zero") {
  ViTConfig cfg = tiny_config();
  ViTModel m = init_model(cfg, 3);
  REQUIRE(m.patch_bias.at(0) == Real(0));

  Tensor images({2, cfg.channels, cfg.image_size, cfg.image_size});
  Tensor emb = encode_patches(m, images);
  REQUIRE(emb.shape() == std::vector<int>({2, cfg.num_patches(), cfg.embed_dim}));
  for (int b = 0; b < 2; ++b)
    for (int n = 0; n < cfg.num_patches(); ++n)
      for (int f = 0; f < cfg.embed_dim; ++f) CHECK(emb.at(b, n, f) == m.pos_embed.at(n + 1, f));
}

TEST_CASE("identical samples in a batch produce bitwise-identical logits") {
  ViTConfig cfg = tiny_config();
  ViTModel m = init_model(cfg, 11);
  Tensor one = random_images(cfg, 1, 5);
  Tensor two({2, cfg.channels, cfg.image_size, cfg.image_size});
  std::copy(one.vec().begin(), one.vec().end(), two.vec().begin());
  std::copy(one.vec().begin(), one.vec().end(), two.vec().begin() + static_cast<long>(one.size()));

  Tensor tokens({2, cfg.embed_dim});
  for (int f = 0; f < cfg.embed_dim; ++f) tokens.at(0, f) = tokens.at(1, f) = m.class_token.at(f);

  Tensor logits = forward(m, two, tokens);
  REQUIRE(logits.shape() == std::vector<int>({2, cfg.num_classes}));
  for (int k = 0; k < cfg.num_classes; ++k) CHECK(logits.at(0, k) == logits.at(1, k));
}

TEST_CASE("forward is deterministic") {
  ViTConfig cfg = tiny_config();
  ViTModel m = init_model(cfg, 2);
  Tensor images = random_images(cfg, 3, 9);
  Tensor tokens({3, cfg.embed_dim});
  for (int b = 0; b < 3; ++b)
    for (int f = 0; f < cfg.embed_dim; ++f) tokens.at(b, f) = m.class_token.at(f);
  Tensor x = forward(m, images, tokens);
  Tensor y = forward(m, images, tokens);
  CHECK(bitwise_equal(x, y));
}

TEST_CASE("single-token block with identity value path reduces to x + LN(x)") {
  // With one token, attention weights are a softmax over a single key, so
  // the context is exactly the value projection of LN(x). Making the value
  // and output projections the identity and zeroing the MLP leaves
  // out = x + LN1(x).
  const int d = 6;
  LayerParams lp;
  lp.ln1_gamma = Tensor::full({d}, Real(1));
  lp.ln1_beta = Tensor({d});
  lp.ln2_gamma = Tensor::full({d}, Real(1));
  lp.ln2_beta = Tensor({d});
  Rng rng(4);
  lp.wq = Tensor::randn({d, d}, rng, 0.5);
  lp.bq = Tensor::randn({d}, rng, 0.5);
  lp.wk = Tensor::randn({d, d}, rng, 0.5);
  lp.bk = Tensor::randn({d}, rng, 0.5);
  lp.wv = Tensor({d, d});
  for (int i = 0; i < d; ++i) lp.wv.at(i, i) = Real(1);
  lp.bv = Tensor({d});
  lp.wo = Tensor({d, d});
  for (int i = 0; i < d; ++i) lp.wo.at(i, i) = Real(1);
  lp.bo = Tensor({d});
  lp.mlp_w1 = Tensor({d, 2 * d});
  lp.mlp_b1 = Tensor({2 * d});
  lp.mlp_w2 = Tensor({2 * d, d});
  lp.mlp_b2 = Tensor({d});

  Tensor x = Tensor::randn({1, 1, d}, rng, 1.0);
  Tensor out = encoder_block(lp, 2, x);

  double mean = 0;
  for (int f = 0; f < d; ++f) mean += x.at(0, 0, f);
  mean /= d;
  double var = 0;
  for (int f = 0; f < d; ++f) var += (x.at(0, 0, f) - mean) * (x.at(0, 0, f) - mean);
  var /= d;
  const double inv = 1.0 / std::sqrt(var + 1e-6);
  for (int f = 0; f < d; ++f) {
    const double expect = x.at(0, 0, f) + (x.at(0, 0, f) - mean) * inv;
    CHECK(std::abs(out.at(0, 0, f) - expect) < 1e-5);
  }
}

TEST_CASE("swapping two patches and their positional rows preserves class logits") {
  ViTConfig cfg = tiny_config();
  ViTModel m = init_model(cfg, 21);
  Tensor images = random_images(cfg, 1, 31);
  Tensor tokens({1, cfg.embed_dim});
  for (int f = 0; f < cfg.embed_dim; ++f) tokens.at(0, f) = m.class_token.at(f);
  Tensor base = forward(m, images, tokens);

  // Swap patch 0 (top-left) and patch 3 (bottom-right) in image space.
  const int p = cfg.patch_size;
  Tensor swapped = images;
  for (int c = 0; c < cfg.channels; ++c)
    for (int dy = 0; dy < p; ++dy)
      for (int dx = 0; dx < p; ++dx)
        std::swap(swapped.at(0, c, dy, dx), swapped.at(0, c, p + dy, p + dx));

  ViTModel ms = m;  // swap the matching positional rows (patch slots 1 and 4)
  for (int f = 0; f < cfg.embed_dim; ++f) std::swap(ms.pos_embed.at(1, f), ms.pos_embed.at(4, f));

  Tensor perm = forward(ms, swapped, tokens);
  for (int k = 0; k < cfg.num_classes; ++k) CHECK(std::abs(perm.at(0, k) - base.at(0, k)) < 1e-4);
}

TEST_CASE("forward rejects mis-shaped inputs") {
  ViTConfig cfg = tiny_config();
  ViTModel m = init_model(cfg, 2);
  Tensor tokens({2, cfg.embed_dim});

  CHECK_THROWS_AS(forward(m, Tensor({2, cfg.channels, cfg.image_size, cfg.image_size + 1}), tokens), ShapeError);
  CHECK_THROWS_AS(forward(m, Tensor({2, cfg.channels + 1, cfg.image_size, cfg.image_size}), tokens), ShapeError);
  Tensor good({2, cfg.channels, cfg.image_size, cfg.image_size});
  CHECK_THROWS_AS(forward(m, good, Tensor({3, cfg.embed_dim})), ShapeError);
  CHECK_THROWS_AS(forward(m, good, Tensor({2, cfg.embed_dim + 1})), ShapeError);
  CHECK_THROWS_AS(forward(m, good, Tensor({2, 2, cfg.embed_dim})), ShapeError);
}
