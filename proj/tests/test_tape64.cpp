// SPDX-License-Identifier: Apache-2.0
// Gradient oracles for every tape primitive, run at 64-bit scalar width.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vct/kernels.hpp"
#include "vct/tape.hpp"

using namespace vct;
static_assert(sizeof(Real) == 8, "tape oracles require the 64-bit build");

namespace {

// Builds params, runs fn once under a tape to get analytic grads, then
// compares against central differences of the same closure.
double check_primitive(const std::function<Traced(GradTape&, const std::vector<Traced>&)>& fn,
                       std::vector<Tensor>& params, double h = 1e-6, double floor = 1e-6) {
  ParamSet pset;
  for (std::size_t i = 0; i < params.size(); ++i) pset.add("p" + std::to_string(i), &params[i]);

  auto eval = [&](GradTape* tape, GradMap* grads) {
    GradTape local;
    GradTape& t = tape ? *tape : local;
    std::vector<Traced> traced;
    traced.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) traced.push_back(t.watch("p" + std::to_string(i), params[i]));
    Traced out = fn(t, traced);
    // Reduce to a scalar with fixed pseudo-random weights so every output
    // element influences the loss.
    Tensor w(out.value.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w.vec()[i] = static_cast<Real>(std::sin(0.7 * static_cast<double>(i) + 0.3));
    Traced loss = t.sum(t.mul(out, Traced(w)));
    const double v = static_cast<double>(loss.value.at(0));
    if (grads) *grads = t.backward(loss);
    else t.clear();
    return v;
  };

  GradTape tape;
  GradMap grads;
  eval(&tape, &grads);
  auto rep = vct::testing::fd_check(pset, grads, [&] { return eval(nullptr, nullptr); }, h, floor);
  INFO(rep.worst);
  return rep.max_rel_err;
}

}  // namespace

TEST_CASE("gradients: elementwise and reduction primitives") {
  Rng rng(1);
  SUBCASE("add") {
    std::vector<Tensor> p{Tensor::randn({3, 4}, rng, 1.0), Tensor::randn({3, 4}, rng, 1.0)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.add(x[0], x[1]); }, p) < 1e-7);
  }
  SUBCASE("scale") {
    std::vector<Tensor> p{Tensor::randn({5}, rng, 1.0)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.scale(x[0], Real(-2.5)); }, p) < 1e-7);
  }
  SUBCASE("mul") {
    std::vector<Tensor> p{Tensor::randn({2, 6}, rng, 1.0), Tensor::randn({2, 6}, rng, 1.0)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.mul(x[0], x[1]); }, p) < 1e-7);
  }
  SUBCASE("sum") {
    std::vector<Tensor> p{Tensor::randn({4, 3}, rng, 1.0)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.sum(x[0]); }, p) < 1e-7);
  }
}

TEST_CASE("gradients: linear algebra primitives") {
  Rng rng(2);
  SUBCASE("matmul 2d") {
    std::vector<Tensor> p{Tensor::randn({4, 6}, rng, 1.0), Tensor::randn({6, 3}, rng, 1.0)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.matmul(x[0], x[1]); }, p) < 1e-6);
  }
  SUBCASE("matmul with leading batch axes") {
    std::vector<Tensor> p{Tensor::randn({2, 3, 5}, rng, 1.0), Tensor::randn({5, 4}, rng, 1.0)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.matmul(x[0], x[1]); }, p) < 1e-6);
  }
  SUBCASE("add_bias") {
    std::vector<Tensor> p{Tensor::randn({3, 4}, rng, 1.0), Tensor::randn({4}, rng, 1.0)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.add_bias(x[0], x[1]); }, p) < 1e-7);
  }
}

TEST_CASE("gradients: normalization and activations") {
  Rng rng(3);
  SUBCASE("layer_norm") {
    std::vector<Tensor> p{Tensor::randn({4, 8}, rng, 2.0), Tensor::randn({8}, rng, 1.0), Tensor::randn({8}, rng, 1.0)};
    CHECK(check_primitive(
              [](GradTape& t, const std::vector<Traced>& x) { return t.layer_norm(x[0], x[1], x[2], Real(1e-6)); }, p) <
          1e-5);
  }
  SUBCASE("gelu") {
    std::vector<Tensor> p{Tensor::randn({3, 7}, rng, 1.5)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.gelu(x[0]); }, p) < 1e-6);
  }
  SUBCASE("softmax_rows") {
    std::vector<Tensor> p{Tensor::randn({3, 6}, rng, 2.0)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.softmax_rows(x[0]); }, p) < 1e-6);
  }
}

TEST_CASE("gradients: fused attention") {
  Rng rng(4);
  const int d = 8;
  std::vector<Tensor> p{
      Tensor::randn({2, 5, d}, rng, 1.0),                                    // x
      Tensor::randn({d, d}, rng, 0.5), Tensor::randn({d}, rng, 0.2),         // wq bq
      Tensor::randn({d, d}, rng, 0.5), Tensor::randn({d}, rng, 0.2),         // wk bk
      Tensor::randn({d, d}, rng, 0.5), Tensor::randn({d}, rng, 0.2),         // wv bv
      Tensor::randn({d, d}, rng, 0.5), Tensor::randn({d}, rng, 0.2),         // wo bo
  };
  // The key-bias gradient is exactly zero by softmax shift invariance, so
  // the comparison floor sits above finite-difference roundoff noise.
  const double err = check_primitive(
      [](GradTape& t, const std::vector<Traced>& x) {
        GradTape::AttnArgs w{x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8]};
        return t.attention(x[0], w, 2);
      },
      p, 1e-4, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("gradients: sequence assembly primitives") {
  Rng rng(5);
  SUBCASE("extract_patches") {
    std::vector<Tensor> p{Tensor::randn({2, 3, 4, 4}, rng, 1.0)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.extract_patches(x[0], 2); }, p) < 1e-7);
  }
  SUBCASE("concat_token and take_token") {
    std::vector<Tensor> p{Tensor::randn({3, 4}, rng, 1.0), Tensor::randn({3, 5, 4}, rng, 1.0)};
    CHECK(check_primitive(
              [](GradTape& t, const std::vector<Traced>& x) { return t.take_token(t.concat_token(x[0], x[1])); }, p) <
          1e-7);
  }
  SUBCASE("add_positional at both offsets") {
    std::vector<Tensor> p{Tensor::randn({2, 3, 4}, rng, 1.0), Tensor::randn({5, 4}, rng, 1.0)};
    CHECK(check_primitive(
              [](GradTape& t, const std::vector<Traced>& x) { return t.add_positional(x[0], x[1], 1); }, p) < 1e-7);
    std::vector<Tensor> p2{Tensor::randn({4, 6}, rng, 1.0), Tensor::randn({3, 6}, rng, 1.0)};
    CHECK(check_primitive(
              [](GradTape& t, const std::vector<Traced>& x) { return t.add_positional(x[0], x[1], 0); }, p2) < 1e-7);
  }
}

TEST_CASE("gradients: loss primitives") {
  Rng rng(6);
  SUBCASE("entropy") {
    std::vector<Tensor> p{Tensor::randn({4, 6}, rng, 1.5)};
    CHECK(check_primitive([](GradTape& t, const std::vector<Traced>& x) { return t.entropy(x[0]); }, p) < 1e-6);
  }
  SUBCASE("masked_mean keeps filtered entries at exactly zero gradient") {
    Tensor v = Tensor::randn({6}, rng, 1.0);
    std::vector<unsigned char> mask{1, 0, 1, 1, 0, 0};
    GradTape t;
    Traced tv = t.watch("v", v);
    GradMap g = t.backward(t.masked_mean(tv, mask));
    for (int i = 0; i < 6; ++i) {
      if (mask[static_cast<std::size_t>(i)])
        CHECK(g["v"].at(i) == Real(1.0 / 3.0));
      else
        CHECK(g["v"].at(i) == Real(0));
    }
  }
  SUBCASE("masked_mean gradient matches finite differences") {
    std::vector<Tensor> p{Tensor::randn({5}, rng, 1.0)};
    std::vector<unsigned char> mask{1, 1, 0, 1, 0};
    CHECK(check_primitive([&](GradTape& t, const std::vector<Traced>& x) { return t.masked_mean(x[0], mask); }, p) < 1e-8);
  }
  SUBCASE("all-false mask yields zero loss and zero gradients") {
    Tensor v = Tensor::randn({4}, rng, 1.0);
    GradTape t;
    Traced tv = t.watch("v", v);
    Traced loss = t.masked_mean(tv, {0, 0, 0, 0});
    CHECK(loss.value.at(0) == Real(0));
    GradMap g = t.backward(loss);
    for (int i = 0; i < 4; ++i) CHECK(g["v"].at(i) == Real(0));
  }
  SUBCASE("cross_entropy") {
    std::vector<Tensor> p{Tensor::randn({4, 5}, rng, 1.5)};
    std::vector<int> labels{0, 2, 4, 1};
    CHECK(check_primitive([&](GradTape& t, const std::vector<Traced>& x) { return t.cross_entropy(x[0], labels); }, p) <
          1e-6);
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(8);
  Tensor xv = Tensor::randn({3, 3}, rng, 1.0);
  Tensor wv = Tensor::randn({3, 3}, rng, 1.0);

  auto grads_for = [&](double a, double b) {
    GradTape t;
    Traced x = t.watch("x", xv);
    Traced w = t.watch("w", wv);
    Traced l1 = t.sum(t.matmul(x, w));
    Traced l2 = t.sum(t.gelu(t.mul(x, x)));
    Traced loss = t.add(t.scale(l1, static_cast<Real>(a)), t.scale(l2, static_cast<Real>(b)));
    return t.backward(loss);
  };

  GradMap g1 = grads_for(1, 0);
  GradMap g2 = grads_for(0, 1);
  GradMap gc = grads_for(2.5, -1.5);
  for (const auto& key : {std::string("x"), std::string("w")}) {
    for (std::size_t i = 0; i < gc.at(key).size(); ++i) {
      const double want = 2.5 * static_cast<double>(g1.at(key).vec()[i]) - 1.5 * static_cast<double>(g2.at(key).vec()[i]);
      CHECK(std::abs(static_cast<double>(gc.at(key).vec()[i]) - want) < 1e-9);
    }
  }
}

TEST_CASE("tape lifecycle and watched-set semantics") {
  Rng rng(9);
  Tensor xv = Tensor::randn({2, 3}, rng, 1.0);
  Tensor wv = Tensor::randn({3, 2}, rng, 1.0);

  SUBCASE("backward clears the tape; reuse without recording fails") {
    GradTape t;
    Traced x = t.watch("x", xv);
    Traced loss = t.sum(x);
    CHECK(t.node_count() > 0);
    t.backward(loss);
    CHECK(t.empty());
    CHECK_THROWS_AS(t.backward(loss), UsageError);
  }
  SUBCASE("loss must be connected and scalar") {
    GradTape t;
    CHECK_THROWS_AS(t.backward(Traced(Tensor({1}))), UsageError);
    Traced x = t.watch("x", xv);
    CHECK_THROWS_AS(t.backward(x), ShapeError);
    t.clear();
  }
  SUBCASE("frozen operands propagate but never accumulate") {
    GradTape t;
    Traced x = t.watch("x", xv);
    Traced loss = t.sum(t.matmul(x, Traced(wv)));  // w enters as a constant
    GradMap g = t.backward(loss);
    CHECK(g.size() == 1);
    CHECK(g.count("x") == 1);
    double norm = 0;
    for (Real v : g["x"].vec()) norm += std::abs(static_cast<double>(v));
    CHECK(norm > 0);
  }
  SUBCASE("watched parameters untouched by the loss report zero gradients") {
    GradTape t;
    Traced x = t.watch("x", xv);
    Traced w = t.watch("w", wv);
    GradMap g = t.backward(t.sum(x));
    CHECK(g.count("w") == 1);
    for (Real v : g["w"].vec()) CHECK(v == Real(0));
    (void)w;
  }
  SUBCASE("duplicate watch names are rejected") {
    GradTape t;
    t.watch("x", xv);
    CHECK_THROWS_AS(t.watch("x", wv), UsageError);
    t.clear();
  }
}

TEST_CASE("softmax, entropy and cross entropy match 64-bit closed forms") {
  Rng rng(10);
  Tensor z = Tensor::randn({5, 9}, rng, 2.0);
  Tensor p = kernels::softmax_rows(z);
  auto ent = kernels::entropy(z);
  std::vector<int> labels{1, 0, 8, 4, 2};
  auto ce = kernels::cross_entropy(z, labels);

  double ce_want = 0;
  for (int i = 0; i < 5; ++i) {
    double zmax = -1e300;
    for (int j = 0; j < 9; ++j) zmax = std::max(zmax, static_cast<double>(z.at(i, j)));
    double denom = 0;
    for (int j = 0; j < 9; ++j) denom += std::exp(static_cast<double>(z.at(i, j)) - zmax);
    double h = 0;
    for (int j = 0; j < 9; ++j) {
      const double pj = std::exp(static_cast<double>(z.at(i, j)) - zmax) / denom;
      CHECK(std::abs(static_cast<double>(p.at(i, j)) - pj) < 1e-10);
      h -= pj * std::log(pj);
    }
    CHECK(std::abs(static_cast<double>(ent.h.at(i)) - h) < 1e-10);
    ce_want += -std::log(std::exp(static_cast<double>(z.at(i, labels[static_cast<std::size_t>(i)])) - zmax) / denom);
  }
  CHECK(std::abs(static_cast<double>(ce.out.at(0)) - ce_want / 5) < 1e-10);
}
