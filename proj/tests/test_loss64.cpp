// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "vct/kernels.hpp"
#include "vct/loss.hpp"

static_assert(sizeof(vct::Real) == 8, "verification tests require the 64-bit scalar build");

using namespace vct;

TEST_CASE("default entropy threshold is a fixed fraction of the entropy ceiling") {
  CHECK(default_entropy_threshold(10) == doctest::Approx(0.4 * std::log(10.0)).epsilon(1e-15));
  CHECK(default_entropy_threshold(2) == doctest::Approx(0.4 * std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(default_entropy_threshold(1), ConfigError);
}

TEST_CASE("reliability is strictly below threshold") {
  Tensor ent({3}, {Real(0.3), Real(0.4), Real(0.5)});
  auto mask = reliable_mask(ent, 0.4);
  CHECK(mask == std::vector<unsigned char>({1, 0, 0}));
  CHECK_THROWS_AS(reliable_mask(Tensor({2, 2}), 0.4), ShapeError);
}

TEST_CASE("objective evaluation averages entropy over reliable samples only") {
  // Row 0 uniform over 2 classes (entropy ln 2), row 1 nearly one-hot.
  Tensor logits({2, 2}, {Real(1), Real(1), Real(30), Real(0)});
  ObjectiveEval ev = eval_objective(logits, 0.3);
  CHECK(ev.mask == std::vector<unsigned char>({0, 1}));
  CHECK(ev.reliable == 1);
  CHECK(ev.loss == doctest::Approx(static_cast<double>(ev.entropies.at(1))).epsilon(1e-15));
  CHECK(ev.entropies.at(0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  ObjectiveEval none = eval_objective(logits, 1e-12);
  CHECK(none.reliable == 0);
  CHECK(none.loss == 0);
}

namespace {

// Quadratic surrogate objective 0.5 * sum_i a_i w_i^2 expressed as a
// one-sample "entropy" so the closed-form sharpness-aware gradient
// a .* (w + radius * a .* w / ||a .* w||) can be checked exactly.
struct Quadratic {
  Tensor w;
  Tensor half_a;

  TraceFn trace() {
    return [this](GradTape& tape) {
      Traced tw = tape.watch("w", w);
      return tape.sum(tape.mul(tape.mul(tw, tw), Traced(half_a)));
    };
  }
};

}  // namespace

TEST_CASE("sharpness-aware gradient matches the quadratic closed form") {
  Quadratic q{Tensor({2}, {Real(2), Real(-1)}), Tensor({2}, {Real(1.5), Real(0.5)})};
  const double a0 = 3, a1 = 1, w0 = 2, w1 = -1, rho = 0.1;
  ParamSet watched;
  watched.add("w", &q.w);

  auto fn = q.trace();
  SamResult res = sam_step(fn, watched, 1e9, rho);
  CHECK(res.perturbed);
  CHECK(res.reliable == 1);
  CHECK(res.loss == doctest::Approx(0.5 * (a0 * w0 * w0 + a1 * w1 * w1)).epsilon(1e-14));

  const double g0 = a0 * w0, g1 = a1 * w1;
  const double norm = std::sqrt(g0 * g0 + g1 * g1);
  CHECK(res.grad_norm == doctest::Approx(norm).epsilon(1e-14));
  const double scale = rho / (norm + 1e-12);
  const double e0 = a0 * (w0 + scale * g0);
  const double e1 = a1 * (w1 + scale * g1);
  CHECK(res.grads.at("w").at(0) == doctest::Approx(e0).epsilon(1e-12));
  CHECK(res.grads.at("w").at(1) == doctest::Approx(e1).epsilon(1e-12));

  // The watched parameters come back bit-exact after the excursion.
  CHECK(q.w.at(0) == Real(2));
  CHECK(q.w.at(1) == Real(-1));
}

TEST_CASE("zero radius returns the base gradients bitwise") {
  Quadratic q{Tensor({2}, {Real(0.7), Real(-0.4)}), Tensor({2}, {Real(1), Real(2)})};
  ParamSet watched;
  watched.add("w", &q.w);
  auto fn = q.trace();
  SamResult res = sam_step(fn, watched, 1e9, 0.0);
  CHECK(!res.perturbed);

  GradTape tape;
  Traced ent = fn(tape);
  Traced loss = tape.masked_mean(ent, {1});
  GradMap base = tape.backward(loss);
  CHECK(bitwise_equal(res.grads.at("w"), base.at("w")));
}

TEST_CASE("zero gradient skips the perturbation pass") {
  Quadratic q{Tensor({2}), Tensor({2}, {Real(1), Real(1)})};  // minimum of the quadratic
  ParamSet watched;
  watched.add("w", &q.w);
  auto fn = q.trace();
  SamResult res = sam_step(fn, watched, 1e9, 0.5);
  CHECK(!res.perturbed);
  CHECK(res.grad_norm == 0);
  for (Real g : res.grads.at("w").vec()) CHECK(g == Real(0));
}

TEST_CASE("the reliability mask is frozen across the two passes") {
  // e(w) = (w-5)^2: at w=2 the sample is reliable (9 < 10); the ascent
  // excursion moves w to -1 where e = 36 would fail a recomputed mask.
  // The frozen mask keeps it, giving gradient 2(w'-5) = -12.
  Tensor w({1}, {Real(2)});
  auto fn = [&w](GradTape& tape) {
    Traced tw = tape.watch("w", w);
    Traced diff = tape.add(tw, Traced(Tensor({1}, {Real(-5)})));
    return tape.mul(diff, diff);
  };
  ParamSet watched;
  watched.add("w", &w);
  SamResult res = sam_step(fn, watched, 10.0, 3.0);
  CHECK(res.perturbed);
  CHECK(res.mask == std::vector<unsigned char>({1}));
  CHECK(res.grads.at("w").at(0) == doctest::Approx(-12.0).epsilon(1e-9));
  CHECK(w.at(0) == Real(2));
}

TEST_CASE("an all-unreliable batch yields zero gradients and no excursion") {
  Tensor w({1}, {Real(2)});
  auto fn = [&w](GradTape& tape) {
    Traced tw = tape.watch("w", w);
    Traced diff = tape.add(tw, Traced(Tensor({1}, {Real(-5)})));
    return tape.mul(diff, diff);
  };
  ParamSet watched;
  watched.add("w", &w);
  SamResult res = sam_step(fn, watched, 1.0, 3.0);  // e = 9, threshold 1
  CHECK(!res.perturbed);
  CHECK(res.reliable == 0);
  CHECK(res.loss == 0);
  CHECK(res.grads.at("w").at(0) == Real(0));
}

TEST_CASE("an empty watched set skips differentiation entirely") {
  Tensor w({1}, {Real(2)});
  auto fn = [&w](GradTape& tape) {
    Traced tw = Traced(w);
    Traced diff = tape.add(tw, Traced(Tensor({1}, {Real(-5)})));
    return tape.mul(diff, diff);
  };
  ParamSet watched;
  SamResult res = sam_step(fn, watched, 1e9, 0.5);
  CHECK(res.grads.empty());
  CHECK(!res.perturbed);
  CHECK(res.loss == doctest::Approx(9.0).epsilon(1e-14));
}
