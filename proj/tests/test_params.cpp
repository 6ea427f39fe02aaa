#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "morphdet/autodiff.hpp"
#include "morphdet/errors.hpp"
#include "morphdet/gradcheck.hpp"
#include "morphdet/params.hpp"
#include "morphdet/rng.hpp"

using namespace morphdet;
using nn::AdamConfig;
using nn::ParameterStore;
using nn::Tensor;
using nn::VarPtr;

TEST_CASE("adam: first step on a unit gradient moves by lr") {
  ParameterStore store;
  store.add("p", Tensor::scalar(1.0), true);
  store.get("p").grad[0] = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  store.adam_step(cfg);
  // Bias correction makes the first update a unit-magnitude direction.
  CHECK(store.get("p").value[0] == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("adam: zero gradient and zero decay leave the value in place") {
  ParameterStore store;
  store.add("p", Tensor::scalar(0.7), true);
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  store.adam_step(cfg);
  CHECK(store.get("p").value[0] == doctest::Approx(0.7));
}

TEST_CASE("adam: 500 steps minimise a shifted parabola") {
  ParameterStore store;
  store.add("p", Tensor::scalar(0.0), true);
  AdamConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  for (int i = 0; i < 500; ++i) {
    store.get("p").grad[0] = 2.0 * (store.get("p").value[0] - 3.0);
    store.adam_step(cfg);
  }
  CHECK(std::abs(store.get("p").value[0] - 3.0) < 1e-2);
}

TEST_CASE("adam and ema never touch frozen parameters") {
  ParameterStore store;
  store.add("w", Tensor({1, 3}, {0.25, -0.5, 0.125}), false);
  store.add("t", Tensor::scalar(1.0), true);
  const Tensor before = store.get("w").value;
  store.get("w").grad.fill(5.0);  // even a populated gradient must be ignored
  store.get("t").grad[0] = 1.0;
  store.ema_init();
  store.adam_step({});
  store.ema_update(0.999);
  const Tensor& after = store.get("w").value;
  for (std::size_t i = 0; i < 3; ++i) {
    // Bitwise comparison, not approximate.
    CHECK(std::memcmp(&before[i], &after[i], sizeof(double)) == 0);
  }
  CHECK_THROWS_AS(store.ema_shadow("w"), ConfigError);
}

TEST_CASE("ema: single update, fixed point, and closed form") {
  ParameterStore store;
  store.add("p", Tensor::scalar(0.0), true);
  store.ema_init();
  store.get("p").value[0] = 1.0;
  store.ema_update(0.999);
  CHECK(store.ema_shadow("p")[0] == doctest::Approx(0.001));

  ParameterStore fixed;
  fixed.add("p", Tensor::scalar(0.4), true);
  fixed.ema_init();
  fixed.ema_update(0.999);
  CHECK(fixed.ema_shadow("p")[0] == doctest::Approx(0.4).epsilon(1e-15));

  ParameterStore geo;
  geo.add("p", Tensor::scalar(0.0), true);
  geo.ema_init();
  geo.get("p").value[0] = 2.0;
  const double tau = 0.9;
  const int k = 17;
  for (int i = 0; i < k; ++i) geo.ema_update(tau);
  CHECK(geo.ema_shadow("p")[0] ==
        doctest::Approx(2.0 * (1.0 - std::pow(tau, k))).epsilon(1e-12));
}

TEST_CASE("adam: missing store entries raise on inconsistent state") {
  ParameterStore store;
  store.add("p", Tensor::scalar(1.0), true);
  store.get("p").grad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(store.adam_step({}), NumericError);
}

TEST_CASE("checkpoint: byte-stable round trip including EMA shadows") {
  auto build = [](double v) {
    ParameterStore s;
    s.add("frozen.w", Tensor({2, 2}, {1, 2, 3, 4}), false);
    s.add("head.w", Tensor({1, 2}, {v, -v}), true);
    return s;
  };
  ParameterStore a = build(0.5);
  a.ema_init();
  a.get("head.w").value[0] = 0.75;
  a.ema_update(0.9);

  const std::string p1 = "ckpt_a.bin", p2 = "ckpt_b.bin";
  a.save_checkpoint(p1);
  a.save_checkpoint(p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
  const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(bytes1 == bytes2);
  CHECK(bytes1.substr(0, 4) == "MDCP");

  ParameterStore b = build(0.0);
  b.load_checkpoint(p1);
  CHECK(b.get("head.w").value[0] == doctest::Approx(0.75));
  CHECK(b.ema_ready());
  CHECK(b.ema_shadow("head.w")[0] == doctest::Approx(a.ema_shadow("head.w")[0]));

  ParameterStore incompatible;
  incompatible.add("something.else", Tensor::scalar(0.0), true);
  CHECK_THROWS_AS(incompatible.load_checkpoint(p1), ConfigError);

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("with_ema_values substitutes shadows for trainable values only") {
  ParameterStore s;
  s.add("frozen.w", Tensor::scalar(3.0), false);
  s.add("head.w", Tensor::scalar(1.0), true);
  s.ema_init();
  s.get("head.w").value[0] = 2.0;
  s.ema_update(0.5);  // shadow = 1.5
  ParameterStore e = s.with_ema_values();
  CHECK(e.get("head.w").value[0] == doctest::Approx(1.5));
  CHECK(e.get("frozen.w").value[0] == doctest::Approx(3.0));
  // The source store keeps its raw values.
  CHECK(s.get("head.w").value[0] == doctest::Approx(2.0));
}

namespace {

// dense -> sigmoid -> BCE micro-model shared by the gradcheck cases.
double micro_loss(ParameterStore& store, const Tensor& x, double target,
                  bool with_grads) {
  nn::ParamLeaves leaves(store, with_grads);
  VarPtr z = nn::dense(nn::constant(x), leaves["w"], leaves["b"]);
  VarPtr pooled = nn::mean_all(z);
  VarPtr loss = nn::bce_with_logits(pooled, target);
  if (with_grads) {
    nn::backward(loss);
    leaves.flush_grads();
  }
  return nn::scalar_value(loss);
}

}  // namespace

TEST_CASE("finite_diff_check: micro-model passes, frozen excluded, corruption caught") {
  Rng rng(31);
  ParameterStore store;
  Tensor w({3, 1});
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.normal();
  store.add("w", w, true);
  store.add("b", Tensor::scalar(0.1), true);
  store.add("frozen", Tensor::scalar(7.0), false);
  Tensor x({2, 3});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();

  micro_loss(store, x, 0.9, true);
  auto loss_fn = [&](ParameterStore& s) { return micro_loss(s, x, 0.9, false); };
  const auto report = nn::finite_diff_check(store, loss_fn);
  CHECK(report.max_rel_error < 1e-4);
  for (const auto& e : report.entries) CHECK(e.name != "frozen");

  // A sign-flipped backward shows up as relative error ~2.
  for (std::size_t i = 0; i < store.get("w").grad.numel(); ++i)
    store.get("w").grad[i] = -store.get("w").grad[i];
  const auto bad = nn::finite_diff_check(store, loss_fn);
  CHECK(bad.max_rel_error > 1.5);
}

TEST_CASE("finite_diff_check: non-finite loss raises") {
  ParameterStore store;
  store.add("p", Tensor::scalar(1.0), true);
  auto loss_fn = [](ParameterStore&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(nn::finite_diff_check(store, loss_fn), NumericError);
}
