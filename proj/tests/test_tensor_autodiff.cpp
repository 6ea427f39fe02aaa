#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "morphdet/autodiff.hpp"
#include "morphdet/errors.hpp"
#include "morphdet/rng.hpp"
#include "morphdet/tensor.hpp"

using namespace morphdet;
using nn::Tensor;
using nn::VarPtr;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Central finite difference of a scalar-valued graph builder with respect to
// one input tensor, compared against the analytic gradient.
double max_rel_error_vs_fd(const Tensor& x,
                           const std::function<VarPtr(const VarPtr&)>& build,
                           double h = 1e-6) {
  VarPtr xin = nn::leaf(x, true);
  VarPtr loss = build(xin);
  nn::backward(loss);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = nn::scalar_value(build(nn::leaf(xp, false)));
    const double fm = nn::scalar_value(build(nn::leaf(xm, false)));
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = xin->grad.empty() ? 0.0 : xin->grad[i];
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("dense: identity weights pass the input through") {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor w({3, 3});
  for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;
  VarPtr y = nn::dense(nn::constant(x), nn::constant(w),
                       nn::constant(Tensor::zeros({1, 3})));
  for (std::size_t i = 0; i < 6; ++i) CHECK(y->value[i] == doctest::Approx(x[i]));
}

TEST_CASE("dense: zero input broadcasts the bias") {
  Tensor b({1, 4}, {0.5, -0.25, 2.0, 0.0});
  VarPtr y = nn::dense(nn::constant(Tensor::zeros({3, 2})),
                       nn::constant(Tensor::zeros({2, 4})), nn::constant(b));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(y->value.at(r, c) == doctest::Approx(b[c]));
}

TEST_CASE("dense: random case matches the naive triple-loop product") {
  Rng rng(11);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({1, 5}, rng);
  VarPtr y = nn::dense(nn::constant(x), nn::constant(w), nn::constant(b));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double ref = b[j];
      for (std::size_t k = 0; k < 4; ++k) ref += x.at(i, k) * w.at(k, j);
      CHECK(y->value.at(i, j) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("dense: gradients for x, w, b match finite differences") {
  Rng rng(12);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 2}, rng);
  Tensor b = random_tensor({1, 2}, rng);
  Tensor c = random_tensor({3, 2}, rng);  // fixed mixing to break symmetry

  auto with_x = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(
        nn::dense(v, nn::constant(w), nn::constant(b)), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(x, with_x) < 1e-6);

  auto with_w = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(
        nn::dense(nn::constant(x), v, nn::constant(b)), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(w, with_w) < 1e-6);

  auto with_b = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(
        nn::dense(nn::constant(x), nn::constant(w), v), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(b, with_b) < 1e-6);
}

TEST_CASE("dense: shape mismatch reports both shapes") {
  VarPtr x = nn::constant(Tensor::zeros({2, 3}));
  VarPtr w = nn::constant(Tensor::zeros({4, 5}));
  VarPtr b = nn::constant(Tensor::zeros({1, 5}));
  CHECK_THROWS_WITH_AS(nn::dense(x, w, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("activations: values at the origin and asymptotes") {
  CHECK(nn::act_forward(nn::Act::Sigmoid, 0.0) == doctest::Approx(0.5));
  CHECK(nn::act_forward(nn::Act::Tanh, 0.0) == doctest::Approx(0.0));
  CHECK(nn::act_forward(nn::Act::Silu, 0.0) == doctest::Approx(0.0));
  CHECK(std::abs(nn::act_forward(nn::Act::Softplus, 30.0) - 30.0) < 1e-9);
  // No overflow far out in either tail.
  CHECK(std::isfinite(nn::act_forward(nn::Act::Softplus, 800.0)));
  CHECK(std::isfinite(nn::act_forward(nn::Act::Sigmoid, -800.0)));
}

TEST_CASE("activations: derivatives match central differences") {
  Rng rng(13);
  for (auto kind : {nn::Act::Sigmoid, nn::Act::Tanh, nn::Act::Silu,
                    nn::Act::Softplus, nn::Act::Gelu}) {
    for (int i = 0; i < 10; ++i) {
      const double x = 4.0 * (rng.uniform() - 0.5);
      const double h = 1e-5;
      const double numeric =
          (nn::act_forward(kind, x + h) - nn::act_forward(kind, x - h)) / (2.0 * h);
      const double analytic = nn::act_derivative(kind, x);
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      CHECK(std::abs(numeric - analytic) / scale < 1e-6);
    }
  }
}

TEST_CASE("softmax_rows: uniform, saturated, and shifted rows") {
  VarPtr u = nn::softmax_rows(nn::constant(Tensor::full({1, 5}, 3.7)));
  for (std::size_t j = 0; j < 5; ++j)
    CHECK(u->value[j] == doctest::Approx(0.2).epsilon(1e-12));

  Tensor spike({1, 4}, {0.0, 1e4, 0.0, 0.0});
  VarPtr s = nn::softmax_rows(nn::constant(spike));
  CHECK(s->value[1] == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(14);
  Tensor x = random_tensor({3, 6}, rng);
  Tensor shifted = x;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 6; ++c) shifted.at(r, c) += 17.25;
  VarPtr a = nn::softmax_rows(nn::constant(x));
  VarPtr b = nn::softmax_rows(nn::constant(shifted));
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(a->value[i] == doctest::Approx(b->value[i]).epsilon(1e-12));
}

TEST_CASE("softmax_rows: backward matches finite differences") {
  Rng rng(15);
  Tensor x = random_tensor({2, 5}, rng);
  Tensor c = random_tensor({2, 5}, rng);
  auto build = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(nn::softmax_rows(v), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(x, build) < 1e-6);
}

TEST_CASE("layer_norm: unit statistics and degenerate rows") {
  Rng rng(16);
  Tensor x = random_tensor({4, 16}, rng, 2.0);
  VarPtr y = nn::layer_norm(nn::constant(x), nn::constant(Tensor::full({1, 16}, 1.0)),
                            nn::constant(Tensor::zeros({1, 16})));
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 16; ++c) mean += y->value.at(r, c);
    mean /= 16.0;
    for (std::size_t c = 0; c < 16; ++c) {
      const double d = y->value.at(r, c) - mean;
      var += d * d;
    }
    var /= 16.0;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }

  Tensor bias({1, 8}, {1, 2, 3, 4, 5, 6, 7, 8});
  VarPtr c = nn::layer_norm(nn::constant(Tensor::full({2, 8}, 0.73)),
                            nn::constant(Tensor::full({1, 8}, 1.0)), nn::constant(bias));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(c->value.at(r, j) == doctest::Approx(bias[j]).epsilon(1e-9));
}

TEST_CASE("layer_norm: backward matches finite differences") {
  Rng rng(17);
  Tensor x = random_tensor({3, 8}, rng);
  Tensor gain = random_tensor({1, 8}, rng);
  Tensor bias = random_tensor({1, 8}, rng);
  Tensor c = random_tensor({3, 8}, rng);

  auto with_x = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(
        nn::layer_norm(v, nn::constant(gain), nn::constant(bias)), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(x, with_x, 1e-5) < 1e-5);

  auto with_gain = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(
        nn::layer_norm(nn::constant(x), v, nn::constant(bias)), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(gain, with_gain, 1e-5) < 1e-5);
}

TEST_CASE("matmul_bt and slicing: backward matches finite differences") {
  Rng rng(18);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({5, 4}, rng);
  Tensor c = random_tensor({3, 5}, rng);
  auto with_a = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(nn::matmul_bt(v, nn::constant(b)), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(a, with_a) < 1e-6);
  auto with_b = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(nn::matmul_bt(nn::constant(a), v), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(b, with_b) < 1e-6);

  Tensor x = random_tensor({4, 6}, rng);
  Tensor cc = random_tensor({4, 2}, rng);
  auto with_slice = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(nn::slice_cols(v, 2, 2), nn::constant(cc)));
  };
  CHECK(max_rel_error_vs_fd(x, with_slice) < 1e-6);
}

TEST_CASE("mul_scalar routes gradient to both factors") {
  Rng rng(19);
  Tensor x = random_tensor({3, 3}, rng);
  Tensor c = random_tensor({3, 3}, rng);
  Tensor s = Tensor::scalar(0.8);
  auto with_x = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(nn::mul_scalar(v, nn::constant(s)), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(x, with_x) < 1e-6);
  auto with_s = [&](const VarPtr& v) {
    return nn::mean_all(nn::mul(nn::mul_scalar(nn::constant(x), v), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(s, with_s) < 1e-6);
}

TEST_CASE("tv_grid: constant, hand-enumerated, and homogeneous cases") {
  CHECK(nn::scalar_value(nn::tv_grid(nn::constant(Tensor::full({9, 1}, 0.4)), 3, 3)) ==
        doctest::Approx(0.0));

  Tensor g({4, 1}, {0, 1, 0, 1});  // 2x2 grid [[0,1],[0,1]]
  CHECK(nn::scalar_value(nn::tv_grid(nn::constant(g), 2, 2)) == doctest::Approx(0.5));

  Rng rng(20);
  Tensor x = random_tensor({12, 1}, rng);
  Tensor scaled = x;
  for (std::size_t i = 0; i < x.numel(); ++i) scaled[i] *= -2.5;
  const double base = nn::scalar_value(nn::tv_grid(nn::constant(x), 3, 4));
  const double big = nn::scalar_value(nn::tv_grid(nn::constant(scaled), 3, 4));
  CHECK(big == doctest::Approx(2.5 * base).epsilon(1e-12));

  auto build = [&](const VarPtr& v) { return nn::tv_grid(v, 3, 4); };
  CHECK(max_rel_error_vs_fd(x, build) < 1e-5);
}

TEST_CASE("cosine_row_distance: identical, antipodal, orthogonal, degenerate") {
  Tensor a({3, 2}, {1, 0, 0, 2, 3, 3});
  VarPtr same = nn::cosine_row_distance(nn::constant(a), nn::constant(a));
  for (std::size_t i = 0; i < 3; ++i) CHECK(same->value[i] == doctest::Approx(0.0));

  Tensor neg = a;
  for (std::size_t i = 0; i < neg.numel(); ++i) neg[i] = -neg[i];
  VarPtr anti = nn::cosine_row_distance(nn::constant(a), nn::constant(neg));
  for (std::size_t i = 0; i < 3; ++i) CHECK(anti->value[i] == doctest::Approx(2.0));

  Tensor x({1, 2}, {1, 0});
  Tensor y({1, 2}, {0, 5});
  CHECK(nn::cosine_row_distance(nn::constant(x), nn::constant(y))->value[0] ==
        doctest::Approx(1.0));

  bool flagged = false;
  Tensor z({1, 2}, {0, 0});
  VarPtr d = nn::cosine_row_distance(nn::constant(z), nn::constant(x), 1e-12, &flagged);
  CHECK(d->value[0] == 0.0);
  CHECK(flagged);

  Rng rng(21);
  Tensor u = random_tensor({4, 5}, rng);
  Tensor v = random_tensor({4, 5}, rng);
  Tensor c = random_tensor({4, 1}, rng);
  auto with_u = [&](const VarPtr& p) {
    return nn::mean_all(
        nn::mul(nn::cosine_row_distance(p, nn::constant(v)), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(u, with_u) < 1e-5);
  auto with_v = [&](const VarPtr& p) {
    return nn::mean_all(
        nn::mul(nn::cosine_row_distance(nn::constant(u), p), nn::constant(c)));
  };
  CHECK(max_rel_error_vs_fd(v, with_v) < 1e-5);
}

TEST_CASE("bce_with_logits: ln 2 at zero and stable tails") {
  CHECK(nn::scalar_value(nn::bce_with_logits(nn::scalar_const(0.0), 0.3)) ==
        doctest::Approx(std::log(2.0)));
  CHECK(std::isfinite(
      nn::scalar_value(nn::bce_with_logits(nn::scalar_const(500.0), 0.0))));
  CHECK(std::isfinite(
      nn::scalar_value(nn::bce_with_logits(nn::scalar_const(-500.0), 1.0))));

  Tensor z = Tensor::scalar(0.37);
  auto build = [&](const VarPtr& v) { return nn::bce_with_logits(v, 0.85); };
  CHECK(max_rel_error_vs_fd(z, build) < 1e-6);
}

TEST_CASE("finite outputs for finite inputs across the op set") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 8}, rng, 50.0);
    VarPtr v = nn::constant(x);
    VarPtr out = nn::softmax_rows(v);
    out = nn::add(out, nn::activation(nn::Act::Softplus, v));
    out = nn::layer_norm(out, nn::constant(Tensor::full({1, 8}, 1.0)),
                         nn::constant(Tensor::zeros({1, 8})));
    out = nn::activation(nn::Act::Gelu, out);
    CHECK(out->value.all_finite());
  }
}

TEST_CASE("backward requires a scalar root and a finite loss") {
  VarPtr x = nn::leaf(Tensor::zeros({2, 2}), true);
  CHECK_THROWS_AS(nn::backward(nn::add(x, x)), ShapeError);
  VarPtr inf = nn::leaf(Tensor::scalar(std::numeric_limits<double>::infinity()), true);
  CHECK_THROWS_AS(nn::backward(inf), NumericError);
}
