#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "morphdet/tensor.hpp"

namespace morphdet::nn {

// Reverse-mode node. A forward pass builds a DAG of these; backward() walks
// it once in reverse topological order. Nodes whose inputs carry no gradient
// skip closure creation entirely, so inference pays only for the values.
struct Var {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool needs_grad = false;
  std::vector<std::shared_ptr<Var>> parents;
  std::function<void(const Var&)> backprop;

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor::zeros(value.shape());
    return grad;
  }
};

using VarPtr = std::shared_ptr<Var>;

// Leaves. `constant` never receives gradients; `leaf` does iff with_grad.
VarPtr constant(Tensor value);
VarPtr leaf(Tensor value, bool with_grad);

// Scalar convenience (1x1 tensors).
VarPtr scalar_const(double v);
double scalar_value(const VarPtr& v);

// ---- differentiable operations -------------------------------------------

enum class Act { Sigmoid, Tanh, Silu, Softplus, Gelu };

double act_forward(Act kind, double x);
double act_derivative(Act kind, double x);

VarPtr matmul(const VarPtr& a, const VarPtr& b);
// a * b^T without materialising the transpose (attention scores).
VarPtr matmul_bt(const VarPtr& a, const VarPtr& b);
VarPtr add(const VarPtr& a, const VarPtr& b);
VarPtr sub(const VarPtr& a, const VarPtr& b);
VarPtr mul(const VarPtr& a, const VarPtr& b);  // Hadamard
// Broadcast a 1xD (or length-D) bias over the rows of x.
VarPtr add_rowvec(const VarPtr& x, const VarPtr& b);
VarPtr scale(const VarPtr& x, double c);
// c + s*x elementwise with constant coefficients.
VarPtr affine(const VarPtr& x, double s, double c);
// x scaled by a 1x1 variable (gate-style broadcast).
VarPtr mul_scalar(const VarPtr& x, const VarPtr& s);
VarPtr activation(Act kind, const VarPtr& x);
VarPtr softmax_rows(const VarPtr& x);
VarPtr layer_norm(const VarPtr& x, const VarPtr& gain, const VarPtr& bias,
                  double eps = 1e-5);
VarPtr slice_cols(const VarPtr& x, std::size_t first, std::size_t count);
VarPtr concat_cols(const std::vector<VarPtr>& xs);
VarPtr mean_all(const VarPtr& x);                 // -> 1x1
VarPtr mean_rows(const VarPtr& x);                // MxD -> 1xD
// Mean of the selected rows of a column vector (top-k pooling support); the
// selection itself is not differentiated.
VarPtr mean_of_rows(const VarPtr& x, const std::vector<std::size_t>& rows);
// Numerically stable binary cross-entropy on a 1x1 logit against a constant
// smoothed target.
VarPtr bce_with_logits(const VarPtr& z, double target);
// Anisotropic total variation of an Nx1 column vector laid out row-major on
// an h x w grid, normalised by h*w.
VarPtr tv_grid(const VarPtr& x, std::size_t h, std::size_t w);
// Row-wise cosine distance 1 - <a_i/|a_i|, b_i/|b_i|> as an Nx1 column.
// Rows with norm below `degenerate_eps` yield 0 (and no gradient); if
// `degenerate_flag` is given it is set when that rule fires.
VarPtr cosine_row_distance(const VarPtr& a, const VarPtr& b,
                           double degenerate_eps = 1e-12,
                           bool* degenerate_flag = nullptr);

// y = x*W + b with full backward; the spec-level dense layer.
VarPtr dense(const VarPtr& x, const VarPtr& w, const VarPtr& b);

// Runs reverse-mode accumulation from a scalar root (seeds d(root)=1).
void backward(const VarPtr& root);

}  // namespace morphdet::nn
