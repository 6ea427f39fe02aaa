#include "morphdet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "morphdet/errors.hpp"

namespace morphdet::nn {

namespace {

VarPtr make_node(Tensor value, std::vector<VarPtr> parents) {
  auto v = std::make_shared<Var>();
  v->value = std::move(value);
  v->parents = std::move(parents);
  for (const auto& p : v->parents) {
    if (p->needs_grad) {
      v->needs_grad = true;
      break;
    }
  }
  return v;
}

void accum(Var& target, const Tensor& g) {
  axpy(target.ensure_grad(), g);
}

}  // namespace

VarPtr constant(Tensor value) {
  auto v = std::make_shared<Var>();
  v->value = std::move(value);
  return v;
}

VarPtr leaf(Tensor value, bool with_grad) {
  auto v = std::make_shared<Var>();
  v->value = std::move(value);
  v->needs_grad = with_grad;
  return v;
}

VarPtr scalar_const(double v) { return constant(Tensor::scalar(v)); }

double scalar_value(const VarPtr& v) {
  if (v->value.numel() != 1) {
    throw ShapeError("scalar_value on tensor " + v->value.shape_str());
  }
  return v->value[0];
}

double act_forward(Act kind, double x) {
  switch (kind) {
    case Act::Sigmoid:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
    case Act::Tanh:
      return std::tanh(x);
    case Act::Silu:
      return x * act_forward(Act::Sigmoid, x);
    case Act::Softplus:
      // max(x,0) + log1p(exp(-|x|)) never overflows.
      return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    case Act::Gelu:
      return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
  }
  return 0.0;
}

double act_derivative(Act kind, double x) {
  switch (kind) {
    case Act::Sigmoid: {
      const double s = act_forward(Act::Sigmoid, x);
      return s * (1.0 - s);
    }
    case Act::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Act::Silu: {
      const double s = act_forward(Act::Sigmoid, x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Act::Softplus:
      return act_forward(Act::Sigmoid, x);
    case Act::Gelu: {
      const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
      const double pdf =
          std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + x * pdf;
    }
  }
  return 0.0;
}

VarPtr matmul(const VarPtr& a, const VarPtr& b) {
  auto out = make_node(matmul(a->value, b->value), {a, b});
  if (out->needs_grad) {
    auto pa = a, pb = b;
    out->backprop = [pa, pb](const Var& self) {
      if (pa->needs_grad) accum(*pa, matmul_transB(self.grad, pb->value));
      if (pb->needs_grad) accum(*pb, matmul_transA(pa->value, self.grad));
    };
  }
  return out;
}

VarPtr matmul_bt(const VarPtr& a, const VarPtr& b) {
  auto out = make_node(matmul_transB(a->value, b->value), {a, b});
  if (out->needs_grad) {
    auto pa = a, pb = b;
    out->backprop = [pa, pb](const Var& self) {
      // c = a b^T: da = dc * b ; db = dc^T * a
      if (pa->needs_grad) accum(*pa, matmul(self.grad, pb->value));
      if (pb->needs_grad) accum(*pb, matmul_transA(self.grad, pa->value));
    };
  }
  return out;
}

VarPtr add(const VarPtr& a, const VarPtr& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor v = a->value;
  axpy(v, b->value);
  auto out = make_node(std::move(v), {a, b});
  if (out->needs_grad) {
    auto pa = a, pb = b;
    out->backprop = [pa, pb](const Var& self) {
      if (pa->needs_grad) accum(*pa, self.grad);
      if (pb->needs_grad) accum(*pb, self.grad);
    };
  }
  return out;
}

VarPtr sub(const VarPtr& a, const VarPtr& b) {
  require_same_shape(a->value, b->value, "sub");
  Tensor v = a->value;
  axpy(v, b->value, -1.0);
  auto out = make_node(std::move(v), {a, b});
  if (out->needs_grad) {
    auto pa = a, pb = b;
    out->backprop = [pa, pb](const Var& self) {
      if (pa->needs_grad) accum(*pa, self.grad);
      if (pb->needs_grad) axpy(pb->ensure_grad(), self.grad, -1.0);
    };
  }
  return out;
}

VarPtr mul(const VarPtr& a, const VarPtr& b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor v = a->value;
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] *= b->value[i];
  auto out = make_node(std::move(v), {a, b});
  if (out->needs_grad) {
    auto pa = a, pb = b;
    out->backprop = [pa, pb](const Var& self) {
      const std::size_t n = self.grad.numel();
      if (pa->needs_grad) {
        Tensor& g = pa->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pb->value[i];
      }
      if (pb->needs_grad) {
        Tensor& g = pb->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pa->value[i];
      }
    };
  }
  return out;
}

VarPtr add_rowvec(const VarPtr& x, const VarPtr& b) {
  const std::size_t n = x->value.rows(), d = x->value.cols();
  if (b->value.numel() != d) {
    throw ShapeError("add_rowvec: bias " + b->value.shape_str() +
                     " does not broadcast over " + x->value.shape_str());
  }
  Tensor v = x->value;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] += b->value[j];
  auto out = make_node(std::move(v), {x, b});
  if (out->needs_grad) {
    auto px = x, pb = b;
    out->backprop = [px, pb, n, d](const Var& self) {
      if (px->needs_grad) accum(*px, self.grad);
      if (pb->needs_grad) {
        Tensor& g = pb->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
      }
    };
  }
  return out;
}

VarPtr scale(const VarPtr& x, double c) { return affine(x, c, 0.0); }

VarPtr affine(const VarPtr& x, double s, double c) {
  Tensor v = x->value;
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = s * v[i] + c;
  auto out = make_node(std::move(v), {x});
  if (out->needs_grad) {
    auto px = x;
    out->backprop = [px, s](const Var& self) {
      axpy(px->ensure_grad(), self.grad, s);
    };
  }
  return out;
}

VarPtr mul_scalar(const VarPtr& x, const VarPtr& s) {
  if (s->value.numel() != 1) {
    throw ShapeError("mul_scalar: scale must be 1x1, got " + s->value.shape_str());
  }
  const double sv = s->value[0];
  Tensor v = x->value;
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] *= sv;
  auto out = make_node(std::move(v), {x, s});
  if (out->needs_grad) {
    auto px = x, ps = s;
    out->backprop = [px, ps](const Var& self) {
      if (px->needs_grad) axpy(px->ensure_grad(), self.grad, ps->value[0]);
      if (ps->needs_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
          acc += self.grad[i] * px->value[i];
        ps->ensure_grad()[0] += acc;
      }
    };
  }
  return out;
}

VarPtr activation(Act kind, const VarPtr& x) {
  Tensor v(x->value.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = act_forward(kind, x->value[i]);
  auto out = make_node(std::move(v), {x});
  if (out->needs_grad) {
    auto px = x;
    out->backprop = [px, kind](const Var& self) {
      Tensor& g = px->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i)
        g[i] += self.grad[i] * act_derivative(kind, px->value[i]);
    };
  }
  return out;
}

VarPtr softmax_rows(const VarPtr& x) {
  const std::size_t n = x->value.rows(), d = x->value.cols();
  Tensor v({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x->value.data() + i * d;
    double* vi = v.data() + i * d;
    double mx = xi[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      vi[j] = std::exp(xi[j] - mx);
      sum += vi[j];
    }
    for (std::size_t j = 0; j < d; ++j) vi[j] /= sum;
  }
  auto out = make_node(std::move(v), {x});
  if (out->needs_grad) {
    auto px = x;
    out->backprop = [px, n, d](const Var& self) {
      Tensor& g = px->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double* y = self.value.data() + i * d;
        const double* dy = self.grad.data() + i * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += y[j] * dy[j];
        double* gi = g.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) gi[j] += y[j] * (dy[j] - dot);
      }
    };
  }
  return out;
}

VarPtr layer_norm(const VarPtr& x, const VarPtr& gain, const VarPtr& bias,
                  double eps) {
  const std::size_t n = x->value.rows(), d = x->value.cols();
  if (gain->value.numel() != d || bias->value.numel() != d) {
    throw ShapeError("layer_norm: gain/bias do not match feature dim of " +
                     x->value.shape_str());
  }
  Tensor v({n, d});
  Tensor xhat({n, d});
  Tensor inv_std({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x->value.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xi[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xi[j] - mean) * is;
      xhat[i * d + j] = h;
      v[i * d + j] = gain->value[j] * h + bias->value[j];
    }
  }
  auto out = make_node(std::move(v), {x, gain, bias});
  if (out->needs_grad) {
    auto px = x, pg = gain, pb = bias;
    out->backprop = [px, pg, pb, xhat, inv_std, n, d](const Var& self) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* dy = self.grad.data() + i * d;
        const double* xh = xhat.data() + i * d;
        if (pg->needs_grad) {
          Tensor& gg = pg->ensure_grad();
          for (std::size_t j = 0; j < d; ++j) gg[j] += dy[j] * xh[j];
        }
        if (pb->needs_grad) {
          Tensor& gb = pb->ensure_grad();
          for (std::size_t j = 0; j < d; ++j) gb[j] += dy[j];
        }
        if (px->needs_grad) {
          // dxhat = dy .* gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat.*xhat)) * inv_std
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy[j] * pg->value[j];
            m1 += dxh;
            m2 += dxh * xh[j];
          }
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          Tensor& gx = px->ensure_grad();
          double* gxi = gx.data() + i * d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy[j] * pg->value[j];
            gxi[j] += (dxh - m1 - xh[j] * m2) * inv_std[i];
          }
        }
      }
    };
  }
  return out;
}

VarPtr slice_cols(const VarPtr& x, std::size_t first, std::size_t count) {
  const std::size_t n = x->value.rows(), d = x->value.cols();
  if (first + count > d) {
    throw ShapeError("slice_cols: [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of " +
                     x->value.shape_str());
  }
  Tensor v({n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j)
      v[i * count + j] = x->value[i * d + first + j];
  auto out = make_node(std::move(v), {x});
  if (out->needs_grad) {
    auto px = x;
    out->backprop = [px, first, count, n, d](const Var& self) {
      Tensor& g = px->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < count; ++j)
          g[i * d + first + j] += self.grad[i * count + j];
    };
  }
  return out;
}

VarPtr concat_cols(const std::vector<VarPtr>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: empty input list");
  const std::size_t n = xs[0]->value.rows();
  std::size_t total = 0;
  for (const auto& x : xs) {
    if (x->value.rows() != n) {
      throw ShapeError("concat_cols: row mismatch " + xs[0]->value.shape_str() +
                       " vs " + x->value.shape_str());
    }
    total += x->value.cols();
  }
  Tensor v({n, total});
  std::size_t off = 0;
  for (const auto& x : xs) {
    const std::size_t w = x->value.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j)
        v[i * total + off + j] = x->value[i * w + j];
    off += w;
  }
  auto out = make_node(std::move(v), xs);
  if (out->needs_grad) {
    auto parts = xs;
    out->backprop = [parts, n, total](const Var& self) {
      std::size_t off = 0;
      for (const auto& x : parts) {
        const std::size_t w = x->value.cols();
        if (x->needs_grad) {
          Tensor& g = x->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j)
              g[i * w + j] += self.grad[i * total + off + j];
        }
        off += w;
      }
    };
  }
  return out;
}

VarPtr mean_all(const VarPtr& x) {
  const std::size_t n = x->value.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x->value[i];
  auto out = make_node(Tensor::scalar(s / static_cast<double>(n)), {x});
  if (out->needs_grad) {
    auto px = x;
    out->backprop = [px, n](const Var& self) {
      const double g = self.grad[0] / static_cast<double>(n);
      Tensor& gx = px->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    };
  }
  return out;
}

VarPtr mean_rows(const VarPtr& x) {
  const std::size_t n = x->value.rows(), d = x->value.cols();
  Tensor v({1, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) v[j] += x->value[i * d + j];
  for (std::size_t j = 0; j < d; ++j) v[j] /= static_cast<double>(n);
  auto out = make_node(std::move(v), {x});
  if (out->needs_grad) {
    auto px = x;
    out->backprop = [px, n, d](const Var& self) {
      Tensor& g = px->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
          g[i * d + j] += self.grad[j] / static_cast<double>(n);
    };
  }
  return out;
}

VarPtr mean_of_rows(const VarPtr& x, const std::vector<std::size_t>& rows) {
  if (x->value.cols() != 1) {
    throw ShapeError("mean_of_rows expects a column vector, got " +
                     x->value.shape_str());
  }
  if (rows.empty()) throw ShapeError("mean_of_rows: empty selection");
  double s = 0.0;
  for (std::size_t r : rows) s += x->value[r];
  auto out = make_node(Tensor::scalar(s / static_cast<double>(rows.size())), {x});
  if (out->needs_grad) {
    auto px = x;
    auto sel = rows;
    out->backprop = [px, sel](const Var& self) {
      const double g = self.grad[0] / static_cast<double>(sel.size());
      Tensor& gx = px->ensure_grad();
      for (std::size_t r : sel) gx[r] += g;
    };
  }
  return out;
}

VarPtr bce_with_logits(const VarPtr& z, double target) {
  if (z->value.numel() != 1) {
    throw ShapeError("bce_with_logits: logit must be 1x1, got " +
                     z->value.shape_str());
  }
  const double zv = z->value[0];
  const double loss =
      std::max(zv, 0.0) - zv * target + std::log1p(std::exp(-std::abs(zv)));
  auto out = make_node(Tensor::scalar(loss), {z});
  if (out->needs_grad) {
    auto pz = z;
    out->backprop = [pz, target](const Var& self) {
      pz->ensure_grad()[0] +=
          self.grad[0] * (act_forward(Act::Sigmoid, pz->value[0]) - target);
    };
  }
  return out;
}

VarPtr tv_grid(const VarPtr& x, std::size_t h, std::size_t w) {
  if (x->value.numel() != h * w) {
    throw ShapeError("tv_grid: " + x->value.shape_str() + " is not " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const double* p = x->value.data();
  double total = 0.0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j + 1 < w; ++j)
      total += std::abs(p[i * w + j + 1] - p[i * w + j]);
  for (std::size_t i = 0; i + 1 < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      total += std::abs(p[(i + 1) * w + j] - p[i * w + j]);
  total /= static_cast<double>(h * w);
  auto out = make_node(Tensor::scalar(total), {x});
  if (out->needs_grad) {
    auto px = x;
    out->backprop = [px, h, w](const Var& self) {
      const double g = self.grad[0] / static_cast<double>(h * w);
      const double* p = px->value.data();
      Tensor& gx = px->ensure_grad();
      auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j + 1 < w; ++j) {
          const double s = sgn(p[i * w + j + 1] - p[i * w + j]);
          gx[i * w + j + 1] += g * s;
          gx[i * w + j] -= g * s;
        }
      for (std::size_t i = 0; i + 1 < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double s = sgn(p[(i + 1) * w + j] - p[i * w + j]);
          gx[(i + 1) * w + j] += g * s;
          gx[i * w + j] -= g * s;
        }
    };
  }
  return out;
}

VarPtr cosine_row_distance(const VarPtr& a, const VarPtr& b,
                           double degenerate_eps, bool* degenerate_flag) {
  require_same_shape(a->value, b->value, "cosine_row_distance");
  const std::size_t n = a->value.rows(), d = a->value.cols();
  Tensor v({n, 1});
  std::vector<char> degenerate(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a->value.data() + i * d;
    const double* bi = b->value.data() + i * d;
    double na = 0.0, nb = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      na += ai[j] * ai[j];
      nb += bi[j] * bi[j];
      dot += ai[j] * bi[j];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < degenerate_eps || nb < degenerate_eps) {
      degenerate[i] = 1;
      if (degenerate_flag) *degenerate_flag = true;
      v[i] = 0.0;
    } else {
      v[i] = 1.0 - dot / (na * nb);
    }
  }
  auto out = make_node(std::move(v), {a, b});
  if (out->needs_grad) {
    auto pa = a, pb = b;
    out->backprop = [pa, pb, degenerate, n, d](const Var& self) {
      for (std::size_t i = 0; i < n; ++i) {
        if (degenerate[i]) continue;
        const double g = self.grad[i];
        if (g == 0.0) continue;
        const double* ai = pa->value.data() + i * d;
        const double* bi = pb->value.data() + i * d;
        double na = 0.0, nb = 0.0, dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          na += ai[j] * ai[j];
          nb += bi[j] * bi[j];
          dot += ai[j] * bi[j];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        // d(1 - cos)/da = -(b/(|a||b|) - cos * a/|a|^2)
        const double cosv = dot / (na * nb);
        if (pa->needs_grad) {
          Tensor& ga = pa->ensure_grad();
          double* gai = ga.data() + i * d;
          for (std::size_t j = 0; j < d; ++j)
            gai[j] += -g * (bi[j] / (na * nb) - cosv * ai[j] / (na * na));
        }
        if (pb->needs_grad) {
          Tensor& gb = pb->ensure_grad();
          double* gbi = gb.data() + i * d;
          for (std::size_t j = 0; j < d; ++j)
            gbi[j] += -g * (ai[j] / (na * nb) - cosv * bi[j] / (nb * nb));
        }
      }
    };
  }
  return out;
}

VarPtr dense(const VarPtr& x, const VarPtr& w, const VarPtr& b) {
  return add_rowvec(matmul(x, w), b);
}

void backward(const VarPtr& root) {
  if (root->value.numel() != 1) {
    throw ShapeError("backward: root must be scalar, got " +
                     root->value.shape_str());
  }
  if (!root->value.all_finite()) {
    throw NumericError("backward: non-finite loss value");
  }
  // Iterative post-order DFS.
  std::vector<Var*> order;
  std::unordered_set<Var*> visited;
  std::vector<std::pair<Var*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Var* p = node->parents[next++].get();
      if (p->needs_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Var* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

}  // namespace morphdet::nn
