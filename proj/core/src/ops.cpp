#include "cfrg/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace cfrg::ops {

using detail::Node;
using MatrixR = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatrixR>;
using MapC = Eigen::Map<const MatrixR>;

namespace {

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

Tensor make_result(std::vector<int> shape, std::vector<Tensor> parents_if_grad) {
  bool rg = false;
  if (grad_enabled())
    for (const auto& p : parents_if_grad) rg = rg || p.requires_grad();
  Tensor out = Tensor::zeros(std::move(shape), rg);
  if (rg) {
    auto& ps = out.node()->parents;
    for (auto& p : parents_if_grad) ps.push_back(p.node());
  }
  return out;
}

// Elementwise op with pointwise partials captured as lambdas.
template <typename FwdFn, typename DaFn>
Tensor unary_ew(const Tensor& a, FwdFn fwd, DaFn dfda) {
  Tensor out = make_result(a.shape(), {a});
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < av.size(); ++i) ov[i] = fwd(av[i]);
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backward_fn = [an, dfda](Node& self) {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (size_t i = 0; i < self.value.size(); ++i)
        an->grad[i] += self.grad[i] * dfda(an->value[i], self.value[i]);
    };
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  CFRG_CHECK(same_shape(a, b), "add: shape mismatch");
  Tensor out = make_result(a.shape(), {a, b});
  for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backward_fn = [an, bn](Node& self) {
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        n->ensure_grad();
        for (size_t i = 0; i < self.value.size(); ++i) n->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  CFRG_CHECK(same_shape(a, b), "sub: shape mismatch");
  Tensor out = make_result(a.shape(), {a, b});
  for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backward_fn = [an, bn](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < self.value.size(); ++i) an->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < self.value.size(); ++i) bn->grad[i] -= self.grad[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  CFRG_CHECK(same_shape(a, b), "mul: shape mismatch");
  Tensor out = make_result(a.shape(), {a, b});
  for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backward_fn = [an, bn](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < self.value.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < self.value.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& a, real c) {
  return unary_ew(a, [c](real v) { return c * v; }, [c](real, real) { return c; });
}

Tensor add_scalar(const Tensor& a, real c) {
  return unary_ew(a, [c](real v) { return v + c; }, [](real, real) { return 1.0; });
}

Tensor rsub_scalar(real c, const Tensor& a) {
  return unary_ew(a, [c](real v) { return c - v; }, [](real, real) { return -1.0; });
}

Tensor clamp(const Tensor& a, real lo, real hi) {
  return unary_ew(
      a, [lo, hi](real v) { return std::clamp(v, lo, hi); },
      [lo, hi](real x, real) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor relu(const Tensor& a) {
  return unary_ew(
      a, [](real v) { return v > 0 ? v : 0.0; }, [](real x, real) { return x > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_ew(
      a, [](real v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](real, real y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& a) {
  return unary_ew(
      a, [](real v) { return v / (1.0 + std::exp(-v)); },
      [](real x, real) {
        real s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor mean_all(const Tensor& a) {
  Tensor out = make_result({1}, {a});
  real acc = 0;
  for (real v : a.data()) acc += v;
  const real inv = 1.0 / (real)a.numel();
  out.data()[0] = acc * inv;
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backward_fn = [an, inv](Node& self) {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (size_t i = 0; i < an->value.size(); ++i) an->grad[i] += self.grad[0] * inv;
    };
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  Tensor out = make_result({1}, {a});
  real acc = 0;
  for (real v : a.data()) acc += v;
  out.data()[0] = acc;
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backward_fn = [an](Node& self) {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (size_t i = 0; i < an->value.size(); ++i) an->grad[i] += self.grad[0];
    };
  }
  return out;
}

Tensor masked_mean(const Tensor& a, const std::vector<real>& sel) {
  CFRG_CHECK(sel.size() == a.data().size(), "masked_mean: selector size mismatch");
  real count = 0;
  for (real s : sel) count += s;
  Tensor out = make_result({1}, {a});
  if (count == 0) {
    out.data()[0] = 0.0;
    return out;  // empty selection contributes nothing and no gradient
  }
  real acc = 0;
  for (size_t i = 0; i < sel.size(); ++i) acc += sel[i] * a.data()[i];
  const real inv = 1.0 / count;
  out.data()[0] = acc * inv;
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backward_fn = [an, sel, inv](Node& self) {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (size_t i = 0; i < sel.size(); ++i) an->grad[i] += self.grad[0] * sel[i] * inv;
    };
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  CFRG_CHECK(!xs.empty(), "concat_channels: empty input");
  const auto& s0 = xs[0].shape();
  CFRG_CHECK(s0.size() == 4, "concat_channels expects NCHW");
  int ctot = 0;
  for (const auto& x : xs) {
    const auto& s = x.shape();
    CFRG_CHECK(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
               "concat_channels: incompatible shapes");
    ctot += s[1];
  }
  Tensor out = make_result({s0[0], ctot, s0[2], s0[3]}, xs);
  const int64_t hw = (int64_t)s0[2] * s0[3];
  for (int n = 0; n < s0[0]; ++n) {
    int coff = 0;
    for (const auto& x : xs) {
      const int cx = x.shape()[1];
      std::copy_n(x.data().begin() + (int64_t)n * cx * hw, cx * hw,
                  out.data().begin() + ((int64_t)n * ctot + coff) * hw);
      coff += cx;
    }
  }
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<Node>> nodes;
    std::vector<int> chans;
    for (const auto& x : xs) {
      nodes.push_back(x.node());
      chans.push_back(x.shape()[1]);
    }
    const int N = s0[0];
    out.node()->backward_fn = [nodes, chans, ctot, hw, N](Node& self) {
      for (int n = 0; n < N; ++n) {
        int coff = 0;
        for (size_t k = 0; k < nodes.size(); ++k) {
          auto& nd = *nodes[k];
          const int cx = chans[k];
          if (nd.requires_grad) {
            nd.ensure_grad();
            const real* src = self.grad.data() + ((int64_t)n * ctot + coff) * hw;
            real* dst = nd.grad.data() + (int64_t)n * cx * hw;
            for (int64_t i = 0; i < (int64_t)cx * hw; ++i) dst[i] += src[i];
          }
          coff += cx;
        }
      }
    };
  }
  return out;
}

Tensor mul_spatial(const Tensor& x, const Tensor& w) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  CFRG_CHECK(xs.size() == 4 && ws.size() == 4 && ws[1] == 1 && ws[0] == xs[0] && ws[2] == xs[2] &&
                 ws[3] == xs[3],
             "mul_spatial: w must be N1HW matching x");
  Tensor out = make_result(xs, {x, w});
  const int64_t hw = (int64_t)xs[2] * xs[3];
  for (int n = 0; n < xs[0]; ++n)
    for (int c = 0; c < xs[1]; ++c) {
      const real* xp = x.data().data() + ((int64_t)n * xs[1] + c) * hw;
      const real* wp = w.data().data() + (int64_t)n * hw;
      real* op = out.data().data() + ((int64_t)n * xs[1] + c) * hw;
      for (int64_t i = 0; i < hw; ++i) op[i] = xp[i] * wp[i];
    }
  if (out.requires_grad()) {
    auto xn = x.node(), wn = w.node();
    const int N = xs[0], C = xs[1];
    out.node()->backward_fn = [xn, wn, N, C, hw](Node& self) {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const real* gp = self.grad.data() + ((int64_t)n * C + c) * hw;
            const real* wp = wn->value.data() + (int64_t)n * hw;
            real* dst = xn->grad.data() + ((int64_t)n * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) dst[i] += gp[i] * wp[i];
          }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const real* gp = self.grad.data() + ((int64_t)n * C + c) * hw;
            const real* xp = xn->value.data() + ((int64_t)n * C + c) * hw;
            real* dst = wn->grad.data() + (int64_t)n * hw;
            for (int64_t i = 0; i < hw; ++i) dst[i] += gp[i] * xp[i];
          }
      }
    };
  }
  return out;
}

Tensor mul_channel(const Tensor& x, const Tensor& s) {
  const auto& xs = x.shape();
  const auto& ss = s.shape();
  CFRG_CHECK(xs.size() == 4 && ss.size() == 4 && ss[0] == xs[0] && ss[1] == xs[1] && ss[2] == 1 &&
                 ss[3] == 1,
             "mul_channel: s must be NC11 matching x");
  Tensor out = make_result(xs, {x, s});
  const int64_t hw = (int64_t)xs[2] * xs[3];
  for (int n = 0; n < xs[0]; ++n)
    for (int c = 0; c < xs[1]; ++c) {
      const real sv = s.data()[(size_t)n * xs[1] + c];
      const real* xp = x.data().data() + ((int64_t)n * xs[1] + c) * hw;
      real* op = out.data().data() + ((int64_t)n * xs[1] + c) * hw;
      for (int64_t i = 0; i < hw; ++i) op[i] = xp[i] * sv;
    }
  if (out.requires_grad()) {
    auto xn = x.node(), sn = s.node();
    const int N = xs[0], C = xs[1];
    out.node()->backward_fn = [xn, sn, N, C, hw](Node& self) {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const real* gp = self.grad.data() + ((int64_t)n * C + c) * hw;
          if (xn->requires_grad) {
            xn->ensure_grad();
            const real sv = sn->value[(size_t)n * C + c];
            real* dst = xn->grad.data() + ((int64_t)n * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) dst[i] += gp[i] * sv;
          }
          if (sn->requires_grad) {
            sn->ensure_grad();
            const real* xp = xn->value.data() + ((int64_t)n * C + c) * hw;
            real acc = 0;
            for (int64_t i = 0; i < hw; ++i) acc += gp[i] * xp[i];
            sn->grad[(size_t)n * C + c] += acc;
          }
        }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// convolution kernels (im2col / col2im + GEMM)

namespace {

struct ConvDims {
  int N, Ci, H, W, Co, kh, kw, stride, pad, groups, Ho, Wo;
};

// col buffer layout: (Ci/g * kh * kw) x (Ho * Wo), one group and one sample
// at a time.
void im2col(const real* x, const ConvDims& d, int n, int g, real* col) {
  const int cig = d.Ci / d.groups;
  const int64_t hw = (int64_t)d.H * d.W;
  const real* base = x + ((int64_t)n * d.Ci + (int64_t)g * cig) * hw;
  int64_t idx = 0;
  for (int c = 0; c < cig; ++c)
    for (int u = 0; u < d.kh; ++u)
      for (int v = 0; v < d.kw; ++v) {
        for (int oy = 0; oy < d.Ho; ++oy) {
          const int iy = oy * d.stride - d.pad + u;
          if (iy < 0 || iy >= d.H) {
            for (int ox = 0; ox < d.Wo; ++ox) col[idx++] = 0;
            continue;
          }
          const real* row = base + (int64_t)c * hw + (int64_t)iy * d.W;
          for (int ox = 0; ox < d.Wo; ++ox) {
            const int ix = ox * d.stride - d.pad + v;
            col[idx++] = (ix >= 0 && ix < d.W) ? row[ix] : 0;
          }
        }
      }
}

void col2im_accum(const real* col, const ConvDims& d, int n, int g, real* x) {
  const int cig = d.Ci / d.groups;
  const int64_t hw = (int64_t)d.H * d.W;
  real* base = x + ((int64_t)n * d.Ci + (int64_t)g * cig) * hw;
  int64_t idx = 0;
  for (int c = 0; c < cig; ++c)
    for (int u = 0; u < d.kh; ++u)
      for (int v = 0; v < d.kw; ++v)
        for (int oy = 0; oy < d.Ho; ++oy) {
          const int iy = oy * d.stride - d.pad + u;
          if (iy < 0 || iy >= d.H) {
            idx += d.Wo;
            continue;
          }
          real* row = base + (int64_t)c * hw + (int64_t)iy * d.W;
          for (int ox = 0; ox < d.Wo; ++ox) {
            const int ix = ox * d.stride - d.pad + v;
            if (ix >= 0 && ix < d.W) row[ix] += col[idx];
            ++idx;
          }
        }
}

// y[n, g-chunk] += Wg * col ; forward pass of a grouped conv. Accumulating
// lets the same kernel serve as the adjoint map in conv_transpose backward.
void conv_forward_raw(const real* x, const real* w, const real* b, const ConvDims& d, real* y) {
  const int cig = d.Ci / d.groups, cog = d.Co / d.groups;
  const int64_t k = (int64_t)cig * d.kh * d.kw;
  const int64_t ohw = (int64_t)d.Ho * d.Wo;
  std::vector<real> col((size_t)(k * ohw));
  for (int n = 0; n < d.N; ++n)
    for (int g = 0; g < d.groups; ++g) {
      im2col(x, d, n, g, col.data());
      MapC wg(w + (int64_t)g * cog * k, cog, k);
      MapC cm(col.data(), k, ohw);
      MapM ym(y + ((int64_t)n * d.Co + (int64_t)g * cog) * ohw, cog, ohw);
      ym.noalias() += wg * cm;
      if (b)
        for (int c = 0; c < cog; ++c) ym.row(c).array() += b[g * cog + c];
    }
}

// dx += col2im(Wg^T * dy)
void conv_backward_input_raw(const real* dy, const real* w, const ConvDims& d, real* dx) {
  const int cig = d.Ci / d.groups, cog = d.Co / d.groups;
  const int64_t k = (int64_t)cig * d.kh * d.kw;
  const int64_t ohw = (int64_t)d.Ho * d.Wo;
  std::vector<real> col((size_t)(k * ohw));
  for (int n = 0; n < d.N; ++n)
    for (int g = 0; g < d.groups; ++g) {
      MapC wg(w + (int64_t)g * cog * k, cog, k);
      MapC dym(dy + ((int64_t)n * d.Co + (int64_t)g * cog) * ohw, cog, ohw);
      MapM cm(col.data(), k, ohw);
      cm.noalias() = wg.transpose() * dym;
      col2im_accum(col.data(), d, n, g, dx);
    }
}

// dw += dy * col^T
void conv_backward_weight_raw(const real* dy, const real* x, const ConvDims& d, real* dw) {
  const int cig = d.Ci / d.groups, cog = d.Co / d.groups;
  const int64_t k = (int64_t)cig * d.kh * d.kw;
  const int64_t ohw = (int64_t)d.Ho * d.Wo;
  std::vector<real> col((size_t)(k * ohw));
  for (int n = 0; n < d.N; ++n)
    for (int g = 0; g < d.groups; ++g) {
      im2col(x, d, n, g, col.data());
      MapC dym(dy + ((int64_t)n * d.Co + (int64_t)g * cog) * ohw, cog, ohw);
      MapC cm(col.data(), k, ohw);
      MapM dwm(dw + (int64_t)g * cog * k, cog, k);
      dwm.noalias() += dym * cm.transpose();
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
              int groups) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  CFRG_CHECK(xs.size() == 4 && ws.size() == 4, "conv2d expects NCHW input and OIHW weight");
  CFRG_CHECK(xs[1] == ws[1] * groups, "conv2d: channel/group mismatch");
  CFRG_CHECK(ws[0] % groups == 0, "conv2d: Cout not divisible by groups");
  ConvDims d;
  d.N = xs[0];
  d.Ci = xs[1];
  d.H = xs[2];
  d.W = xs[3];
  d.Co = ws[0];
  d.kh = ws[2];
  d.kw = ws[3];
  d.stride = stride;
  d.pad = padding;
  d.groups = groups;
  d.Ho = (d.H + 2 * padding - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * padding - d.kw) / stride + 1;
  CFRG_CHECK(d.Ho > 0 && d.Wo > 0, "conv2d: output would be empty");

  std::vector<Tensor> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  Tensor out = make_result({d.N, d.Co, d.Ho, d.Wo}, parents);
  conv_forward_raw(x.data().data(), w.data().data(), b.defined() ? b.data().data() : nullptr, d,
                   out.data().data());

  if (out.requires_grad()) {
    auto xn = x.node(), wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    out.node()->backward_fn = [xn, wn, bn, d](Node& self) {
      if (xn->requires_grad) {
        xn->ensure_grad();
        conv_backward_input_raw(self.grad.data(), wn->value.data(), d, xn->grad.data());
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        conv_backward_weight_raw(self.grad.data(), xn->value.data(), d, wn->grad.data());
      }
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        const int64_t ohw = (int64_t)d.Ho * d.Wo;
        for (int n = 0; n < d.N; ++n)
          for (int c = 0; c < d.Co; ++c) {
            const real* gp = self.grad.data() + ((int64_t)n * d.Co + c) * ohw;
            real acc = 0;
            for (int64_t i = 0; i < ohw; ++i) acc += gp[i];
            bn->grad[c] += acc;
          }
      }
    };
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int padding) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  CFRG_CHECK(xs.size() == 4 && ws.size() == 4 && xs[1] == ws[0],
             "conv_transpose2d expects NCHW input and [Cin,Cout,kh,kw] weight");
  const int N = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
  const int Co = ws[1], kh = ws[2], kw = ws[3];
  const int Ho = (H - 1) * stride - 2 * padding + kh;
  const int Wo = (W - 1) * stride - 2 * padding + kw;
  CFRG_CHECK(Ho > 0 && Wo > 0, "conv_transpose2d: output would be empty");

  // Reuse the conv kernels by viewing transposed convolution as the adjoint
  // of a conv whose "input" is the output here.
  ConvDims d;
  d.N = N;
  d.Ci = Co;  // conv-view input channels
  d.H = Ho;
  d.W = Wo;
  d.Co = Ci;
  d.kh = kh;
  d.kw = kw;
  d.stride = stride;
  d.pad = padding;
  d.groups = 1;
  d.Ho = H;
  d.Wo = W;

  // conv-view weight is [Ci, Co, kh, kw] == w with roles [O=Ci, I=Co]
  std::vector<Tensor> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  Tensor out = make_result({N, Co, Ho, Wo}, parents);
  // forward = conv_backward_input(dy=x, w)
  conv_backward_input_raw(x.data().data(), w.data().data(), d, out.data().data());
  if (b.defined()) {
    const int64_t ohw = (int64_t)Ho * Wo;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < Co; ++c) {
        real* op = out.data().data() + ((int64_t)n * Co + c) * ohw;
        const real bv = b.data()[(size_t)c];
        for (int64_t i = 0; i < ohw; ++i) op[i] += bv;
      }
  }

  if (out.requires_grad()) {
    auto xn = x.node(), wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    out.node()->backward_fn = [xn, wn, bn, d, N, Co, Ho, Wo](Node& self) {
      if (xn->requires_grad) {
        xn->ensure_grad();
        // dL/dx = conv_forward(dy, w) under the conv view
        conv_forward_raw(self.grad.data(), wn->value.data(), nullptr, d, xn->grad.data());
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        // conv view: weight grad from (x-as-dy, dy-as-input)
        conv_backward_weight_raw(xn->value.data(), self.grad.data(), d, wn->grad.data());
      }
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        const int64_t ohw = (int64_t)Ho * Wo;
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < Co; ++c) {
            const real* gp = self.grad.data() + ((int64_t)n * Co + c) * ohw;
            real acc = 0;
            for (int64_t i = 0; i < ohw; ++i) acc += gp[i];
            bn->grad[c] += acc;
          }
      }
    };
  }
  return out;
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor running_mean,
                    Tensor running_var, bool training, real momentum, real eps) {
  const auto& xs = x.shape();
  CFRG_CHECK(xs.size() == 4, "batch_norm2d expects NCHW");
  const int N = xs[0], C = xs[1];
  const int64_t hw = (int64_t)xs[2] * xs[3];
  const int64_t m = (int64_t)N * hw;
  CFRG_CHECK(gamma.numel() == C && beta.numel() == C, "batch_norm2d: affine size mismatch");

  std::vector<real> mean(C), var(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      real acc = 0;
      for (int n = 0; n < N; ++n) {
        const real* xp = x.data().data() + ((int64_t)n * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) acc += xp[i];
      }
      mean[c] = acc / (real)m;
      real vacc = 0;
      for (int n = 0; n < N; ++n) {
        const real* xp = x.data().data() + ((int64_t)n * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const real dv = xp[i] - mean[c];
          vacc += dv * dv;
        }
      }
      var[c] = vacc / (real)m;  // biased, used for normalization
      // running stats track the unbiased estimate
      const real unbiased = m > 1 ? vacc / (real)(m - 1) : vacc;
      running_mean.data()[(size_t)c] = (1 - momentum) * running_mean.data()[(size_t)c] + momentum * mean[c];
      running_var.data()[(size_t)c] = (1 - momentum) * running_var.data()[(size_t)c] + momentum * unbiased;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean.data()[(size_t)c];
      var[c] = running_var.data()[(size_t)c];
    }
  }

  Tensor out = make_result(xs, {x, gamma, beta});
  std::vector<real> inv_std(C);
  for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* xp = x.data().data() + ((int64_t)n * C + c) * hw;
      real* op = out.data().data() + ((int64_t)n * C + c) * hw;
      const real g = gamma.data()[(size_t)c], bta = beta.data()[(size_t)c];
      for (int64_t i = 0; i < hw; ++i) op[i] = (xp[i] - mean[c]) * inv_std[c] * g + bta;
    }

  if (out.requires_grad()) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    out.node()->backward_fn = [xn, gn, bn, mean, inv_std, training, N, C, hw](Node& self) {
      const int64_t m = (int64_t)N * hw;
      for (int c = 0; c < C; ++c) {
        // per-channel reductions of dy and dy*xhat
        real sum_dy = 0, sum_dy_xhat = 0;
        for (int n = 0; n < N; ++n) {
          const real* gp = self.grad.data() + ((int64_t)n * C + c) * hw;
          const real* xp = xn->value.data() + ((int64_t)n * C + c) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            const real xhat = (xp[i] - mean[c]) * inv_std[c];
            sum_dy += gp[i];
            sum_dy_xhat += gp[i] * xhat;
          }
        }
        if (gn->requires_grad) {
          gn->ensure_grad();
          gn->grad[(size_t)c] += sum_dy_xhat;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[(size_t)c] += sum_dy;
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          const real g = gn->value[(size_t)c];
          for (int n = 0; n < N; ++n) {
            const real* gp = self.grad.data() + ((int64_t)n * C + c) * hw;
            const real* xp = xn->value.data() + ((int64_t)n * C + c) * hw;
            real* dst = xn->grad.data() + ((int64_t)n * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              if (training) {
                const real xhat = (xp[i] - mean[c]) * inv_std[c];
                dst[i] += g * inv_std[c] *
                          (gp[i] - sum_dy / (real)m - xhat * sum_dy_xhat / (real)m);
              } else {
                dst[i] += g * inv_std[c] * gp[i];
              }
            }
          }
        }
      }
    };
  }
  return out;
}

Tensor max_pool2d(const Tensor& x, int kernel, int stride, int padding) {
  const auto& xs = x.shape();
  CFRG_CHECK(xs.size() == 4, "max_pool2d expects NCHW");
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int Ho = (H + 2 * padding - kernel) / stride + 1;
  const int Wo = (W + 2 * padding - kernel) / stride + 1;
  Tensor out = make_result({N, C, Ho, Wo}, {x});
  std::vector<int64_t> argmax((size_t)out.numel());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* xp = x.data().data() + ((int64_t)n * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          real best = -1e300;
          int64_t best_idx = -1;
          for (int u = 0; u < kernel; ++u)
            for (int v = 0; v < kernel; ++v) {
              const int iy = oy * stride - padding + u;
              const int ix = ox * stride - padding + v;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              const real val = xp[(int64_t)iy * W + ix];
              if (val > best) {
                best = val;
                best_idx = (int64_t)iy * W + ix;
              }
            }
          const int64_t oidx = (((int64_t)n * C + c) * Ho + oy) * Wo + ox;
          out.data()[(size_t)oidx] = best;
          argmax[(size_t)oidx] = best_idx;
        }
    }
  if (out.requires_grad()) {
    auto xn = x.node();
    out.node()->backward_fn = [xn, argmax, N, C, H, W, Ho, Wo](Node& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          real* dst = xn->grad.data() + ((int64_t)n * C + c) * H * W;
          const int64_t base = ((int64_t)n * C + c) * Ho * Wo;
          for (int64_t i = 0; i < (int64_t)Ho * Wo; ++i)
            if (argmax[(size_t)(base + i)] >= 0) dst[argmax[(size_t)(base + i)]] += self.grad[(size_t)(base + i)];
        }
    };
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  const auto& xs = x.shape();
  CFRG_CHECK(xs.size() == 4, "global_avg_pool expects NCHW");
  const int N = xs[0], C = xs[1];
  const int64_t hw = (int64_t)xs[2] * xs[3];
  Tensor out = make_result({N, C, 1, 1}, {x});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* xp = x.data().data() + ((int64_t)n * C + c) * hw;
      real acc = 0;
      for (int64_t i = 0; i < hw; ++i) acc += xp[i];
      out.data()[(size_t)n * C + c] = acc / (real)hw;
    }
  if (out.requires_grad()) {
    auto xn = x.node();
    out.node()->backward_fn = [xn, N, C, hw](Node& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const real g = self.grad[(size_t)n * C + c] / (real)hw;
          real* dst = xn->grad.data() + ((int64_t)n * C + c) * hw;
          for (int64_t i = 0; i < hw; ++i) dst[i] += g;
        }
    };
  }
  return out;
}

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
  const auto& xs = x.shape();
  CFRG_CHECK(xs.size() == 4, "upsample_bilinear expects NCHW");
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  Tensor out = make_result({N, C, out_h, out_w}, {x});
  const real sy = (real)H / out_h, sx = (real)W / out_w;

  // precompute the 4-tap mix per output position (half-pixel centers)
  struct Tap {
    int i0, i1;
    real w0, w1;
  };
  std::vector<Tap> ty(out_h), tx(out_w);
  for (int y = 0; y < out_h; ++y) {
    real f = std::clamp((y + 0.5) * sy - 0.5, 0.0, (real)(H - 1));
    int i0 = (int)std::floor(f);
    int i1 = std::min(i0 + 1, H - 1);
    ty[y] = {i0, i1, 1 - (f - i0), f - i0};
  }
  for (int xpos = 0; xpos < out_w; ++xpos) {
    real f = std::clamp((xpos + 0.5) * sx - 0.5, 0.0, (real)(W - 1));
    int i0 = (int)std::floor(f);
    int i1 = std::min(i0 + 1, W - 1);
    tx[xpos] = {i0, i1, 1 - (f - i0), f - i0};
  }

  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* xp = x.data().data() + ((int64_t)n * C + c) * H * W;
      real* op = out.data().data() + ((int64_t)n * C + c) * out_h * out_w;
      for (int y = 0; y < out_h; ++y)
        for (int xo = 0; xo < out_w; ++xo)
          op[(int64_t)y * out_w + xo] =
              ty[y].w0 * (tx[xo].w0 * xp[(int64_t)ty[y].i0 * W + tx[xo].i0] +
                          tx[xo].w1 * xp[(int64_t)ty[y].i0 * W + tx[xo].i1]) +
              ty[y].w1 * (tx[xo].w0 * xp[(int64_t)ty[y].i1 * W + tx[xo].i0] +
                          tx[xo].w1 * xp[(int64_t)ty[y].i1 * W + tx[xo].i1]);
    }

  if (out.requires_grad()) {
    auto xn = x.node();
    out.node()->backward_fn = [xn, ty, tx, N, C, H, W, out_h, out_w](Node& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          real* dst = xn->grad.data() + ((int64_t)n * C + c) * H * W;
          const real* gp = self.grad.data() + ((int64_t)n * C + c) * out_h * out_w;
          for (int y = 0; y < out_h; ++y)
            for (int xo = 0; xo < out_w; ++xo) {
              const real g = gp[(int64_t)y * out_w + xo];
              dst[(int64_t)ty[y].i0 * W + tx[xo].i0] += g * ty[y].w0 * tx[xo].w0;
              dst[(int64_t)ty[y].i0 * W + tx[xo].i1] += g * ty[y].w0 * tx[xo].w1;
              dst[(int64_t)ty[y].i1 * W + tx[xo].i0] += g * ty[y].w1 * tx[xo].w0;
              dst[(int64_t)ty[y].i1 * W + tx[xo].i1] += g * ty[y].w1 * tx[xo].w1;
            }
        }
    };
  }
  return out;
}

Tensor cosine_similarity_map(const Tensor& a, const Tensor& b, real eps) {
  CFRG_CHECK(same_shape(a, b), "cosine_similarity_map: shape mismatch");
  const auto& s = a.shape();
  CFRG_CHECK(s.size() == 4, "cosine_similarity_map expects NCHW");
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  const int64_t hw = (int64_t)H * W;
  Tensor out = make_result({N, 1, H, W}, {a, b});
  for (int n = 0; n < N; ++n)
    for (int64_t i = 0; i < hw; ++i) {
      real dot = 0, na2 = 0, nb2 = 0;
      for (int c = 0; c < C; ++c) {
        const real av = a.data()[((int64_t)n * C + c) * hw + i];
        const real bv = b.data()[((int64_t)n * C + c) * hw + i];
        dot += av * bv;
        na2 += av * av;
        nb2 += bv * bv;
      }
      const real ta = std::max(std::sqrt(na2), eps);
      const real tb = std::max(std::sqrt(nb2), eps);
      out.data()[(size_t)(n * hw + i)] = dot / (ta * tb);
    }
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backward_fn = [an, bn, eps, N, C, hw](Node& self) {
      for (int n = 0; n < N; ++n)
        for (int64_t i = 0; i < hw; ++i) {
          const real g = self.grad[(size_t)(n * hw + i)];
          if (g == 0) continue;
          real dot = 0, na2 = 0, nb2 = 0;
          for (int c = 0; c < C; ++c) {
            const real av = an->value[((int64_t)n * C + c) * hw + i];
            const real bv = bn->value[((int64_t)n * C + c) * hw + i];
            dot += av * bv;
            na2 += av * av;
            nb2 += bv * bv;
          }
          const real na = std::sqrt(na2), nb = std::sqrt(nb2);
          const real ta = std::max(na, eps), tb = std::max(nb, eps);
          const real c_val = dot / (ta * tb);
          if (an->requires_grad) {
            an->ensure_grad();
            for (int c = 0; c < C; ++c) {
              const real av = an->value[((int64_t)n * C + c) * hw + i];
              const real bv = bn->value[((int64_t)n * C + c) * hw + i];
              real d = bv / (ta * tb);
              if (na > eps) d -= c_val * av / (na * na);
              an->grad[((int64_t)n * C + c) * hw + i] += g * d;
            }
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int c = 0; c < C; ++c) {
              const real av = an->value[((int64_t)n * C + c) * hw + i];
              const real bv = bn->value[((int64_t)n * C + c) * hw + i];
              real d = av / (ta * tb);
              if (nb > eps) d -= c_val * bv / (nb * nb);
              bn->grad[((int64_t)n * C + c) * hw + i] += g * d;
            }
          }
        }
    };
  }
  return out;
}

Tensor bce_mean(const Tensor& probs, const std::vector<real>& target, real eps) {
  CFRG_CHECK(target.size() == probs.data().size(), "bce_mean: target size mismatch");
  Tensor out = make_result({1}, {probs});
  const size_t n = target.size();
  real acc = 0;
  for (size_t i = 0; i < n; ++i) {
    const real p = std::clamp(probs.data()[i], eps, 1.0 - eps);
    acc += -(target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p));
  }
  out.data()[0] = acc / (real)n;
  if (out.requires_grad()) {
    auto pn = probs.node();
    out.node()->backward_fn = [pn, target, eps, n](Node& self) {
      if (!pn->requires_grad) return;
      pn->ensure_grad();
      const real inv = 1.0 / (real)n;
      for (size_t i = 0; i < n; ++i) {
        const real raw = pn->value[i];
        if (raw < eps || raw > 1.0 - eps) continue;  // clamped: zero slope
        pn->grad[i] += self.grad[0] * inv * (-target[i] / raw + (1.0 - target[i]) / (1.0 - raw));
      }
    };
  }
  return out;
}

}  // namespace cfrg::ops
