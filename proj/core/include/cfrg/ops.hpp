#pragma once

#include <vector>

#include "cfrg/tensor.hpp"

namespace cfrg::ops {

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);
Tensor add_scalar(const Tensor& a, real c);
Tensor rsub_scalar(real c, const Tensor& a);  // c - a
Tensor clamp(const Tensor& a, real lo, real hi);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);

// reductions
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
// mean over positions selected by a {0,1} weight buffer; empty selection -> 0
Tensor masked_mean(const Tensor& a, const std::vector<real>& sel);

// structure
Tensor concat_channels(const std::vector<Tensor>& xs);  // NCHW, dim 1
// x: NCHW, w: N1HW -> broadcast product over channels
Tensor mul_spatial(const Tensor& x, const Tensor& w);
// x: NCHW, s: NC11 -> broadcast product over spatial dims
Tensor mul_channel(const Tensor& x, const Tensor& s);

// conv stack
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
              int groups = 1);
// weight layout [Cin, Cout, kh, kw]
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int padding);
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor running_mean,
                    Tensor running_var, bool training, real momentum = 0.1, real eps = 1e-5);
Tensor max_pool2d(const Tensor& x, int kernel, int stride, int padding);
Tensor global_avg_pool(const Tensor& x);  // NCHW -> NC11
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);

// 1 - cosine distance building block: per-pixel cosine similarity along the
// channel axis of two NCHW tensors -> N1HW. Denominator clamped at eps.
Tensor cosine_similarity_map(const Tensor& a, const Tensor& b, real eps = 1e-8);

// mean over all positions of -[t log(p) + (1-t) log(1-p)], p clamped to
// [eps, 1-eps]; target is plain data
Tensor bce_mean(const Tensor& probs, const std::vector<real>& target, real eps = 1e-7);

}  // namespace cfrg::ops
