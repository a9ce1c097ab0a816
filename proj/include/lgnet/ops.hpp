/**
 * Copyright 2026 The LGNet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Differentiable tensor operations over the reverse-mode tape.
//
// Every op takes and returns Var<Scalar>; gradients are accumulated into the
// parents' grad buffers by the closure recorded in make_result.

#pragma once

#include "lgnet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgnet {

struct ConvSpec {
  Index stride = 1;
  Index padding = 0;
  Index dilation = 1;
  Index groups = 1;
};

namespace detail {

inline Index conv_out_extent(Index in, Index k, const ConvSpec& s) {
  return (in + 2 * s.padding - s.dilation * (k - 1) - 1) / s.stride + 1;
}

// cols is [cg*k*k, oh*ow] row-major; src points at the first channel of the group.
template <typename Scalar>
void im2col(const Scalar* src, Index cg, Index h, Index w, Index k, const ConvSpec& s, Index oh, Index ow,
            RowMatX<Scalar>& cols) {
  cols.resize(cg * k * k, oh * ow);
  for (Index c = 0; c < cg; ++c) {
    const Scalar* plane = src + c * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = cols.data() + ((c * k + ky) * k + kx) * oh * ow;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * s.stride - s.padding + ky * s.dilation;
          Scalar* dst = row + oy * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, Scalar(0));
            continue;
          }
          const Scalar* line = plane + iy * w;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * s.stride - s.padding + kx * s.dilation;
            dst[ox] = (ix >= 0 && ix < w) ? line[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const RowMatX<Scalar>& cols, Index cg, Index h, Index w, Index k, const ConvSpec& s, Index oh,
                Index ow, Scalar* dst) {
  for (Index c = 0; c < cg; ++c) {
    Scalar* plane = dst + c * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = cols.data() + ((c * k + ky) * k + kx) * oh * ow;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * s.stride - s.padding + ky * s.dilation;
          if (iy < 0 || iy >= h) continue;
          Scalar* line = plane + iy * w;
          const Scalar* srcrow = row + oy * ow;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * s.stride - s.padding + kx * s.dilation;
            if (ix >= 0 && ix < w) line[ix] += srcrow[ox];
          }
        }
      }
    }
  }
}

inline bool is_pointwise(Index k, const ConvSpec& s) { return k == 1 && s.stride == 1 && s.padding == 0; }

}  // namespace detail

/// 2-D convolution. `weight` is [Cout, Cin/groups, k, k]; `bias` may be null
/// or a [1, Cout, 1, 1] tensor.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, const ConvSpec& spec = {}) {
  const Shape& xs = x->value.shape();
  const Shape& ws = weight->value.shape();
  const Index k = ws.h;
  if (ws.h != ws.w) throw std::invalid_argument("conv2d: square kernels only");
  if (spec.groups < 1 || xs.c % spec.groups != 0 || ws.n % spec.groups != 0)
    throw std::invalid_argument("conv2d: channels not divisible by groups");
  const Index cg = xs.c / spec.groups;
  const Index og = ws.n / spec.groups;
  if (ws.c != cg)
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(ws.c * spec.groups) + " input channels, got " +
                                std::to_string(xs.c));
  if (bias && bias->value.size() != ws.n) throw std::invalid_argument("conv2d: bias size mismatch");
  const Index oh = detail::conv_out_extent(xs.h, k, spec);
  const Index ow = detail::conv_out_extent(xs.w, k, spec);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: input " + xs.str() + " too small for kernel");

  Tensor<Scalar> out(xs.n, ws.n, oh, ow);
  const Index kk = cg * k * k;
  Eigen::Map<const RowMatX<Scalar>> wmat(weight->value.data().data(), ws.n, kk);
  const bool pointwise = detail::is_pointwise(k, spec);
  RowMatX<Scalar> cols;
  for (Index n = 0; n < xs.n; ++n) {
    auto y = out.sample(n);
    for (Index g = 0; g < spec.groups; ++g) {
      const Scalar* src = x->value.sample_ptr(n) + g * cg * xs.plane();
      if (pointwise) {
        Eigen::Map<const RowMatX<Scalar>> in(src, cg, xs.plane());
        y.middleRows(g * og, og).noalias() = wmat.middleRows(g * og, og) * in;
      } else {
        detail::im2col(src, cg, xs.h, xs.w, k, spec, oh, ow, cols);
        y.middleRows(g * og, og).noalias() = wmat.middleRows(g * og, og) * cols;
      }
    }
    if (bias) y.colwise() += bias->value.data();
  }

  std::vector<Var<Scalar>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result<Scalar>(std::move(out), std::move(parents), [spec, k, cg, og, oh, ow, pointwise](Node<Scalar>& node) {
    auto& xin = node.parents[0];
    auto& wt = node.parents[1];
    const Shape& xs = xin->value.shape();
    const Index kk = cg * k * k;
    const Index cout = wt->value.shape().n;
    Eigen::Map<const RowMatX<Scalar>> wmat(wt->value.data().data(), cout, kk);
    RowMatX<Scalar> cols;
    RowMatX<Scalar> dcols;
    for (Index n = 0; n < xs.n; ++n) {
      auto dy = node.grad.sample(n);
      for (Index g = 0; g < spec.groups; ++g) {
        const Scalar* src = xin->value.sample_ptr(n) + g * cg * xs.plane();
        if (wt->requires_grad) {
          Eigen::Map<RowMatX<Scalar>> dw(wt->grad_buffer().data().data(), cout, kk);
          if (pointwise) {
            Eigen::Map<const RowMatX<Scalar>> in(src, cg, xs.plane());
            dw.middleRows(g * og, og).noalias() += dy.middleRows(g * og, og) * in.transpose();
          } else {
            detail::im2col(src, cg, xs.h, xs.w, k, spec, oh, ow, cols);
            dw.middleRows(g * og, og).noalias() += dy.middleRows(g * og, og) * cols.transpose();
          }
        }
        if (xin->requires_grad) {
          Scalar* dst = xin->grad_buffer().sample_ptr(n) + g * cg * xs.plane();
          if (pointwise) {
            Eigen::Map<RowMatX<Scalar>> dx(dst, cg, xs.plane());
            dx.noalias() += wmat.middleRows(g * og, og).transpose() * dy.middleRows(g * og, og);
          } else {
            dcols.noalias() = wmat.middleRows(g * og, og).transpose() * dy.middleRows(g * og, og);
            detail::col2im_add(dcols, cg, xs.h, xs.w, k, spec, oh, ow, dst);
          }
        }
      }
      if (node.parents.size() > 2 && node.parents[2]->requires_grad)
        node.parents[2]->grad_buffer().data() += dy.rowwise().sum();
    }
  });
}

/// Batch normalization over (N, H, W) per channel. Running statistics are
/// updated in place when `training` is set (unbiased variance, PyTorch-style).
template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, bool training, Scalar momentum,
                       Scalar eps) {
  const Shape& xs = x->value.shape();
  const Index C = xs.c;
  if (gamma->value.size() != C || beta->value.size() != C) throw std::invalid_argument("batch_norm: affine size mismatch");
  const Index count = xs.n * xs.plane();
  VecX<Scalar> mean(C), invstd(C);
  if (training) {
    if (count < 2)
      throw std::invalid_argument("batch_norm: training needs more than one value per channel, got input " + xs.str());
    for (Index c = 0; c < C; ++c) {
      Scalar s = 0;
      for (Index n = 0; n < xs.n; ++n) s += x->value.sample(n).row(c).sum();
      const Scalar m = s / Scalar(count);
      Scalar sq = 0;
      for (Index n = 0; n < xs.n; ++n) sq += (x->value.sample(n).row(c).array() - m).square().sum();
      const Scalar var = sq / Scalar(count);
      mean[c] = m;
      invstd[c] = Scalar(1) / std::sqrt(var + eps);
      running_mean.data()[c] = (Scalar(1) - momentum) * running_mean.data()[c] + momentum * m;
      running_var.data()[c] =
          (Scalar(1) - momentum) * running_var.data()[c] + momentum * sq / Scalar(count - 1);
    }
  } else {
    mean = running_mean.data();
    invstd = (running_var.data().array() + eps).rsqrt().matrix();
  }
  Tensor<Scalar> out(xs);
  const auto& gm = gamma->value.data();
  const auto& bt = beta->value.data();
  for (Index n = 0; n < xs.n; ++n) {
    auto y = out.sample(n);
    auto in = x->value.sample(n);
    for (Index c = 0; c < C; ++c)
      y.row(c) = ((in.row(c).array() - mean[c]) * (invstd[c] * gm[c]) + bt[c]).matrix();
  }
  return make_result<Scalar>(std::move(out), {x, gamma, beta}, [mean, invstd, training, count](Node<Scalar>& node) {
    auto& xin = node.parents[0];
    auto& gma = node.parents[1];
    auto& bta = node.parents[2];
    const Shape& xs = xin->value.shape();
    const Index C = xs.c;
    VecX<Scalar> sum_dy = VecX<Scalar>::Zero(C);
    VecX<Scalar> sum_dy_xhat = VecX<Scalar>::Zero(C);
    for (Index n = 0; n < xs.n; ++n) {
      auto dy = node.grad.sample(n);
      auto in = xin->value.sample(n);
      for (Index c = 0; c < C; ++c) {
        sum_dy[c] += dy.row(c).sum();
        sum_dy_xhat[c] += (dy.row(c).array() * (in.row(c).array() - mean[c])).sum() * invstd[c];
      }
    }
    if (gma->requires_grad) gma->grad_buffer().data() += sum_dy_xhat;
    if (bta->requires_grad) bta->grad_buffer().data() += sum_dy;
    if (!xin->requires_grad) return;
    const auto& gm = gma->value.data();
    auto& dx = xin->grad_buffer();
    for (Index n = 0; n < xs.n; ++n) {
      auto dy = node.grad.sample(n);
      auto in = xin->value.sample(n);
      auto d = dx.sample(n);
      for (Index c = 0; c < C; ++c) {
        const Scalar scale = gm[c] * invstd[c];
        if (training) {
          const Scalar mdy = sum_dy[c] / Scalar(count);
          const Scalar mdyx = sum_dy_xhat[c] / Scalar(count);
          d.row(c).array() +=
              scale * (dy.row(c).array() - mdy - (in.row(c).array() - mean[c]) * invstd[c] * mdyx);
        } else {
          d.row(c).array() += scale * dy.row(c).array();
        }
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Tensor<Scalar> out(x->value.shape(), x->value.data().cwiseMax(Scalar(0)));
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& node) {
    auto& xin = node.parents[0];
    xin->grad_buffer().data().array() +=
        (xin->value.data().array() > Scalar(0)).select(node.grad.data().array(), Scalar(0));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Tensor<Scalar> out(x->value.shape(), (Scalar(1) / (Scalar(1) + (-x->value.data().array()).exp())).matrix());
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& node) {
    const auto y = node.value.data().array();
    node.parents[0]->grad_buffer().data().array() += node.grad.data().array() * y * (Scalar(1) - y);
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "add");
  Tensor<Scalar> out(a->value.shape(), a->value.data() + b->value.data());
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& node) {
    for (auto& p : node.parents)
      if (p->requires_grad) p->grad_buffer().data() += node.grad.data();
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "mul");
  Tensor<Scalar> out(a->value.shape(), a->value.data().cwiseProduct(b->value.data()));
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& node) {
    auto& pa = node.parents[0];
    auto& pb = node.parents[1];
    if (pa->requires_grad) pa->grad_buffer().data() += node.grad.data().cwiseProduct(pb->value.data());
    if (pb->requires_grad) pb->grad_buffer().data() += node.grad.data().cwiseProduct(pa->value.data());
  });
}

/// out[n, c, :, :] = x[n, c, :, :] * gate[n, c]; gate is [N, C, 1, 1].
template <typename Scalar>
Var<Scalar> scale_channels(const Var<Scalar>& x, const Var<Scalar>& gate) {
  const Shape& xs = x->value.shape();
  const Shape& gs = gate->value.shape();
  if (gs.n != xs.n || gs.c != xs.c || gs.plane() != 1)
    throw std::invalid_argument("scale_channels: gate " + gs.str() + " does not match input " + xs.str());
  Tensor<Scalar> out(xs);
  for (Index n = 0; n < xs.n; ++n)
    out.sample(n) = gate->value.sample(n).col(0).asDiagonal() * x->value.sample(n);
  return make_result<Scalar>(std::move(out), {x, gate}, [](Node<Scalar>& node) {
    auto& px = node.parents[0];
    auto& pg = node.parents[1];
    const Shape& xs = px->value.shape();
    for (Index n = 0; n < xs.n; ++n) {
      auto dy = node.grad.sample(n);
      if (px->requires_grad) px->grad_buffer().sample(n) += pg->value.sample(n).col(0).asDiagonal() * dy;
      if (pg->requires_grad)
        pg->grad_buffer().sample(n).col(0) += dy.cwiseProduct(px->value.sample(n)).rowwise().sum();
    }
  });
}

/// Global average pooling to [N, C, 1, 1].
template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x) {
  const Shape& xs = x->value.shape();
  Tensor<Scalar> out(xs.n, xs.c, 1, 1);
  for (Index n = 0; n < xs.n; ++n) out.sample(n).col(0) = x->value.sample(n).rowwise().mean();
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& node) {
    auto& px = node.parents[0];
    const Shape& xs = px->value.shape();
    const Scalar inv = Scalar(1) / Scalar(xs.plane());
    auto& dx = px->grad_buffer();
    for (Index n = 0; n < xs.n; ++n) dx.sample(n).colwise() += node.grad.sample(n).col(0) * inv;
  });
}

/// Alternating stack of two [N, C, 1, 1] vectors: out[2k] = a[k], out[2k+1] = b[k].
template <typename Scalar>
Var<Scalar> interleave(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape& as = a->value.shape();
  const Shape& bs = b->value.shape();
  if (!(as == bs) || as.plane() != 1)
    throw std::invalid_argument("interleave: length mismatch " + as.str() + " vs " + bs.str());
  Tensor<Scalar> out(as.n, 2 * as.c, 1, 1);
  for (Index n = 0; n < as.n; ++n)
    for (Index k = 0; k < as.c; ++k) {
      out(n, 2 * k, 0, 0) = a->value(n, k, 0, 0);
      out(n, 2 * k + 1, 0, 0) = b->value(n, k, 0, 0);
    }
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& node) {
    auto& pa = node.parents[0];
    auto& pb = node.parents[1];
    const Shape& as = pa->value.shape();
    for (Index n = 0; n < as.n; ++n)
      for (Index k = 0; k < as.c; ++k) {
        if (pa->requires_grad) pa->grad_buffer()(n, k, 0, 0) += node.grad(n, 2 * k, 0, 0);
        if (pb->requires_grad) pb->grad_buffer()(n, k, 0, 0) += node.grad(n, 2 * k + 1, 0, 0);
      }
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape& s0 = xs.front()->value.shape();
  Index channels = 0;
  for (const auto& x : xs) {
    const Shape& s = x->value.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw std::invalid_argument("concat_channels: spatial mismatch " + s.str() + " vs " + s0.str());
    channels += s.c;
  }
  Tensor<Scalar> out(s0.n, channels, s0.h, s0.w);
  for (Index n = 0; n < s0.n; ++n) {
    Index offset = 0;
    for (const auto& x : xs) {
      out.sample(n).middleRows(offset, x->value.c()) = x->value.sample(n);
      offset += x->value.c();
    }
  }
  return make_result<Scalar>(std::move(out), xs, [](Node<Scalar>& node) {
    const Index batch = node.value.n();
    for (Index n = 0; n < batch; ++n) {
      Index offset = 0;
      for (auto& p : node.parents) {
        if (p->requires_grad) p->grad_buffer().sample(n) += node.grad.sample(n).middleRows(offset, p->value.c());
        offset += p->value.c();
      }
    }
  });
}

/// 2x2 max pooling, stride 2, ceil mode (odd extents keep their last row/column).
template <typename Scalar>
Var<Scalar> max_pool2(const Var<Scalar>& x) {
  const Shape& xs = x->value.shape();
  const Index oh = (xs.h + 1) / 2;
  const Index ow = (xs.w + 1) / 2;
  Tensor<Scalar> out(xs.n, xs.c, oh, ow);
  std::vector<Index> argmax(static_cast<std::size_t>(out.size()));
  Index o = 0;
  for (Index n = 0; n < xs.n; ++n)
    for (Index c = 0; c < xs.c; ++c) {
      const Scalar* plane = x->value.sample_ptr(n) + c * xs.plane();
      const Index base = (n * xs.c + c) * xs.plane();
      for (Index oy = 0; oy < oh; ++oy)
        for (Index ox = 0; ox < ow; ++ox, ++o) {
          Index best = (2 * oy) * xs.w + 2 * ox;
          for (Index dy = 0; dy < 2; ++dy)
            for (Index dx = 0; dx < 2; ++dx) {
              const Index iy = 2 * oy + dy;
              const Index ix = 2 * ox + dx;
              if (iy < xs.h && ix < xs.w && plane[iy * xs.w + ix] > plane[best]) best = iy * xs.w + ix;
            }
          out.data()[o] = plane[best];
          argmax[static_cast<std::size_t>(o)] = base + best;
        }
    }
  return make_result<Scalar>(std::move(out), {x}, [argmax = std::move(argmax)](Node<Scalar>& node) {
    auto& dx = node.parents[0]->grad_buffer().data();
    const auto& dy = node.grad.data();
    for (Index i = 0; i < dy.size(); ++i) dx[argmax[static_cast<std::size_t>(i)]] += dy[i];
  });
}

namespace detail {
struct LerpTable {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

// Half-pixel-centre sampling (align_corners = false).
inline LerpTable lerp_table(Index in, Index out) {
  LerpTable t;
  t.lo.resize(static_cast<std::size_t>(out));
  t.hi.resize(static_cast<std::size_t>(out));
  t.frac.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    Index lo = static_cast<Index>(src);
    if (lo > in - 1) lo = in - 1;
    const Index hi = std::min<Index>(lo + 1, in - 1);
    auto u = static_cast<std::size_t>(i);
    t.lo[u] = lo;
    t.hi[u] = hi;
    t.frac[u] = src - static_cast<double>(lo);
  }
  return t;
}
}  // namespace detail

/// Bilinear resize of every channel to (out_h, out_w).
template <typename Scalar>
Var<Scalar> upsample_bilinear(const Var<Scalar>& x, Index out_h, Index out_w) {
  const Shape& xs = x->value.shape();
  if (xs.h == out_h && xs.w == out_w) return x;
  const auto ty = detail::lerp_table(xs.h, out_h);
  const auto tx = detail::lerp_table(xs.w, out_w);
  Tensor<Scalar> out(xs.n, xs.c, out_h, out_w);
  for (Index n = 0; n < xs.n; ++n)
    for (Index c = 0; c < xs.c; ++c) {
      const Scalar* in = x->value.sample_ptr(n) + c * xs.plane();
      Scalar* dst = out.sample_ptr(n) + c * out_h * out_w;
      for (Index oy = 0; oy < out_h; ++oy) {
        const auto uy = static_cast<std::size_t>(oy);
        const Scalar fy = static_cast<Scalar>(ty.frac[uy]);
        const Scalar* r0 = in + ty.lo[uy] * xs.w;
        const Scalar* r1 = in + ty.hi[uy] * xs.w;
        for (Index ox = 0; ox < out_w; ++ox) {
          const auto ux = static_cast<std::size_t>(ox);
          const Scalar fx = static_cast<Scalar>(tx.frac[ux]);
          const Scalar top = r0[tx.lo[ux]] * (Scalar(1) - fx) + r0[tx.hi[ux]] * fx;
          const Scalar bot = r1[tx.lo[ux]] * (Scalar(1) - fx) + r1[tx.hi[ux]] * fx;
          dst[oy * out_w + ox] = top * (Scalar(1) - fy) + bot * fy;
        }
      }
    }
  return make_result<Scalar>(std::move(out), {x}, [ty, tx, out_h, out_w](Node<Scalar>& node) {
    auto& px = node.parents[0];
    const Shape& xs = px->value.shape();
    auto& dxt = px->grad_buffer();
    for (Index n = 0; n < xs.n; ++n)
      for (Index c = 0; c < xs.c; ++c) {
        Scalar* dx = dxt.sample_ptr(n) + c * xs.plane();
        const Scalar* dy = node.grad.sample_ptr(n) + c * out_h * out_w;
        for (Index oy = 0; oy < out_h; ++oy) {
          const auto uy = static_cast<std::size_t>(oy);
          const Scalar fy = static_cast<Scalar>(ty.frac[uy]);
          Scalar* r0 = dx + ty.lo[uy] * xs.w;
          Scalar* r1 = dx + ty.hi[uy] * xs.w;
          for (Index ox = 0; ox < out_w; ++ox) {
            const auto ux = static_cast<std::size_t>(ox);
            const Scalar fx = static_cast<Scalar>(tx.frac[ux]);
            const Scalar g = dy[oy * out_w + ox];
            r0[tx.lo[ux]] += g * (Scalar(1) - fy) * (Scalar(1) - fx);
            r0[tx.hi[ux]] += g * (Scalar(1) - fy) * fx;
            r1[tx.lo[ux]] += g * fy * (Scalar(1) - fx);
            r1[tx.hi[ux]] += g * fy * fx;
          }
        }
      }
  });
}

/// Mean binary cross-entropy of sigmoid(logits) against a {0,1} target,
/// evaluated in the overflow-free form max(z,0) - z*g + log(1 + exp(-|z|)).
/// Returns a [1, 1, 1, 1] scalar.
template <typename Scalar>
Var<Scalar> bce_with_logits(const Var<Scalar>& logits, const Tensor<Scalar>& target) {
  require_same_shape(logits->value.shape(), target.shape(), "bce_with_logits");
  const auto z = logits->value.data().array();
  const auto g = target.data().array();
  const Scalar total = (z.max(Scalar(0)) - z * g + (Scalar(1) + (-z.abs()).exp()).log()).sum();
  Tensor<Scalar> out(1, 1, 1, 1);
  out.data()[0] = total / Scalar(z.size());
  return make_result<Scalar>(std::move(out), {logits}, [target](Node<Scalar>& node) {
    auto& pz = node.parents[0];
    const auto zz = pz->value.data().array();
    const Scalar scale = node.grad.data()[0] / Scalar(zz.size());
    const auto p = Scalar(1) / (Scalar(1) + (-zz).exp());
    pz->grad_buffer().data().array() += (p - target.data().array()) * scale;
  });
}

/// Sum of [1,1,1,1] scalars.
template <typename Scalar>
Var<Scalar> sum_scalars(const std::vector<Var<Scalar>>& terms) {
  if (terms.empty()) throw std::invalid_argument("sum_scalars: no terms");
  Tensor<Scalar> out(1, 1, 1, 1);
  for (const auto& t : terms) out.data()[0] += t->value.data()[0];
  return make_result<Scalar>(std::move(out), terms, [](Node<Scalar>& node) {
    for (auto& p : node.parents)
      if (p->requires_grad) p->grad_buffer().data()[0] += node.grad.data()[0];
  });
}

}  // namespace lgnet
