#include <algorithm>
#include <memory>

#include "ddmnet/errors.hpp"
#include "ddmnet/tensor.hpp"

namespace ddmnet {

namespace {

struct Conv2dGeometry {
  std::size_t batch, cin, h, w, cout, kh, kw, dilation, pad_h, pad_w, oh, ow;
};

std::size_t out_extent(std::size_t in, std::size_t kernel, std::size_t dilation,
                       std::size_t padding, const Shape& xs, const Shape& ks) {
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (in + 2 * padding < span) {
    throw DimensionError("kernel " + shape_str(ks) + " (dilation " + std::to_string(dilation) +
                         ") larger than padded input " + shape_str(xs));
  }
  return in + 2 * padding - span + 1;
}

// Valid output range [lo, hi) along one axis for kernel tap `tap`.
inline void tap_range(std::size_t tap, std::size_t dilation, std::size_t padding, std::size_t in,
                      std::size_t out, std::size_t& lo, std::size_t& hi) {
  const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(tap * dilation) - static_cast<std::ptrdiff_t>(padding);
  const std::ptrdiff_t l = std::max<std::ptrdiff_t>(0, -shift);
  const std::ptrdiff_t h = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out),
                                                    static_cast<std::ptrdiff_t>(in) - shift);
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(std::max(l, h));
}

// Flat offset of input (oy + ky*d - pad_h, kx*d - pad_w); the column part
// may be negative because valid output columns start past it.
inline std::ptrdiff_t input_offset(const Conv2dGeometry& g, std::size_t oy, std::size_t ky, std::size_t kx) {
  const auto iy = static_cast<std::ptrdiff_t>(oy + ky * g.dilation) - static_cast<std::ptrdiff_t>(g.pad_h);
  return iy * static_cast<std::ptrdiff_t>(g.w) + static_cast<std::ptrdiff_t>(kx * g.dilation) -
         static_cast<std::ptrdiff_t>(g.pad_w);
}

// Column matrix [C*KH*KW, N*OH*OW]: row r = (ci, ky, kx), column = (n, oy, ox).
// Out-of-image taps stay zero.
std::vector<double> im2col(const double* x, const Conv2dGeometry& g) {
  const std::size_t taps = g.kh * g.kw;
  const std::size_t plane_out = g.oh * g.ow;
  const std::size_t cols = g.batch * plane_out;
  std::vector<double> col(g.cin * taps * cols, 0.0);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      std::size_t y0, y1;
      tap_range(ky, g.dilation, g.pad_h, g.h, g.oh, y0, y1);
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        std::size_t x0, x1;
        tap_range(kx, g.dilation, g.pad_w, g.w, g.ow, x0, x1);
        double* row = col.data() + ((ci * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const double* plane = x + (n * g.cin + ci) * g.h * g.w;
          double* dst = row + n * plane_out;
          for (std::size_t oy = y0; oy < y1; ++oy) {
            const double* src = plane + input_offset(g, oy, ky, kx);
            for (std::size_t ox = x0; ox < x1; ++ox) dst[oy * g.ow + ox] = src[ox];
          }
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: scatters column gradients back onto the input.
void col2im_acc(const double* col, const Conv2dGeometry& g, double* gx) {
  const std::size_t plane_out = g.oh * g.ow;
  const std::size_t cols = g.batch * plane_out;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      std::size_t y0, y1;
      tap_range(ky, g.dilation, g.pad_h, g.h, g.oh, y0, y1);
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        std::size_t x0, x1;
        tap_range(kx, g.dilation, g.pad_w, g.w, g.ow, x0, x1);
        const double* row = col + ((ci * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t n = 0; n < g.batch; ++n) {
          double* plane = gx + (n * g.cin + ci) * g.h * g.w;
          const double* src = row + n * plane_out;
          for (std::size_t oy = y0; oy < y1; ++oy) {
            double* dst = plane + input_offset(g, oy, ky, kx);
            for (std::size_t ox = x0; ox < x1; ++ox) dst[ox] += src[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// Every output element sums its taps in the same (ci, ky, kx) order no
// matter how many frames share the batch, so per-frame results do not
// depend on batch composition.
Tensor conv2d_impl(const Tensor& x, const Tensor& kernel, const Tensor& bias, const Conv2dGeometry& g,
                   Shape out_shape) {
  const std::size_t rows = g.cin * g.kh * g.kw;
  const std::size_t plane_out = g.oh * g.ow;
  const std::size_t cols = g.batch * plane_out;
  auto col = std::make_shared<std::vector<double>>(im2col(x.values().data(), g));
  auto kv = kernel.values();
  std::vector<double> prod(g.cout * cols, 0.0);  // [Cout, N*P]
  for (std::size_t co = 0; co < g.cout; ++co) {
    double* dst = prod.data() + co * cols;
    if (bias.defined()) std::fill_n(dst, cols, bias.values()[co]);
    for (std::size_t r = 0; r < rows; ++r) {
      const double w = kv[co * rows + r];
      const double* src = col->data() + r * cols;
      for (std::size_t j = 0; j < cols; ++j) dst[j] += w * src[j];
    }
  }
  std::vector<double> out(g.batch * g.cout * plane_out);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      std::copy_n(prod.data() + co * cols + n * plane_out, plane_out, out.data() + (n * g.cout + co) * plane_out);
    }
  }
  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(std::move(out_shape), std::move(out), inputs, [x, kernel, bias, g, col](std::span<const double> gout) {
    const std::size_t rows = g.cin * g.kh * g.kw;
    const std::size_t plane_out = g.oh * g.ow;
    const std::size_t cols = g.batch * plane_out;
    auto gx = grad_sink(x);
    auto gk = grad_sink(kernel);
    auto gb = bias.defined() ? grad_sink(bias) : std::span<double>{};
    std::vector<double> gmat(g.cout * cols);  // gout as [Cout, N*P]
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        std::copy_n(gout.data() + (n * g.cout + co) * plane_out, plane_out, gmat.data() + co * cols + n * plane_out);
      }
    }
    if (!gb.empty()) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += gmat[co * cols + j];
        gb[co] += acc;
      }
    }
    if (!gk.empty()) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        for (std::size_t r = 0; r < rows; ++r) gk[co * rows + r] += dot(gmat.data() + co * cols, col->data() + r * cols, cols);
      }
    }
    if (!gx.empty()) {
      auto kv = kernel.values();
      std::vector<double> gcol(rows * cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        double* dst = gcol.data() + r * cols;
        for (std::size_t co = 0; co < g.cout; ++co) {
          const double w = kv[co * rows + r];
          if (w == 0.0) continue;
          const double* src = gmat.data() + co * cols;
          for (std::size_t j = 0; j < cols; ++j) dst[j] += w * src[j];
        }
      }
      col2im_acc(gcol.data(), g, gx.data());
    }
  });
}

}  // namespace

std::size_t same_padding(std::size_t kernel, std::size_t dilation) {
  if (kernel % 2 == 0) throw ConfigError("same padding needs an odd kernel");
  return dilation * (kernel - 1) / 2;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t dilation,
              std::size_t padding) {
  const Shape& ks = kernel.shape();
  if (x.rank() == 3) {
    const Shape& s = x.shape();
    Tensor y = conv2d(reshape(x, {1, s[0], s[1], s[2]}), kernel, bias, dilation, padding);
    const Shape& ys = y.shape();
    return reshape(y, {ys[1], ys[2], ys[3]});
  }
  if (x.rank() != 4 || ks.size() != 4) {
    throw DimensionError("conv2d expects [N,C,H,W] input and [O,C,KH,KW] kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(ks));
  }
  const Shape& xs = x.shape();
  if (xs[1] != ks[1]) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(xs) + ", kernel " + shape_str(ks));
  }
  if (bias.defined() && bias.numel() != ks[0]) {
    throw DimensionError("conv2d bias " + shape_str(bias.shape()) + " for kernel " + shape_str(ks));
  }
  if (dilation == 0) throw ConfigError("conv2d dilation must be >= 1");
  Conv2dGeometry g{xs[0], xs[1], xs[2], xs[3], ks[0], ks[2], ks[3], dilation, padding, padding, 0, 0};
  g.oh = out_extent(g.h, g.kh, dilation, padding, xs, ks);
  g.ow = out_extent(g.w, g.kw, dilation, padding, xs, ks);
  return conv2d_impl(x, kernel, bias, g, {g.batch, g.cout, g.oh, g.ow});
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t dilation,
              std::size_t padding) {
  const Shape& ks = kernel.shape();
  if (ks.size() != 3) throw DimensionError("conv1d kernel must be [O,C,K], got " + shape_str(ks));
  if (x.rank() == 2) {
    const Shape& s = x.shape();
    Tensor y = conv1d(reshape(x, {1, s[0], s[1]}), kernel, bias, dilation, padding);
    return reshape(y, {y.shape()[1], y.shape()[2]});
  }
  if (x.rank() != 3) throw DimensionError("conv1d expects [C,T] or [N,C,T], got " + shape_str(x.shape()));
  const Shape& xs = x.shape();
  if (xs[1] != ks[1]) {
    throw DimensionError("conv1d channel mismatch: input " + shape_str(xs) + ", kernel " + shape_str(ks));
  }
  if (bias.defined() && bias.numel() != ks[0]) {
    throw DimensionError("conv1d bias " + shape_str(bias.shape()) + " for kernel " + shape_str(ks));
  }
  if (dilation == 0) throw ConfigError("conv1d dilation must be >= 1");
  // The H=1 case of the 2-D kernel, padded along time only.
  Conv2dGeometry g{xs[0], xs[1], 1, xs[2], ks[0], 1, ks[2], dilation, 0, padding, 1, 0};
  g.ow = out_extent(g.w, g.kw, dilation, padding, xs, ks);
  Tensor y = conv2d_impl(reshape(x, {xs[0], xs[1], 1, xs[2]}), reshape(kernel, {ks[0], ks[1], 1, ks[2]}),
                         bias, g, {g.batch, g.cout, 1, g.ow});
  return reshape(y, {xs[0], ks[0], g.ow});
}

Tensor avg_pool2x2(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("avg_pool2x2 needs rank >= 2, got " + shape_str(x.shape()));
  const Shape& s = x.shape();
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s[s.size() - 1];
  if (h < 2 || w < 2) throw DimensionError("avg_pool2x2 on spatial extent smaller than 2: " + shape_str(s));
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  const std::size_t planes = x.numel() / (h * w);
  Shape out_shape = s;
  out_shape[s.size() - 2] = oh;
  out_shape[s.size() - 1] = ow;
  auto xv = x.values();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* ip = xv.data() + p * h * w;
    double* op = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const double* a = ip + 2 * y * w + 2 * xx;
        op[y * ow + xx] = 0.25 * (a[0] + a[1] + a[w] + a[w + 1]);
      }
    }
  }
  return make_op(std::move(out_shape), std::move(out), {x},
                 [x, planes, h, w, oh, ow](std::span<const double> g) {
                   auto gx = grad_sink(x);
                   for (std::size_t p = 0; p < planes; ++p) {
                     double* gp = gx.data() + p * h * w;
                     const double* go = g.data() + p * oh * ow;
                     for (std::size_t y = 0; y < oh; ++y) {
                       for (std::size_t xx = 0; xx < ow; ++xx) {
                         const double v = 0.25 * go[y * ow + xx];
                         double* a = gp + 2 * y * w + 2 * xx;
                         a[0] += v;
                         a[1] += v;
                         a[w] += v;
                         a[w + 1] += v;
                       }
                     }
                   }
                 });
}

}  // namespace ddmnet
