#include <cmath>

#include "ddmnet/errors.hpp"
#include "ddmnet/tensor.hpp"
#include "tensor_internal.hpp"

namespace ddmnet {

namespace {

void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2 || as[as.size() - 1] != bs[bs.size() - 2]) {
    throw DimensionError("matmul shape mismatch: " + shape_str(as) + " x " + shape_str(bs));
  }
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as[as.size() - 1];
  const std::size_t n = bs[bs.size() - 1];
  const Shape a_batch(as.begin(), as.end() - 2);
  const Shape b_batch(bs.begin(), bs.end() - 2);
  Shape batch;
  try {
    batch = detail::broadcast_shapes(a_batch, b_batch);
  } catch (const DimensionError&) {
    throw DimensionError("matmul batch mismatch: " + shape_str(as) + " x " + shape_str(bs));
  }
  const auto ia = detail::broadcast_index(a_batch, batch);
  const auto ib = detail::broadcast_index(b_batch, batch);
  const std::size_t nb = ia.size();

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(nb * m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t t = 0; t < nb; ++t) {
    gemm_acc(av.data() + ia[t] * m * k, bv.data() + ib[t] * k * n, out.data() + t * m * n, m, k, n);
  }
  return make_op(std::move(out_shape), std::move(out), {a, b},
                 [a, b, ia, ib, m, k, n](std::span<const double> g) {
                   auto av = a.values();
                   auto bv = b.values();
                   auto ga = grad_sink(a);
                   auto gb = grad_sink(b);
                   for (std::size_t t = 0; t < ia.size(); ++t) {
                     const double* gt = g.data() + t * m * n;
                     const double* at = av.data() + ia[t] * m * k;
                     const double* bt = bv.data() + ib[t] * k * n;
                     if (!ga.empty()) {
                       double* gat = ga.data() + ia[t] * m * k;
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t p = 0; p < k; ++p) {
                           double acc = 0.0;
                           for (std::size_t j = 0; j < n; ++j) acc += gt[i * n + j] * bt[p * n + j];
                           gat[i * k + p] += acc;
                         }
                       }
                     }
                     if (!gb.empty()) {
                       double* gbt = gb.data() + ib[t] * k * n;
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t p = 0; p < k; ++p) {
                           const double aval = at[i * k + p];
                           if (aval == 0.0) continue;
                           for (std::size_t j = 0; j < n; ++j) gbt[p * n + j] += aval * gt[i * n + j];
                         }
                       }
                     }
                   }
                 });
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank());
  const auto v = detail::axis_view(x.shape(), ax);
  auto xv = x.values();
  for (double e : xv) {
    if (!std::isfinite(e)) throw NumericError("softmax input is not finite");
  }
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double peak = xv[base];
      for (std::size_t e = 1; e < v.extent; ++e) peak = std::max(peak, xv[base + e * v.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) {
        const double ex = std::exp(xv[base + e * v.inner] - peak);
        out[base + e * v.inner] = ex;
        total += ex;
      }
      for (std::size_t e = 0; e < v.extent; ++e) out[base + e * v.inner] /= total;
    }
  }
  std::vector<double> saved = out;
  return make_op(x.shape(), std::move(out), {x},
                 [x, v, y = std::move(saved)](std::span<const double> g) {
                   auto gx = grad_sink(x);
                   for (std::size_t o = 0; o < v.outer; ++o) {
                     for (std::size_t i = 0; i < v.inner; ++i) {
                       const std::size_t base = o * v.extent * v.inner + i;
                       double dot = 0.0;
                       for (std::size_t e = 0; e < v.extent; ++e) {
                         dot += g[base + e * v.inner] * y[base + e * v.inner];
                       }
                       for (std::size_t e = 0; e < v.extent; ++e) {
                         const std::size_t k = base + e * v.inner;
                         gx[k] += y[k] * (g[k] - dot);
                       }
                     }
                   }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm eps must be positive");
  const std::size_t d = x.dim(-1);
  if (d < 1) throw DimensionError("layer_norm over empty axis");
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " do not match " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<double> normalized(xv.size());
  std::vector<double> rstd(rows);
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (row[i] - mu) * rstd[r];
      normalized[r * d + i] = h;
      out[r * d + i] = h * gv[i] + bv[i];
    }
  }
  return make_op(x.shape(), std::move(out), {x, gain, bias},
                 [x, gain, bias, d, rows, xhat = std::move(normalized),
                  rstd = std::move(rstd)](std::span<const double> g) {
                   auto gv = gain.values();
                   auto gx = grad_sink(x);
                   auto gg = grad_sink(gain);
                   auto gb = grad_sink(bias);
                   std::vector<double> dh(d);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* grow = g.data() + r * d;
                     const double* hrow = xhat.data() + r * d;
                     double mean_dh = 0.0;
                     double mean_dh_h = 0.0;
                     for (std::size_t i = 0; i < d; ++i) {
                       dh[i] = grow[i] * gv[i];
                       mean_dh += dh[i];
                       mean_dh_h += dh[i] * hrow[i];
                       if (!gg.empty()) gg[i] += grow[i] * hrow[i];
                       if (!gb.empty()) gb[i] += grow[i];
                     }
                     if (gx.empty()) continue;
                     mean_dh /= static_cast<double>(d);
                     mean_dh_h /= static_cast<double>(d);
                     for (std::size_t i = 0; i < d; ++i) {
                       gx[r * d + i] += rstd[r] * (dh[i] - mean_dh - hrow[i] * mean_dh_h);
                     }
                   }
                 });
}

}  // namespace ddmnet
