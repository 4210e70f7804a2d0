#include "ddmnet/ddm.hpp"

#include <algorithm>
#include <cmath>

#include "ddmnet/errors.hpp"

namespace ddmnet::ddm {

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::Euclidean: return "euclidean";
    case Metric::Manhattan: return "manhattan";
    case Metric::Chebyshev: return "chebyshev";
    case Metric::Cosine: return "cosine";
  }
  return "?";
}

Metric metric_from_string(const std::string& name) {
  for (Metric m : {Metric::Euclidean, Metric::Manhattan, Metric::Chebyshev, Metric::Cosine}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown distance metric '" + name + "' (euclidean, manhattan, chebyshev, cosine)");
}

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double distance(const double* a, const double* b, std::size_t c, Metric metric) {
  switch (metric) {
    case Metric::Euclidean: {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = a[k] - b[k];
        s += d * d;
      }
      return std::sqrt(s);
    }
    case Metric::Manhattan: {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s += std::fabs(a[k] - b[k]);
      return s;
    }
    case Metric::Chebyshev: {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s = std::max(s, std::fabs(a[k] - b[k]));
      return s;
    }
    case Metric::Cosine: {
      double ab = 0.0, aa = 0.0, bb = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
      }
      if (aa == 0.0 && bb == 0.0) return 0.0;
      if (aa == 0.0 || bb == 0.0) return 1.0;
      if (std::equal(a, a + c, b)) return 0.0;
      return std::max(0.0, 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb)));
    }
  }
  return 0.0;
}

// Adds g * d(distance)/da into ga and g * d(distance)/db into gb.
void distance_grad(const double* a, const double* b, std::size_t c, Metric metric, double dist, double g,
                   double* ga, double* gb) {
  switch (metric) {
    case Metric::Euclidean: {
      if (dist == 0.0) return;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = g * (a[k] - b[k]) / dist;
        ga[k] += d;
        gb[k] -= d;
      }
      return;
    }
    case Metric::Manhattan: {
      for (std::size_t k = 0; k < c; ++k) {
        const double d = g * sign(a[k] - b[k]);
        ga[k] += d;
        gb[k] -= d;
      }
      return;
    }
    case Metric::Chebyshev: {
      if (dist == 0.0) return;
      for (std::size_t k = 0; k < c; ++k) {
        if (std::fabs(a[k] - b[k]) == dist) {
          const double d = g * sign(a[k] - b[k]);
          ga[k] += d;
          gb[k] -= d;
          return;
        }
      }
      return;
    }
    case Metric::Cosine: {
      double ab = 0.0, aa = 0.0, bb = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
      }
      if (aa == 0.0 || bb == 0.0 || std::equal(a, a + c, b)) return;
      const double na = std::sqrt(aa), nb = std::sqrt(bb);
      if (1.0 - ab / (na * nb) < 0.0) return;  // clamped
      const double inv = 1.0 / (na * nb);
      for (std::size_t k = 0; k < c; ++k) {
        ga[k] -= g * (b[k] * inv - ab * a[k] / (aa * na * nb));
        gb[k] -= g * (a[k] * inv - ab * b[k] / (bb * na * nb));
      }
      return;
    }
  }
}

}  // namespace

double frame_distance(std::span<const double> a, std::span<const double> b, Metric metric) {
  if (a.size() != b.size()) {
    throw DimensionError("frame_distance: vectors of length " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  return distance(a.data(), b.data(), a.size(), metric);
}

Tensor pairwise_distance_matrix(const Tensor& seq, Metric metric) {
  if (seq.rank() != 2 || seq.dim(1) == 0) {
    throw DimensionError("pairwise_distance_matrix expects [C,T] with T >= 1, got " + shape_str(seq.shape()));
  }
  const std::size_t c = seq.dim(0), t = seq.dim(1);
  // Frame-major copy so each frame vector is contiguous.
  auto frames = std::make_shared<std::vector<double>>(t * c);
  auto src = seq.values();
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < t; ++i) (*frames)[i * c + k] = src[k * t + i];
  }
  std::vector<double> out(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = i + 1; j < t; ++j) {
      const double d = distance(frames->data() + i * c, frames->data() + j * c, c, metric);
      out[i * t + j] = d;
      out[j * t + i] = d;
    }
  }
  auto dist = std::make_shared<std::vector<double>>(out);
  return make_op({t, t}, std::move(out), {seq}, [seq, frames, dist, c, t, metric](std::span<const double> g) {
    auto sink = grad_sink(seq);
    if (sink.empty()) return;
    std::vector<double> gf(t * c, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = i + 1; j < t; ++j) {
        const double gij = g[i * t + j] + g[j * t + i];
        if (gij == 0.0) continue;
        distance_grad(frames->data() + i * c, frames->data() + j * c, c, metric, (*dist)[i * t + j], gij,
                      gf.data() + i * c, gf.data() + j * c);
      }
    }
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t i = 0; i < t; ++i) sink[k * t + i] += gf[i * c + k];
    }
  });
}

Tensor build_raw_ddm(const bank::FeatureBank& bank, Metric metric) {
  std::vector<Tensor> maps;
  maps.reserve(bank.levels.size());
  for (const Tensor& level : bank.levels) {
    Tensor d = pairwise_distance_matrix(level, metric);
    maps.push_back(reshape(d, {1, d.dim(0), d.dim(1)}));
  }
  return concat(maps, 0);
}

double metric_scale(Metric metric, std::size_t channels) {
  if (channels == 0) throw DimensionError("metric scale needs at least one channel");
  switch (metric) {
    case Metric::Euclidean:
      return 1.0 / std::sqrt(static_cast<double>(channels));
    case Metric::Manhattan:
      return 1.0 / static_cast<double>(channels);
    case Metric::Chebyshev:
    case Metric::Cosine:
      return 1.0;
  }
  return 1.0;
}

Tensor normalize_raw_ddm(const Tensor& raw, const bank::FeatureBank& bank, Metric metric) {
  if (raw.rank() != 3 || raw.dim(0) != bank.levels.size()) {
    throw DimensionError("raw DDM " + shape_str(raw.shape()) + " does not match a bank of " +
                         std::to_string(bank.levels.size()) + " levels");
  }
  // Round-off can leave 1 - cos a hair below zero.
  if (metric == Metric::Cosine) return sqrt(scale(relu(raw), 2.0));
  const std::size_t levels = bank.levels.size();
  std::vector<double> factors(levels);
  for (std::size_t l = 0; l < levels; ++l) factors[l] = metric_scale(metric, bank.levels[l].dim(0));
  return mul(raw, Tensor::from({levels, 1, 1}, std::move(factors)));
}

DdmEmbedding::DdmEmbedding(std::size_t levels, std::size_t width, Rng& rng) {
  if (levels == 0 || width < 2) throw ConfigError("DDM embedding needs L >= 1 and C >= 2");
  const std::size_t hidden = width / 2;
  k1 = uniform_parameter({hidden, levels, 3, 3}, levels * 9, rng);
  b1 = constant_parameter({hidden}, 0.0);
  k2 = uniform_parameter({width, hidden, 3, 3}, hidden * 9, rng);
  b2 = constant_parameter({width}, 0.0);
}

Tensor DdmEmbedding::forward(const Tensor& raw) const {
  if (raw.rank() != 3 || raw.dim(0) != k1.dim(1)) {
    throw DimensionError("DDM embedding expects [" + std::to_string(k1.dim(1)) + ",T,T], got " +
                         shape_str(raw.shape()));
  }
  return conv2d(relu(conv2d(raw, k1, b1, 1, 1)), k2, b2, 1, 1);
}

void DdmEmbedding::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  out.push_back({prefix + "conv1.weight", k1});
  out.push_back({prefix + "conv1.bias", b1});
  out.push_back({prefix + "conv2.weight", k2});
  out.push_back({prefix + "conv2.bias", b2});
}

}  // namespace ddmnet::ddm
