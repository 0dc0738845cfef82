#pragma once

// Stationary Gaussian fields on the periodic lattice by spectral synthesis,
// and the log-normal coefficient a = exp(G) with optional truncation a_M.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "loghom/covariance.hpp"
#include "loghom/fft.hpp"
#include "loghom/lattice.hpp"
#include "loghom/rng.hpp"

namespace loghom {

struct SamplingOptions {
  double psd_tol = 1e-8;
  int images = 3;  // periodization reaches this many periods in each direction
};

/// Covariance wrapped over lattice images, evaluated at every site offset.
inline std::vector<double> periodized_covariance(const LatticeGrid& g, const CovarianceSpec& spec,
                                                 int images = 3) {
  const double h = g.spacing();
  const double L = g.side_length;
  std::vector<double> c(g.sites(), 0.0);
  const int i1 = g.dim >= 2 ? images : 0;
  const int i2 = g.dim >= 3 ? images : 0;
  for (std::size_t s = 0; s < g.sites(); ++s) {
    const Coord x = g.coords(s);
    double acc = 0.0;
    for (int m0 = -images; m0 <= images; ++m0) {
      const double d0 = g.min_image(x[0]) * h + m0 * L;
      for (int m1 = -i1; m1 <= i1; ++m1) {
        const double d1 = g.dim >= 2 ? g.min_image(x[1]) * h + m1 * L : 0.0;
        for (int m2 = -i2; m2 <= i2; ++m2) {
          const double d2 = g.dim >= 3 ? g.min_image(x[2]) * h + m2 * L : 0.0;
          acc += covariance_at_distance(spec, std::sqrt(d0 * d0 + d1 * d1 + d2 * d2));
        }
      }
    }
    c[s] = acc;
  }
  return c;
}

/// Eigenvalues of the periodized covariance (its DFT), one per mode in site order.
inline std::vector<double> covariance_eigenvalues(const LatticeGrid& g, const CovarianceSpec& spec,
                                                  int images = 3) {
  const std::vector<double> c = periodized_covariance(g, spec, images);
  std::vector<Complex> buf(c.begin(), c.end());
  cfft_backward(g, buf);
  std::vector<double> lambda(g.sites());
  for (std::size_t k = 0; k < lambda.size(); ++k) lambda[k] = buf[k].real();
  return lambda;
}

namespace detail {

/// sqrt(max(lambda, 0) / N) per mode; throws SpectrumNotPSD past the tolerance.
inline std::vector<double> sqrt_spectrum(const LatticeGrid& g, const CovarianceSpec& spec,
                                         const SamplingOptions& opt) {
  std::vector<double> lambda = covariance_eigenvalues(g, spec, opt.images);
  const double lmax = *std::max_element(lambda.begin(), lambda.end());
  const auto worst = std::min_element(lambda.begin(), lambda.end());
  if (*worst < -opt.psd_tol * lmax) {
    throw SpectrumNotPSD(static_cast<std::size_t>(worst - lambda.begin()), *worst, lmax);
  }
  const double inv_n = 1.0 / static_cast<double>(g.sites());
  for (double& l : lambda) l = std::sqrt(std::max(l, 0.0) * inv_n);
  return lambda;
}

class SpectrumCache {
 public:
  static SpectrumCache& instance() {
    static SpectrumCache c;
    return c;
  }

  std::shared_ptr<const std::vector<double>> get(const LatticeGrid& g, const CovarianceSpec& spec,
                                                 const SamplingOptions& opt) {
    std::ostringstream key;
    key.precision(17);
    key << g.dim << ':' << g.n_per_side << ':' << g.side_length << ':' << static_cast<int>(spec.family)
        << ':' << spec.amplitude << ':' << spec.corr_length << ':' << opt.psd_tol << ':' << opt.images;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (auto it = cache_.find(key.str()); it != cache_.end()) return it->second;
    }
    auto spectrum = std::make_shared<const std::vector<double>>(sqrt_spectrum(g, spec, opt));
    std::lock_guard<std::mutex> lock(mutex_);
    if (cache_.size() > 32) cache_.clear();
    return cache_.emplace(key.str(), spectrum).first->second;
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const std::vector<double>>> cache_;
};

}  // namespace detail

/// Draw G from the stationary Gaussian measure on the torus whose covariance
/// is the periodization of `spec`. Bit-identical for identical inputs.
inline LatticeField sample_gaussian_field(const LatticeGrid& grid, const CovarianceSpec& spec, RngKey key,
                                          const SamplingOptions& opt = {}) {
  grid.validate();
  spec.validate();
  const auto spectrum = detail::SpectrumCache::instance().get(grid, spec, opt);
  CounterRng rng(key);
  std::vector<Complex> buf(grid.sites());
  for (std::size_t k = 0; k < buf.size(); ++k) {
    const double re = rng.normal();
    const double im = rng.normal();
    buf[k] = (*spectrum)[k] * Complex(re, im);
  }
  cfft_backward(grid, buf);
  LatticeField G(grid, 1);
  for (std::size_t s = 0; s < buf.size(); ++s) G.values[s] = buf[s].real();
  G.meta.seed = key.fingerprint();
  G.meta.method = "spectral";
  return G;
}

inline LatticeField exp_field(const LatticeField& G) {
  require(G.components == 1, ErrorKind::InvalidArgument, "exp_field expects a scalar field");
  LatticeField a = G;
  for (double& v : a.values) v = std::exp(v);
  a.meta.method = G.meta.method + "+exp";
  return a;
}

/// a_M = (a min M) max 1/M.
inline LatticeField truncate_coefficient(const LatticeField& a, double M) {
  require(M >= 1.0 && std::isfinite(M), ErrorKind::BadTruncation, "truncation level must satisfy M >= 1");
  LatticeField out = a;
  const double lo = 1.0 / M;
  for (double& v : out.values) v = std::clamp(v, lo, M);
  out.meta.method = a.meta.method + "+trunc";
  return out;
}

/// Fraction of sites that truncation at level M would modify.
inline double clamped_fraction(const LatticeField& a, double M) {
  std::size_t n = 0;
  for (double v : a.values) n += (v > M || v < 1.0 / M) ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(a.values.size());
}

/// Convenience: sample G and return a = exp(G).
inline LatticeField sample_coefficient(const LatticeGrid& grid, const CovarianceSpec& spec, RngKey key,
                                       const SamplingOptions& opt = {}) {
  return exp_field(sample_gaussian_field(grid, spec, key, opt));
}

}  // namespace loghom
