#pragma once

// Thin wrapper over FFTW3 for periodic lattice fields. Plans are created once
// per shape (planner access is serialized) and executed on caller buffers
// through the new-array interface, which is thread-safe.

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <tuple>
#include <vector>

#include "loghom/lattice.hpp"

namespace loghom {

using Complex = std::complex<double>;

namespace detail {

enum class PlanKind { R2C, C2R, C2CBackward };

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(PlanKind kind, int dim, int n) {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto key = std::make_tuple(static_cast<int>(kind), dim, n);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    int dims[3] = {n, n, n};
    std::size_t total = 1;
    for (int j = 0; j < dim; ++j) total *= static_cast<std::size_t>(n);
    const std::size_t half = total / n * (n / 2 + 1);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    if (kind == PlanKind::R2C) {
      double* in = fftw_alloc_real(total);
      fftw_complex* out = fftw_alloc_complex(half);
      plan = fftw_plan_dft_r2c(dim, dims, in, out, flags);
      fftw_free(in);
      fftw_free(out);
    } else if (kind == PlanKind::C2R) {
      fftw_complex* in = fftw_alloc_complex(half);
      double* out = fftw_alloc_real(total);
      plan = fftw_plan_dft_c2r(dim, dims, in, out, flags);
      fftw_free(in);
      fftw_free(out);
    } else {
      fftw_complex* buf = fftw_alloc_complex(total);
      plan = fftw_plan_dft(dim, dims, buf, buf, FFTW_BACKWARD, flags);
      fftw_free(buf);
    }
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  PlanCache() = default;
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

}  // namespace detail

/// Number of complex coefficients in the half spectrum of a real field.
inline std::size_t half_spectrum_size(const LatticeGrid& g) {
  return g.sites() / g.n_per_side * static_cast<std::size_t>(g.n_per_side / 2 + 1);
}

/// Forward transform, unnormalized: F(k) = sum_x f(x) exp(-i k.x).
inline std::vector<Complex> rfft(const LatticeGrid& g, std::span<const double> f) {
  std::vector<double> in(f.begin(), f.end());
  std::vector<Complex> out(half_spectrum_size(g));
  fftw_plan p = detail::PlanCache::instance().get(detail::PlanKind::R2C, g.dim, g.n_per_side);
  fftw_execute_dft_r2c(p, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

/// Inverse of `rfft`, including the 1/N normalization.
inline std::vector<double> irfft(const LatticeGrid& g, std::span<const Complex> spec) {
  std::vector<Complex> in(spec.begin(), spec.end());
  std::vector<double> out(g.sites());
  fftw_plan p = detail::PlanCache::instance().get(detail::PlanKind::C2R, g.dim, g.n_per_side);
  fftw_execute_dft_c2r(p, reinterpret_cast<fftw_complex*>(in.data()), out.data());
  const double inv = 1.0 / static_cast<double>(g.sites());
  for (double& v : out) v *= inv;
  return out;
}

/// In-place full complex backward transform, unnormalized: sum_k F(k) exp(+i k.x).
inline void cfft_backward(const LatticeGrid& g, std::vector<Complex>& data) {
  fftw_plan p = detail::PlanCache::instance().get(detail::PlanKind::C2CBackward, g.dim, g.n_per_side);
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(p, buf, buf);
}

/// Visit every entry of the half spectrum with its signed integer wavenumbers.
template <class Fn>
void for_each_half_mode(const LatticeGrid& g, Fn&& fn) {
  const int n = g.n_per_side;
  const int nh = n / 2 + 1;
  const int n0 = g.dim >= 2 ? n : 1;
  const int n1 = g.dim >= 3 ? n : 1;
  std::size_t idx = 0;
  auto signed_k = [n](int i) { return i < n / 2 ? i : i - n; };
  for (int a = 0; a < n0; ++a) {
    for (int b = 0; b < n1; ++b) {
      for (int c = 0; c < nh; ++c, ++idx) {
        Coord m{0, 0, 0};
        if (g.dim == 1) {
          m[0] = c;
        } else if (g.dim == 2) {
          m[0] = signed_k(a);
          m[1] = c;
        } else {
          m[0] = signed_k(a);
          m[1] = signed_k(b);
          m[2] = c;
        }
        fn(idx, m);
      }
    }
  }
}

/// Visit every mode of the full spectrum (site order) with signed wavenumbers.
template <class Fn>
void for_each_full_mode(const LatticeGrid& g, Fn&& fn) {
  for (std::size_t s = 0; s < g.sites(); ++s) {
    Coord c = g.coords(s);
    for (int j = 0; j < g.dim; ++j) c[j] = g.min_image(c[j]);
    fn(s, c);
  }
}

/// Angular wavenumber along one axis for integer mode m: 2*pi*m/L.
inline double wavenumber(const LatticeGrid& g, int m) { return 2.0 * std::numbers::pi * m / g.side_length; }

/// Symbol of the periodic 2d+1-point Laplacian (-Delta): sum_j (2 - 2 cos(k_j h)) / h^2.
inline double laplacian_symbol(const LatticeGrid& g, const Coord& m) {
  const double h = g.spacing();
  double s = 0.0;
  for (int j = 0; j < g.dim; ++j) s += 2.0 - 2.0 * std::cos(2.0 * std::numbers::pi * m[j] / g.n_per_side);
  return s / (h * h);
}

/// Symbol of the forward difference along `axis`: (exp(i k h) - 1)/h.
inline Complex forward_difference_symbol(const LatticeGrid& g, const Coord& m, int axis) {
  const double theta = 2.0 * std::numbers::pi * m[axis] / g.n_per_side;
  return Complex(std::cos(theta) - 1.0, std::sin(theta)) / g.spacing();
}

}  // namespace loghom
