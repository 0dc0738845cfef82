#pragma once

// Ball averages over periodic lattice balls: direct sums at a point, or for
// every centre at once through an FFT convolution with the ball indicator.

#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "loghom/errors.hpp"
#include "loghom/fft.hpp"
#include "loghom/lattice.hpp"

namespace loghom {

namespace detail {

class BallKernelCache {
 public:
  static BallKernelCache& instance() {
    static BallKernelCache c;
    return c;
  }

  /// Half spectrum of the normalized ball indicator (1/|B| on B_r(0)).
  std::shared_ptr<const std::vector<Complex>> get(const LatticeGrid& g, double radius) {
    const auto key = std::make_tuple(g.dim, g.n_per_side, g.side_length, radius);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    std::vector<double> kernel(g.sites(), 0.0);
    const auto offsets = ball_offsets(g, radius);
    const double w = 1.0 / static_cast<double>(offsets.size());
    for (const Coord& o : offsets) kernel[g.site(o)] += w;
    auto spec = std::make_shared<const std::vector<Complex>>(rfft(g, kernel));
    std::lock_guard<std::mutex> lock(mutex_);
    if (cache_.size() > 256) cache_.clear();
    return cache_.emplace(key, spec).first->second;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, double, double>, std::shared_ptr<const std::vector<Complex>>> cache_;
};

}  // namespace detail

/// Number of lattice sites in a ball of the given radius.
inline std::size_t ball_size(const LatticeGrid& g, double radius) { return ball_offsets(g, radius).size(); }

/// Ball averages of one scalar array, for every centre.
inline std::vector<double> ball_average_all(const LatticeGrid& g, std::span<const double> v, double radius) {
  const auto kernel = detail::BallKernelCache::instance().get(g, radius);
  std::vector<Complex> spec = rfft(g, v);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= (*kernel)[k];
  return irfft(g, spec);
}

/// Ball-average every component of a field (the ball is symmetric, so the
/// convolution equals the centred average).
inline LatticeField ball_average_field(const LatticeField& v, double radius) {
  LatticeField out(v.grid, v.components);
  out.meta = v.meta;
  for (int c = 0; c < v.components; ++c) {
    const auto avg = ball_average_all(v.grid, v.component(c), radius);
    std::copy(avg.begin(), avg.end(), out.component(c).begin());
  }
  return out;
}

/// Direct ball average of component `c` around one centre.
inline double ball_average_at(const LatticeField& v, std::size_t center, double radius, int c = 0) {
  const auto sites = ball_sites(v.grid, center, radius);
  double s = 0.0;
  for (std::size_t x : sites) s += v.at(x, c);
  return s / static_cast<double>(sites.size());
}

/// Physical radius limit for balls used in radius and observable computations.
inline double max_ball_radius(const LatticeGrid& g) { return g.side_length / 4.0; }

inline void require_ball_fits(const LatticeGrid& g, double radius) {
  require(radius <= max_ball_radius(g) * (1.0 + 1e-12), ErrorKind::BallTooLarge,
          "ball radius " + std::to_string(radius) + " exceeds side_length/4");
}

}  // namespace loghom
