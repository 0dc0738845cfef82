#pragma once

#include <cmath>
#include <span>
#include <string>

#include "loghom/errors.hpp"

namespace loghom {

enum class CovarianceFamily { GaussianKernel, ExponentialKernel, SphericalCutoff };

inline const char* to_string(CovarianceFamily f) {
  switch (f) {
    case CovarianceFamily::GaussianKernel: return "gaussian_kernel";
    case CovarianceFamily::ExponentialKernel: return "exponential_kernel";
    case CovarianceFamily::SphericalCutoff: return "spherical_cutoff";
  }
  return "unknown";
}

inline CovarianceFamily parse_covariance_family(const std::string& s) {
  if (s == "gaussian_kernel" || s == "gaussian") return CovarianceFamily::GaussianKernel;
  if (s == "exponential_kernel" || s == "exponential") return CovarianceFamily::ExponentialKernel;
  if (s == "spherical_cutoff" || s == "spherical") return CovarianceFamily::SphericalCutoff;
  throw Error(ErrorKind::ConfigError, "unknown covariance family '" + s + "'");
}

/// Stationary isotropic covariance of the Gaussian field G.
///
/// gaussian_kernel     C(x) = A exp(-|x|^2 / (2 l^2))
/// exponential_kernel  C(x) = A exp(-|x| / l)
/// spherical_cutoff    C(x) = A (1 - 3r/2 + r^3/2) for r = |x|/l < 1, else 0
///
/// `holder_gamma` is declared metadata: every family is 2*gamma-Hoelder at 0
/// for all gamma in (0, 1/2).
struct CovarianceSpec {
  CovarianceFamily family = CovarianceFamily::GaussianKernel;
  double amplitude = 1.0;
  double corr_length = 2.0;
  double holder_gamma = 0.25;

  void validate() const {
    require(amplitude >= 0.0 && std::isfinite(amplitude), ErrorKind::InvalidArgument, "amplitude must be >= 0");
    require(corr_length > 0.0 && std::isfinite(corr_length), ErrorKind::InvalidArgument,
            "corr_length must be > 0");
    require(holder_gamma > 0.0 && holder_gamma < 0.5, ErrorKind::InvalidArgument,
            "holder_gamma must lie in (0, 1/2)");
  }
};

inline double covariance_at_distance(const CovarianceSpec& spec, double r) {
  const double t = r / spec.corr_length;
  switch (spec.family) {
    case CovarianceFamily::GaussianKernel: return spec.amplitude * std::exp(-0.5 * t * t);
    case CovarianceFamily::ExponentialKernel: return spec.amplitude * std::exp(-t);
    case CovarianceFamily::SphericalCutoff:
      return t < 1.0 ? spec.amplitude * (1.0 - 1.5 * t + 0.5 * t * t * t) : 0.0;
  }
  return 0.0;
}

inline double covariance_eval(const CovarianceSpec& spec, std::span<const double> x) {
  double r2 = 0.0;
  for (double v : x) r2 += v * v;
  return covariance_at_distance(spec, std::sqrt(r2));
}

/// Whether the family is known to factor as C = C0 * C0 with a bounded,
/// algebraically decaying C0 and a.e. positive Fourier transform in dimension
/// `dim`. Recorded as metadata only; not verified numerically.
inline bool satisfies_convolution_square(const CovarianceSpec& spec, int dim) {
  switch (spec.family) {
    case CovarianceFamily::GaussianKernel: return true;  // C0 is Gaussian with length l/sqrt(2)
    case CovarianceFamily::SphericalCutoff: return dim == 3;  // self-convolution of a ball indicator
    case CovarianceFamily::ExponentialKernel: return false;  // square-root kernel is unbounded at 0
  }
  return false;
}

}  // namespace loghom
