#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace loghom {

enum class ErrorKind {
  InvalidArgument,
  GridMismatch,
  SpectrumNotPSD,
  BadTruncation,
  NoConvergence,
  SingularCoefficient,
  BallTooLarge,
  InsufficientTail,
  ConfigMismatch,
  ScaleMismatch,
  RankDeficient,
  MixedKinds,
  ConfigError,
  IoError,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::SpectrumNotPSD: return "SpectrumNotPSD";
    case ErrorKind::BadTruncation: return "BadTruncation";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::SingularCoefficient: return "SingularCoefficient";
    case ErrorKind::BallTooLarge: return "BallTooLarge";
    case ErrorKind::InsufficientTail: return "InsufficientTail";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::ScaleMismatch: return "ScaleMismatch";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::MixedKinds: return "MixedKinds";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Base of every error raised by the library. `kind()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when the periodized covariance has a Fourier eigenvalue below -psd_tol * max.
class SpectrumNotPSD : public Error {
 public:
  SpectrumNotPSD(std::size_t worst_mode, double worst_value, double max_value)
      : Error(ErrorKind::SpectrumNotPSD,
              "mode " + std::to_string(worst_mode) + " has eigenvalue " +
                  std::to_string(worst_value) + " (max " + std::to_string(max_value) + ")"),
        worst_mode(worst_mode), worst_value(worst_value), max_value(max_value) {}
  std::size_t worst_mode;
  double worst_value;
  double max_value;
};

class NoConvergence : public Error {
 public:
  NoConvergence(int iterations, std::vector<double> history)
      : Error(ErrorKind::NoConvergence,
              "no convergence after " + std::to_string(iterations) + " iterations, residual " +
                  (history.empty() ? std::string("n/a") : std::to_string(history.back()))),
        iterations(iterations), residual_history(std::move(history)) {}
  int iterations;
  std::vector<double> residual_history;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace loghom
