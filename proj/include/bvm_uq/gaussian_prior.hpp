#pragma once

// Centred Gaussian prior N(0, tau^2 (-Laplace)^{-alpha}) on the unit square,
// diagonal in the Dirichlet-sine eigenbasis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>

#include "bvm_uq/errors.hpp"
#include "bvm_uq/mesh_field.hpp"

namespace bvm {

/// Dirichlet-Laplacian eigenvalue pi^2 (j^2 + k^2).
inline double eigenvalue(int j, int k) noexcept {
  return std::numbers::pi * std::numbers::pi * (static_cast<double>(j) * j + static_cast<double>(k) * k);
}

inline GridField eigenfunction(int j, int k, const Grid& grid) {
  SpectralVector v(std::max(j, k));
  v(j, k) = 1.0;
  return synthesize(v, grid);
}

inline std::pair<double, GridField> eigenpair(int j, int k, const Grid& grid) {
  if (j < 1 || k < 1) throw DomainError("eigenpair indices start at 1");
  return {eigenvalue(j, k), eigenfunction(j, k, grid)};
}

struct PriorSpec {
  static constexpr int kDim = 2;

  double alpha = 4.0;
  double tau = 1.0;
  int J = 0;  ///< 0 selects default_truncation(grid)
  Grid grid;

  int truncation() const { return J > 0 ? J : grid.cells() / 2; }

  void validate() const {
    if (!(alpha > 1.0 + kDim)) throw ConfigError("prior alpha must exceed 1 + d = 3");
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigError("prior tau must be finite and >= 0");
    if (truncation() > grid.cells()) {
      throw ConfigError("prior truncation J=" + std::to_string(truncation()) + " exceeds m=" +
                        std::to_string(grid.cells()));
    }
  }

  /// Standard deviation of coefficient (j, k): tau * lambda_jk^{-alpha/2}.
  double mode_sd(int j, int k) const { return tau * std::pow(eigenvalue(j, k), -0.5 * alpha); }
  double mode_variance(int j, int k) const { return tau * tau * std::pow(eigenvalue(j, k), -alpha); }
};

inline int default_truncation(const Grid& grid) { return grid.cells() / 2; }

/// Karhunen-Loeve draw using an external generator (the sampler's stream).
template <class Rng>
SpectralVector sample(const PriorSpec& spec, Rng& rng) {
  const int J = spec.truncation();
  SpectralVector v(J);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int j = 1; j <= J; ++j) {
    for (int k = 1; k <= J; ++k) v(j, k) = spec.mode_sd(j, k) * normal(rng);
  }
  return v;
}

/// coeff_jk = tau * lambda_jk^{-alpha/2} * xi_jk with xi from a generator seeded by `seed`.
inline SpectralVector sample(const PriorSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  return sample(spec, rng);
}

/// sqrt(sum lambda_jk^alpha v_jk^2).
inline double cameron_martin_norm(const SpectralVector& v, double alpha) {
  const int J = v.truncation();
  double s = 0.0;
  for (int j = 1; j <= J; ++j) {
    for (int k = 1; k <= J; ++k) s += std::pow(eigenvalue(j, k), alpha) * v(j, k) * v(j, k);
  }
  return std::sqrt(s);
}

/// Prior scaling N^{(2a-2b-d)/(4a+4+2d)} ^ 1 when alpha >= beta, else N^{-d/(4a+4+2d)}.
inline double tau_star(double N, double alpha, double beta, int d) {
  if (!(N >= 1.0)) throw DomainError("tau_star needs N >= 1");
  const double denom = 4.0 * alpha + 4.0 + 2.0 * d;
  if (alpha >= beta) return std::min(std::pow(N, (2.0 * alpha - 2.0 * beta - d) / denom), 1.0);
  return std::pow(N, -static_cast<double>(d) / denom);
}

/// Contraction rate N^{-(a^b+1)/(2(a^b)+2+d)}; for alpha > beta + d/2 the beta-branch
/// value is returned as the lower bound the true rate exceeds.
inline double epsilon_rate(double N, double alpha, double beta, int d) {
  if (!(N >= 1.0)) throw DomainError("epsilon_rate needs N >= 1");
  if (alpha <= beta + 0.5 * d) {
    const double s = std::min(alpha, beta);
    return std::pow(N, -(s + 1.0) / (2.0 * s + 2.0 + d));
  }
  return std::pow(N, -(beta + 1.0) / (2.0 * beta + 2.0 + d));
}

/// Sum of lambda_jk^{-alpha} over all modes with max(j, k) > J.
/// Exact summation up to a cutoff plus an integral bound for the remainder.
inline double kl_tail(int J, double alpha) {
  constexpr int kCutoff = 2048;
  double s = 0.0;
  for (int j = 1; j <= kCutoff; ++j) {
    for (int k = 1; k <= kCutoff; ++k) {
      if (std::max(j, k) <= J) continue;
      s += std::pow(eigenvalue(j, k), -alpha);
    }
  }
  // Modes outside the cutoff square lie outside the disc of radius R = kCutoff; the
  // lattice sum over r > R is bounded by (pi/2) * int_{R-1}^inf (pi^2 r^2)^{-alpha} r dr.
  const double R = kCutoff - 1.0;
  const double pi2 = std::numbers::pi * std::numbers::pi;
  s += 0.5 * std::numbers::pi * std::pow(pi2, -alpha) * std::pow(R, 2.0 - 2.0 * alpha) / (2.0 * alpha - 2.0);
  return s;
}

/// Sum of lambda_jk^{-alpha} over every mode (trace of the covariance at tau = 1).
inline double kl_total(double alpha) { return kl_tail(0, alpha); }

}  // namespace bvm
