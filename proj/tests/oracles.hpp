#pragma once

// Independent reference computations used only by the tests.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "bvm_uq/gaussian_prior.hpp"
#include "bvm_uq/linearization.hpp"
#include "bvm_uq/mesh_field.hpp"

namespace oracle {

using namespace bvm;

// Frozen reference values.
inline constexpr double kZ975 = 1.959963984540054;   // Phi^{-1}(0.975)
inline constexpr double kZ84 = 0.994457883209753;    // Phi^{-1}(0.84)
inline constexpr double kBumpCenter = 0.1353352832366127;  // exp(-2)

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Quantile by bisection on the cdf.
inline double normal_quantile_bisect(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Wilson interval as the set of p accepted by the two-sided score test,
/// endpoints located by bisection.
struct Bounds {
  double lo, hi;
};
inline Bounds wilson_by_score_test(int k, int n, double z) {
  const double phat = static_cast<double>(k) / n;
  auto accepted = [&](double p) { return std::abs(phat - p) <= z * std::sqrt(p * (1.0 - p) / n); };
  auto edge = [&](double inside, double outside) {
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (inside + outside);
      (accepted(mid) ? inside : outside) = mid;
    }
    return 0.5 * (inside + outside);
  };
  const double lo = k == 0 ? 0.0 : edge(phat, 0.0);
  const double hi = k == n ? 1.0 : edge(phat, 1.0);
  return {lo, hi};
}

/// Smooth field from a few random low modes, optionally multiplied by
/// x(1-x)y(1-y) so it vanishes on the boundary.
inline GridField random_smooth(const Grid& grid, std::uint64_t seed, int modes = 4, bool interior = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::vector<std::tuple<int, int, double, double, double>> terms;
  for (int t = 0; t < modes; ++t) {
    std::uniform_int_distribution<int> freq(0, 3);
    terms.emplace_back(freq(rng), freq(rng), n01(rng), n01(rng), n01(rng));
  }
  return GridField::from_function(grid, [&](double x, double y) {
    double v = 0.0;
    for (const auto& [a, b, c, px, py] : terms) {
      v += c * std::cos(std::numbers::pi * a * x + px) * std::cos(std::numbers::pi * b * y + py);
    }
    return interior ? 16.0 * x * (1 - x) * y * (1 - y) * v : v;
  });
}

/// Dense-eigendecomposition reference for the asymptotic quantities:
/// with M = S G S = V diag(mu) V^T and S = D^{-alpha/2},
/// c = S V diag(1 / (N mu + tau^{-2})) V^T S psi.
struct DenseAsymptotics {
  Eigen::VectorXd c;
  double s, t, b;
};
inline DenseAsymptotics dense_asymptotics(const Eigen::MatrixXd& G, const SpectralVector& psi,
                                          const SpectralVector& theta0, double N, double tau, double alpha) {
  const int J = psi.truncation();
  const Eigen::Index P = J * J;
  Eigen::VectorXd S(P), lam_alpha(P), ps(P), th(P);
  for (Eigen::Index p = 0; p < P; ++p) {
    const auto [j, k] = psi.mode(static_cast<std::size_t>(p));
    const double lam = std::numbers::pi * std::numbers::pi * (j * j + k * k);
    S(p) = std::pow(lam, -0.5 * alpha);
    lam_alpha(p) = std::pow(lam, alpha);
    ps(p) = psi[static_cast<std::size_t>(p)];
    th(p) = theta0[static_cast<std::size_t>(p)];
  }
  const Eigen::MatrixXd M = S.asDiagonal() * G * S.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  const Eigen::MatrixXd& V = eig.eigenvectors();
  Eigen::VectorXd w = V.transpose() * S.cwiseProduct(ps);
  for (Eigen::Index i = 0; i < P; ++i) w(i) /= N * eig.eigenvalues()(i) + 1.0 / (tau * tau);
  DenseAsymptotics out;
  out.c = S.cwiseProduct(V * w);
  out.s = std::sqrt(ps.dot(out.c));
  out.t = std::sqrt(N * out.c.dot(G * out.c));
  out.b = lam_alpha.cwiseProduct(th).dot(out.c) / (tau * tau);
  return out;
}

/// Central finite difference of the forward map along h.
inline GridField fd_derivative(const LinearizationPoint& lp, const GridField& h, double eps) {
  GridField plus = forward(lp.theta0() + eps * h, lp.spec());
  GridField minus = forward(lp.theta0() - eps * h, lp.spec());
  plus -= minus;
  plus *= 1.0 / (2.0 * eps);
  return plus;
}

}  // namespace oracle
