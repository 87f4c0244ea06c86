#pragma once

// Posterior summaries of the linear functional <theta, psi>: trace moments and
// effective sample size, normal-quantile credible intervals, Wilson binomial
// intervals, histograms, and exact Gaussian conditioning for linear models.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "bvm_uq/errors.hpp"
#include "bvm_uq/gaussian_prior.hpp"
#include "bvm_uq/mesh_field.hpp"
#include "bvm_uq/pcn_sampler.hpp"

namespace bvm {

/// Geyer initial positive sequence estimate, in (0, n].
inline double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) throw InputError("effective sample size of an empty series");
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  if (!(g0 > 0.0)) return static_cast<double>(n);
  double sum_pairs = 0.0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double pair = autocov(2 * m) + autocov(2 * m + 1);
    if (!(pair > 0.0)) break;
    sum_pairs += pair;
  }
  const double tau_int = (-g0 + 2.0 * sum_pairs) / g0;
  if (!(tau_int > 0.0)) return static_cast<double>(n);
  return std::min(static_cast<double>(n), static_cast<double>(n) / tau_int);
}

struct FunctionalTrace {
  std::vector<double> values;
  double mean = 0.0;
  double sd = 0.0;
  double ess = 0.0;
};

inline FunctionalTrace functional_trace(std::vector<double> values) {
  if (values.empty()) throw InputError("functional trace of an empty chain");
  FunctionalTrace tr;
  tr.values = std::move(values);
  const double n = static_cast<double>(tr.values.size());
  for (double v : tr.values) tr.mean += v;
  tr.mean /= n;
  double ss = 0.0;
  for (double v : tr.values) ss += (v - tr.mean) * (v - tr.mean);
  tr.sd = tr.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  tr.ess = effective_sample_size(tr.values);
  return tr;
}

/// values_s = sum psi_jk theta_{s,jk}.
inline FunctionalTrace functional_trace(const Chain& chain, const SpectralVector& psi) {
  std::vector<double> values;
  values.reserve(chain.states.size());
  for (const SpectralVector& s : chain.states) values.push_back(psi.dot(s));
  return functional_trace(std::move(values));
}

/// Standard normal quantile: Acklam's rational approximation plus one Halley step
/// against erfc, absolute error well below 1e-12 on (1e-300, 1 - 1e-16).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

struct CredibleInterval {
  double center = 0.0;
  double half_width = 0.0;
  double gamma = 0.05;

  double lo() const noexcept { return center - half_width; }
  double hi() const noexcept { return center + half_width; }
  bool contains(double v) const noexcept { return std::abs(v - center) <= half_width; }
};

/// mean +/- z_{1-gamma/2} sd.
inline CredibleInterval credible_interval(const FunctionalTrace& trace, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
  return {trace.mean, normal_quantile(1.0 - 0.5 * gamma) * trace.sd, gamma};
}

struct WilsonInterval {
  double lo = 0.0;
  double hi = 1.0;
};

inline WilsonInterval wilson_interval(int successes, int trials, double z = normal_quantile(0.975)) {
  if (trials <= 0 || successes < 0 || successes > trials) throw DomainError("Wilson interval needs 0 <= k <= n, n > 0");
  const double n = trials;
  const double phat = successes / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (phat + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  long count = 0;
};

struct Histogram {
  std::vector<HistogramBin> bins;
  double mean = 0.0;
  double sd = 0.0;
};

/// Equal-width bins over [min, max]; a constant trace yields one degenerate bin.
inline Histogram histogram(const FunctionalTrace& trace, int bins) {
  if (bins < 2) throw DomainError("histogram needs at least 2 bins");
  if (trace.values.empty()) throw InputError("histogram of an empty trace");
  Histogram out;
  out.mean = trace.mean;
  out.sd = trace.sd;
  const auto [lo_it, hi_it] = std::minmax_element(trace.values.begin(), trace.values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    out.bins.push_back({lo, hi, static_cast<long>(trace.values.size())});
    return out;
  }
  const double width = (hi - lo) / bins;
  out.bins.resize(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    out.bins[b].lo = lo + b * width;
    out.bins[b].hi = b + 1 == bins ? hi : lo + (b + 1) * width;
  }
  for (double v : trace.values) {
    const int b = std::min(bins - 1, static_cast<int>((v - lo) / width));
    ++out.bins[static_cast<std::size_t>(b)].count;
  }
  return out;
}

struct GaussianMarginal {
  double mean = 0.0;
  double sd = 0.0;
};

/// Exact posterior of <theta, psi> for y - offset = A (theta - theta_ref) + sigma eps under
/// the prior N(0, tau^2 Lambda^{-alpha}); precision sigma^{-2} A^T A + tau^{-2} D_alpha,
/// factorized in the prior-whitened coordinates theta = Lambda^{-alpha/2} z.
inline GaussianMarginal conjugate_oracle(const Eigen::MatrixXd& A, const Eigen::VectorXd& centred_data,
                                         const SpectralVector& theta_ref, double sigma, double tau, double alpha,
                                         const SpectralVector& psi) {
  psi.check_same_truncation(theta_ref);
  const Eigen::Index P = static_cast<Eigen::Index>(psi.size());
  if (A.cols() != P || A.rows() != centred_data.size()) throw DimensionError("conjugate oracle dimension mismatch");
  if (!(tau > 0.0)) throw DomainError("conjugate oracle needs tau > 0");
  if (!(sigma > 0.0)) throw DomainError("conjugate oracle needs sigma > 0");
  Eigen::VectorXd S(P), psi_s(P), ref(P);
  for (Eigen::Index p = 0; p < P; ++p) {
    const auto [j, k] = psi.mode(static_cast<std::size_t>(p));
    S(p) = std::pow(eigenvalue(j, k), -0.5 * alpha);
    psi_s(p) = S(p) * psi[static_cast<std::size_t>(p)];
    ref(p) = theta_ref[static_cast<std::size_t>(p)];
  }
  const Eigen::VectorXd y = centred_data + A * ref;
  const Eigen::MatrixXd AS = A * S.asDiagonal();
  Eigen::MatrixXd precision = AS.transpose() * AS / (sigma * sigma);
  precision.diagonal().array() += 1.0 / (tau * tau);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(precision);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-300)) throw NumericalError("posterior precision is singular");
  const Eigen::VectorXd mean_z = ldlt.solve(AS.transpose() * y / (sigma * sigma));
  const double var = psi_s.dot(ldlt.solve(psi_s));
  if (var < 0.0) throw DefinitenessError("posterior variance is negative");
  return {psi_s.dot(mean_z), std::sqrt(var)};
}

inline GaussianMarginal conjugate_oracle(const LinearGaussianLikelihood& model, double tau, double alpha,
                                         const SpectralVector& psi) {
  return conjugate_oracle(model.design_matrix(), model.centred_data(), model.reference(), model.sigma(), tau, alpha,
                          psi);
}

}  // namespace bvm
