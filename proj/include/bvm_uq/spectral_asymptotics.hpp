#pragma once

// Galerkin approximation, in the truncated sine basis, of the scale and bias
// quantities that govern the Gaussian approximation of a linear functional
// <theta, psi> under the posterior:
//
//   psi_bar_N = (N I*I + tau^{-2} Lambda^alpha)^{-1} psi
//   s_N       = sqrt(<psi, psi_bar_N>)
//   t_N       = sqrt(N) ||I psi_bar_N||
//   b_N       = tau^{-2} <theta0, Lambda^alpha psi_bar_N>
//
// together with the spectral distribution function and the distance function of
// psi_lambda = Lambda^{-alpha/2} psi relative to K*K, K = I Lambda^{-alpha/2}.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bvm_uq/errors.hpp"
#include "bvm_uq/gaussian_prior.hpp"
#include "bvm_uq/linearization.hpp"
#include "bvm_uq/mesh_field.hpp"
#include "bvm_uq/parallel.hpp"

namespace bvm {

/// Columns I(e_p) and their Gram matrix <I e_p, I e_q> for flat modes p, q.
struct InfoGram {
  int J = 0;
  std::vector<GridField> columns;
  Eigen::MatrixXd gram;
  double symmetry_defect = 0.0;  ///< max|G - G^T| / max|G| before symmetrization

  std::size_t dim() const noexcept { return static_cast<std::size_t>(J) * J; }
};

/// Builds an InfoGram from precomputed columns; used by build_info_gram and by
/// linear surrogates that reuse the columns.
inline InfoGram gram_from_columns(int J, std::vector<GridField> columns) {
  const std::size_t P = static_cast<std::size_t>(J) * J;
  if (columns.size() != P) throw DimensionError("InfoGram needs J^2 columns");
  InfoGram ig;
  ig.J = J;
  ig.columns = std::move(columns);
  ig.gram.resize(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t q = 0; q < P; ++q) {
      ig.gram(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = inner_product(ig.columns[p], ig.columns[q]);
    }
  }
  const double scale = ig.gram.cwiseAbs().maxCoeff();
  ig.symmetry_defect = scale > 0.0 ? (ig.gram - ig.gram.transpose()).cwiseAbs().maxCoeff() / scale : 0.0;
  ig.gram = 0.5 * (ig.gram + ig.gram.transpose()).eval();
  return ig;
}

/// J^2 score applications, one per basis field, run over `threads` workers.
inline InfoGram build_info_gram(const LinearizationPoint& lp, int J, int threads = 1) {
  if (J < 1 || 2 * J > lp.grid().cells()) {
    throw DomainError("InfoGram truncation must satisfy 1 <= J <= m/2");
  }
  const std::size_t P = static_cast<std::size_t>(J) * J;
  std::vector<GridField> columns(P);
  const SpectralVector layout(J);
  parallel_for(P, threads, [&](std::size_t p) {
    const auto [j, k] = layout.mode(p);
    try {
      columns[p] = apply_score(eigenfunction(j, k, lp.grid()), lp);
    } catch (const SolverError& e) {
      throw SolverError("score of basis mode (" + std::to_string(j) + ", " + std::to_string(k) + "): " + e.what(),
                        e.residual(), e.iterations());
    }
  });
  return gram_from_columns(J, std::move(columns));
}

namespace detail {

inline Eigen::VectorXd to_eigen(const SpectralVector& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.coeffs().data(), static_cast<Eigen::Index>(v.size()));
}

inline SpectralVector from_eigen(int J, const Eigen::VectorXd& x) {
  return SpectralVector(J, std::vector<double>(x.data(), x.data() + x.size()));
}

/// lambda_p^{power} for every flat mode p.
inline Eigen::VectorXd eigenvalue_powers(int J, double power) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(J) * J);
  const SpectralVector layout(J);
  for (Eigen::Index p = 0; p < out.size(); ++p) {
    const auto [j, k] = layout.mode(static_cast<std::size_t>(p));
    out(p) = std::pow(eigenvalue(j, k), power);
  }
  return out;
}

inline void check_truncation(const SpectralVector& v, const InfoGram& ig) {
  if (v.truncation() != ig.J) {
    throw DimensionError("spectral vector truncation " + std::to_string(v.truncation()) +
                         " differs from InfoGram truncation " + std::to_string(ig.J));
  }
}

}  // namespace detail

struct Perturbation {
  SpectralVector coeffs;        ///< psi_bar_N
  double condition = 1.0;       ///< condition estimate of the factorized system
  bool ill_conditioned = false; ///< condition > 1e14
};

/// Solves (N G + tau^{-2} D_alpha) c = psi, D_alpha = diag(lambda^alpha).
/// The system is factorized in the symmetric scaling S = D_alpha^{-1/2}:
/// (N S G S + tau^{-2} I) y = S psi, c = S y, whose spectrum is bounded below by tau^{-2}.
inline Perturbation perturbation(const SpectralVector& psi, const InfoGram& ig, double N, double tau, double alpha) {
  detail::check_truncation(psi, ig);
  if (!(N >= 1.0)) throw DomainError("perturbation needs N >= 1");
  if (!(tau > 0.0)) throw DomainError("perturbation needs tau > 0");
  const Eigen::VectorXd S = detail::eigenvalue_powers(ig.J, -0.5 * alpha);
  Eigen::MatrixXd A = N * (S.asDiagonal() * ig.gram * S.asDiagonal());
  A.diagonal().array() += 1.0 / (tau * tau);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw DefinitenessError("perturbation system factorization failed");
  const Eigen::VectorXd y = ldlt.solve(S.cwiseProduct(detail::to_eigen(psi)));
  Perturbation out;
  out.coeffs = detail::from_eigen(ig.J, S.cwiseProduct(y));
  const double rcond = ldlt.rcond();
  out.condition = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  out.ill_conditioned = out.condition > 1e14;
  return out;
}

inline double scale_s(const SpectralVector& psi, const SpectralVector& psi_bar) {
  const double q = psi.dot(psi_bar);
  if (q < 0.0) throw DefinitenessError("<psi, psi_bar> is negative");
  return std::sqrt(q);
}

inline double scale_s(const SpectralVector& psi, const InfoGram& ig, double N, double tau, double alpha) {
  return scale_s(psi, perturbation(psi, ig, N, tau, alpha).coeffs);
}

/// sqrt(N psi_bar^T G psi_bar).
inline double scale_t(const SpectralVector& psi_bar, const InfoGram& ig, double N) {
  detail::check_truncation(psi_bar, ig);
  const Eigen::VectorXd c = detail::to_eigen(psi_bar);
  return std::sqrt(std::max(0.0, N * c.dot(ig.gram * c)));
}

/// tau^{-2} sum lambda^alpha theta0 c.
inline double bias_b(const SpectralVector& theta0, const SpectralVector& psi_bar, double tau, double alpha) {
  theta0.check_same_truncation(psi_bar);
  const Eigen::VectorXd L = detail::eigenvalue_powers(theta0.truncation(), alpha);
  double s = 0.0;
  for (std::size_t p = 0; p < theta0.size(); ++p) s += L(static_cast<Eigen::Index>(p)) * theta0[p] * psi_bar[p];
  return s / (tau * tau);
}

/// Eigendecomposition of M = S G S (the Galerkin K*K) with psi_lambda = S psi in its eigenbasis.
struct SpectralProfile {
  Eigen::VectorXd mu;           ///< ascending eigenvalues of M
  Eigen::VectorXd projections;  ///< <v_i, psi_lambda>
  double psi_lambda_norm = 0.0;

  double operator_norm() const { return mu.size() ? std::max(std::abs(mu(0)), std::abs(mu(mu.size() - 1))) : 0.0; }
};

inline SpectralProfile spectral_profile(const SpectralVector& psi, const InfoGram& ig, double alpha) {
  detail::check_truncation(psi, ig);
  const Eigen::VectorXd S = detail::eigenvalue_powers(ig.J, -0.5 * alpha);
  const Eigen::MatrixXd M = S.asDiagonal() * ig.gram * S.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of K*K failed");
  const Eigen::VectorXd psi_lambda = S.cwiseProduct(detail::to_eigen(psi));
  SpectralProfile out;
  out.mu = eig.eigenvalues();
  out.projections = eig.eigenvectors().transpose() * psi_lambda;
  out.psi_lambda_norm = psi_lambda.norm();
  return out;
}

/// F(t) = ||E_t psi_lambda||, the spectral mass of psi_lambda on eigenvalues <= t.
inline double spectral_distribution(const SpectralProfile& prof, double t) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < prof.mu.size(); ++i) {
    if (prof.mu(i) <= t) s += prof.projections(i) * prof.projections(i);
  }
  return std::sqrt(s);
}

inline double spectral_distribution(const SpectralVector& psi, const InfoGram& ig, double alpha, double t) {
  if (!(t > 0.0)) throw DomainError("spectral distribution needs t > 0");
  return spectral_distribution(spectral_profile(psi, ig, alpha), t);
}

/// min over ||v|| <= R of ||psi_lambda - M^{1/2} v||.
/// Outside the attainable range the minimizer is v_i = sigma_i p_i / (sigma_i^2 + l) with the
/// multiplier l > 0 fixed by ||v|| = R; l is found by bisection (geometric, since l spans
/// many decades).
inline double distance_function(const SpectralProfile& prof, double R) {
  if (!(R >= 0.0)) throw DomainError("distance function needs R >= 0");
  const Eigen::Index n = prof.mu.size();
  double null2 = 0.0, range_norm2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = prof.projections(i);
    if (prof.mu(i) > 0.0) {
      range_norm2 += p * p / prof.mu(i);
    } else {
      null2 += p * p;
    }
  }
  if (R == 0.0) return prof.psi_lambda_norm;
  if (R * R >= range_norm2) return std::sqrt(null2);

  auto v_norm = [&](double l) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (prof.mu(i) <= 0.0) continue;
      const double sig = std::sqrt(prof.mu(i));
      const double v = sig * prof.projections(i) / (prof.mu(i) + l);
      s += v * v;
    }
    return std::sqrt(s);
  };

  double hi = std::max(prof.operator_norm(), std::numeric_limits<double>::min()) * 1e6;
  for (int expand = 0; v_norm(hi) > R; ++expand) {
    if (expand > 60) throw NumericalError("distance function: no upper bracket for the multiplier");
    hi *= 1e6;
  }
  double lo = hi;
  while (v_norm(lo) < R) {
    lo *= 1e-4;
    if (lo < 1e-300) {
      std::ostringstream msg;
      msg << "distance function: multiplier bracket collapsed to [0, " << hi << "]";
      throw NumericalError(msg.str());
    }
  }
  double l = lo;
  bool converged = false;
  for (int it = 0; it < 400; ++it) {
    l = std::sqrt(lo * hi);
    const double vn = v_norm(l);
    if (std::abs(vn - R) <= 1e-12 * R) {
      converged = true;
      break;
    }
    if (vn > R) {
      lo = l;
    } else {
      hi = l;
    }
    if (hi <= lo * (1.0 + 4.0 * std::numeric_limits<double>::epsilon())) {
      converged = true;  // bracket at machine resolution
      break;
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "distance function: bisection stalled in [" << lo << ", " << hi << "]";
    throw NumericalError(msg.str());
  }
  double d2 = null2;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (prof.mu(i) <= 0.0) continue;
    const double r = l * prof.projections(i) / (prof.mu(i) + l);
    d2 += r * r;
  }
  return std::sqrt(d2);
}

inline double distance_function(const SpectralVector& psi, const InfoGram& ig, double alpha, double R) {
  return distance_function(spectral_profile(psi, ig, alpha), R);
}

struct RateFit {
  double slope = 0.0;
  double stderr_slope = 0.0;
};

/// Least-squares slope of log(value) against log(N).
inline RateFit rate_fit(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw DomainError("rate_fit needs at least 3 points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [N, v] : points) {
    if (!(N > 0.0) || !(v > 0.0)) throw DomainError("rate_fit needs positive N and values");
    mx += std::log(N);
    my += std::log(v);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [N, v] : points) {
    const double dx = std::log(N) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(v) - my);
  }
  if (sxx == 0.0) throw DomainError("rate_fit needs at least two distinct N");
  RateFit fit;
  fit.slope = sxy / sxx;
  double sse = 0.0;
  for (const auto& [N, v] : points) {
    const double r = std::log(v) - my - fit.slope * (std::log(N) - mx);
    sse += r * r;
  }
  fit.stderr_slope = std::sqrt(sse / (n - 2.0) / sxx);
  return fit;
}

/// Sufficient conditions for conservative coverage in the Darcy problem.
struct CoverageConditions {
  bool smoothness = false;       ///< product-of-ratios inequality against 1/3 or F(alpha)
  bool dimension = false;        ///< alpha above the d/2-scaled threshold
  bool truth_smoothness = false; ///< beta above alpha * 2(a-1)(a+1)/(2(a-1)(a+1) - d(a+3))
  bool alpha_le_beta_half_d = false;
  bool all = false;
};

inline CoverageConditions check_coverage_conditions(double alpha, double beta, int d) {
  if (d < 1 || d > 3) throw DomainError("coverage conditions are defined for d in {1, 2, 3}");
  const double a = alpha;
  const double dd = d;
  CoverageConditions c;
  const double F = std::max((a - dd / 2) / (3 * a - 2 * dd + 1),
                            (a - dd / 2) * (a - dd / 2) / (4 * (a - dd) * (a + 1 - dd)));
  const double lhs = (2 * a - 1 - dd) / (2 * a + 2 + dd) * (a - 1 - dd) / (a + 1 - dd / 2);
  c.smoothness = d == 1 ? lhs > 1.0 / 3.0 : lhs > F;

  const double am1ap1 = (a - 1) * (a + 1);
  double factor = 0.0;
  if (d == 1) {
    factor = 6 * am1ap1 / (6 * am1ap1 - (a + 3) * (4 * a + 3));
  } else {
    factor = 1.0 / (1 + dd / 2 * (a + 3) / am1ap1 - (a + 3) * (2 * a + 2 + dd) / am1ap1 * F);
  }
  c.dimension = a > dd / 2 * factor;

  c.truth_smoothness = beta > a * 2 * am1ap1 / (2 * am1ap1 - dd * (a + 3));
  c.alpha_le_beta_half_d = alpha <= beta + dd / 2;
  c.all = c.smoothness && c.dimension && c.truth_smoothness && c.alpha_le_beta_half_d;
  return c;
}

struct AsymptoticReport {
  double N = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double tau = 0.0;
  double s_N = 0.0;
  double t_N = 0.0;
  double b_N = 0.0;
  double ratio_t_over_s = 0.0;
  double condition = 1.0;
  bool ill_conditioned = false;
  SpectralVector psi_bar;
  CoverageConditions conditions;
};

/// All scale/bias quantities for one (N, alpha, beta, tau); enforces 0 <= t_N < s_N.
inline AsymptoticReport asymptotic_report(const SpectralVector& psi, const SpectralVector& theta0, const InfoGram& ig,
                                          double N, double tau, double alpha, double beta, int d = 2) {
  const Perturbation pert = perturbation(psi, ig, N, tau, alpha);
  AsymptoticReport rep;
  rep.N = N;
  rep.alpha = alpha;
  rep.beta = beta;
  rep.tau = tau;
  rep.psi_bar = pert.coeffs;
  rep.condition = pert.condition;
  rep.ill_conditioned = pert.ill_conditioned;
  rep.s_N = scale_s(psi, pert.coeffs);
  rep.t_N = scale_t(pert.coeffs, ig, N);
  rep.b_N = bias_b(theta0, pert.coeffs, tau, alpha);
  rep.ratio_t_over_s = rep.s_N > 0.0 ? rep.t_N / rep.s_N : 0.0;
  rep.conditions = check_coverage_conditions(alpha, beta, d);
  if (rep.s_N > 0.0 && !(rep.t_N < rep.s_N)) {
    std::ostringstream msg;
    msg << "t_N = " << rep.t_N << " is not below s_N = " << rep.s_N << " at N = " << N;
    throw NumericalError(msg.str());
  }
  return rep;
}

}  // namespace bvm
