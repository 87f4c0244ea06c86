#pragma once

// Repeated-data experiments: draw a dataset from theta0, sample the posterior,
// form the credible interval for <theta, psi>, and record whether the truth
// <theta0, psi> (by grid quadrature) falls inside.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bvm_uq/errors.hpp"
#include "bvm_uq/forward_model.hpp"
#include "bvm_uq/gaussian_prior.hpp"
#include "bvm_uq/inference.hpp"
#include "bvm_uq/linearization.hpp"
#include "bvm_uq/parallel.hpp"
#include "bvm_uq/pcn_sampler.hpp"
#include "bvm_uq/spectral_asymptotics.hpp"

namespace bvm {

enum class DesignKind { grid, uniform };
enum class ModelKind { pde, linearized };

struct DesignSpec {
  DesignKind kind = DesignKind::grid;
  int sqrt_n = 20;
  int n = 0;

  int N() const { return kind == DesignKind::grid ? sqrt_n * sqrt_n : n; }
};

inline std::vector<Point> make_design(const DesignSpec& d, std::uint64_t seed) {
  return d.kind == DesignKind::grid ? grid_design(d.sqrt_n) : uniform_design(d.n, seed);
}

struct PriorSettings {
  double alpha = 4.0;
  std::optional<double> tau = 1.0;  ///< empty: tau_star(N, alpha, beta, 2)
  double beta = 6.0;                ///< smoothness of theta0 used by tau_star
  int J = 0;                        ///< 0 selects m/2
};

struct ChainSettings {
  int S = 10000;
  int burn_in = -1;
  std::optional<double> beta_pcn = 0.99;  ///< empty: tune on a pilot run
  int pilot_steps = 1000;
  int thin = 1;
};

struct ExperimentConfig {
  ProblemSpec problem;
  GridField theta0;
  GridField psi;
  PriorSettings prior;
  DesignSpec design;
  double sigma = 5.0;
  ChainSettings chain;
  ModelKind model = ModelKind::pde;
  int replicates = 50;
  double gamma = 0.05;
  std::uint64_t base_seed = 1;
  int threads = 1;

  PriorSpec prior_spec() const {
    PriorSpec p;
    p.alpha = prior.alpha;
    p.J = prior.J;
    p.grid = problem.grid;
    p.tau = prior.tau ? *prior.tau : tau_star(std::max(1, design.N()), prior.alpha, prior.beta, PriorSpec::kDim);
    return p;
  }

  void validate() const {
    problem.validate();
    theta0.check_same_grid(problem.f_source);
    psi.check_same_grid(problem.f_source);
    if (!(prior.alpha > 1.0 + PriorSpec::kDim)) throw ConfigError("prior.alpha must exceed 1 + d = 3");
    if (prior.tau && !(*prior.tau > 0.0)) throw ConfigError("prior.tau must be > 0");
    if (prior.J > problem.grid.cells()) throw ConfigError("prior.J must not exceed the grid size m");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
    if (design.kind == DesignKind::grid && design.sqrt_n < 1) throw ConfigError("design.sqrt_n must be >= 1");
    if (design.kind == DesignKind::uniform && design.n < 0) throw ConfigError("design.n must be >= 0");
    if (!prior.tau && design.N() < 1) throw ConfigError("tau \"auto\" needs at least one observation");
    if (chain.S < 1) throw ConfigError("chain.S must be >= 1");
    if ((chain.burn_in >= 0 ? chain.burn_in : chain.S / 5) >= chain.S) throw ConfigError("chain.burn_in must be smaller than chain.S");
    if (chain.beta_pcn && !(*chain.beta_pcn > 0.0 && *chain.beta_pcn <= 1.0)) throw ConfigError("chain.beta_pcn must lie in (0, 1]");
    if (!chain.beta_pcn && chain.pilot_steps < 100) throw ConfigError("chain.pilot_steps must be >= 100");
    if (replicates < 1) throw ConfigError("replicates must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (model == ModelKind::linearized && 2 * prior_spec().truncation() > problem.grid.cells()) {
      throw ConfigError("the linearized model needs prior.J <= m/2");
    }
  }
};

/// Per-experiment quantities shared by all replicates.
struct ExperimentContext {
  PriorSpec prior;
  GridField u0;
  double truth = 0.0;
  SpectralVector psi;
  SpectralVector theta0_coeffs;
  std::vector<GridField> score_columns;  ///< I(e_p), linearized model only
};

inline ExperimentContext prepare_experiment(const ExperimentConfig& ec) {
  ec.validate();
  ExperimentContext ctx;
  ctx.prior = ec.prior_spec();
  const int J = ctx.prior.truncation();
  ctx.u0 = forward(ec.theta0, ec.problem);
  ctx.truth = inner_product(ec.theta0, ec.psi);
  ctx.psi = analyze(ec.psi, J);
  ctx.theta0_coeffs = analyze(ec.theta0, J);
  if (ec.model == ModelKind::linearized) {
    const LinearizationPoint lp(ec.theta0, ec.problem);
    ctx.score_columns = build_info_gram(lp, J, ec.threads).columns;
  }
  return ctx;
}

/// Design matrix A_ip = I(e_p)(x_i).
inline Eigen::MatrixXd score_design_matrix(const std::vector<GridField>& columns, const PointEvaluator& eval) {
  Eigen::MatrixXd A(static_cast<Eigen::Index>(eval.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t p = 0; p < columns.size(); ++p) {
    for (std::size_t i = 0; i < eval.size(); ++i) {
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = eval.evaluate(columns[p], i);
    }
  }
  return A;
}

inline LinearGaussianLikelihood make_linear_likelihood(const ExperimentContext& ctx, const Dataset& data) {
  const PointEvaluator eval(ctx.u0.grid(), data.xs);
  const std::vector<double> off = eval.evaluate(ctx.u0);
  Eigen::VectorXd offset = Eigen::Map<const Eigen::VectorXd>(off.data(), static_cast<Eigen::Index>(off.size()));
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.ys.data(), static_cast<Eigen::Index>(data.ys.size()));
  return LinearGaussianLikelihood(score_design_matrix(ctx.score_columns, eval), std::move(offset), std::move(y),
                                  data.sigma, ctx.theta0_coeffs);
}

/// Seed of the sampler stream for a replicate whose data stream uses `seed`.
inline std::uint64_t chain_seed(std::uint64_t seed) { return seed + 0x9E3779B97F4A7C15ULL; }

struct PosteriorRun {
  Dataset data;
  FunctionalTrace trace;
  std::vector<double> log_liks;
  double accept_rate = 0.0;
  double beta_pcn = 0.0;
  std::optional<TuneResult> tuning;
  std::optional<GaussianMarginal> oracle;  ///< exact posterior, linearized model only
};

/// One dataset (stream `seed`) and one chain (stream chain_seed(seed)).
/// keep(iter, state, log_lik) sees every retained state.
template <class Keep>
PosteriorRun run_posterior(const ExperimentConfig& ec, const ExperimentContext& ctx, std::uint64_t seed, Keep&& keep) {
  PosteriorRun run;
  run.data = observe(ctx.u0, make_design(ec.design, seed), ec.sigma, seed);

  ChainConfig cc;
  cc.S = ec.chain.S;
  cc.burn_in = ec.chain.burn_in;
  cc.thin = ec.chain.thin;
  cc.seed = chain_seed(seed);
  cc.prior = ctx.prior;
  cc.beta_pcn = ec.chain.beta_pcn.value_or(0.5);

  std::vector<double> values;
  auto sample_with = [&](const auto& model) {
    if (!ec.chain.beta_pcn) {
      run.tuning = tune_beta(cc, model, ec.chain.pilot_steps);
      cc.beta_pcn = run.tuning->beta;
    }
    run.beta_pcn = cc.beta_pcn;
    run.accept_rate = run_chain(cc, model, [&](int it, const SpectralVector& s, double ll) {
      values.push_back(ctx.psi.dot(s));
      run.log_liks.push_back(ll);
      keep(it, s, ll);
    });
  };
  if (ec.model == ModelKind::linearized) {
    const LinearGaussianLikelihood model = make_linear_likelihood(ctx, run.data);
    run.oracle = conjugate_oracle(model, ctx.prior.tau, ctx.prior.alpha, ctx.psi);
    sample_with(model);
  } else {
    sample_with(PdeLikelihood(ec.problem, run.data));
  }
  run.trace = functional_trace(std::move(values));
  return run;
}

struct ReplicateResult {
  int rep = 0;
  bool excluded = false;
  std::string diagnostic;
  CredibleInterval interval;
  bool covered = false;
  double accept_rate = 0.0;
  double beta_pcn = 0.0;
  double ess = 0.0;
  double posterior_sd = 0.0;
  double oracle_mean = std::numeric_limits<double>::quiet_NaN();
  double oracle_sd = std::numeric_limits<double>::quiet_NaN();
};

struct CoverageReport {
  int replicates = 0;
  int excluded = 0;
  int covered = 0;
  double empirical_coverage = 0.0;
  double wilson_lo = 0.0;
  double wilson_hi = 1.0;
  double nominal = 0.95;
  double truth_value = 0.0;
  std::vector<ReplicateResult> per_replicate;
};

/// Replicate r uses seed base_seed + r. Replicates hitting a chain-quality error are
/// excluded and counted; more than 20% exclusions is an ExperimentError.
inline CoverageReport coverage_experiment(const ExperimentConfig& ec) {
  const ExperimentContext ctx = prepare_experiment(ec);
  std::vector<ReplicateResult> results(static_cast<std::size_t>(ec.replicates));
  parallel_for(results.size(), ec.threads, [&](std::size_t r) {
    ReplicateResult& out = results[r];
    out.rep = static_cast<int>(r);
    try {
      const PosteriorRun run = run_posterior(ec, ctx, ec.base_seed + r, [](int, const SpectralVector&, double) {});
      out.interval = credible_interval(run.trace, ec.gamma);
      out.covered = out.interval.contains(ctx.truth);
      out.accept_rate = run.accept_rate;
      out.beta_pcn = run.beta_pcn;
      out.ess = run.trace.ess;
      out.posterior_sd = run.trace.sd;
      if (run.oracle) {
        out.oracle_mean = run.oracle->mean;
        out.oracle_sd = run.oracle->sd;
      }
    } catch (const QualityError& e) {
      out.excluded = true;
      out.diagnostic = e.what();
    }
  });

  CoverageReport rep;
  rep.replicates = ec.replicates;
  rep.nominal = 1.0 - ec.gamma;
  rep.truth_value = ctx.truth;
  for (const ReplicateResult& r : results) {
    if (r.excluded) {
      ++rep.excluded;
    } else if (r.covered) {
      ++rep.covered;
    }
  }
  if (rep.excluded > 0.2 * rep.replicates) {
    throw ExperimentError(std::to_string(rep.excluded) + " of " + std::to_string(rep.replicates) +
                          " replicates excluded for chain-quality errors");
  }
  const int used = rep.replicates - rep.excluded;
  rep.empirical_coverage = static_cast<double>(rep.covered) / used;
  const WilsonInterval w = wilson_interval(rep.covered, used);
  rep.wilson_lo = w.lo;
  rep.wilson_hi = w.hi;
  rep.per_replicate = std::move(results);
  return rep;
}

}  // namespace bvm
