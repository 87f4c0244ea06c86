#pragma once

// Preconditioned Crank-Nicolson Metropolis-Hastings in the truncated sine basis.
// Proposal theta' = sqrt(1 - beta^2) theta + beta xi, xi a fresh prior draw; the
// proposal is reversible with respect to the prior, so acceptance depends on the
// log-likelihood difference alone.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bvm_uq/errors.hpp"
#include "bvm_uq/forward_model.hpp"
#include "bvm_uq/gaussian_prior.hpp"
#include "bvm_uq/mesh_field.hpp"

namespace bvm {

/// A callable returning log L(theta) for a spectral state. May throw bvm::Error.
template <class M>
concept LogLikelihoodModel = requires(const M& model, const SpectralVector& theta) {
  { model(theta) } -> std::convertible_to<double>;
};

/// Likelihood switched off: the chain targets the prior.
struct FlatLikelihood {
  double operator()(const SpectralVector&) const noexcept { return 0.0; }
};

/// Darcy likelihood: synthesize theta on the grid, solve, compare at the design.
class PdeLikelihood {
 public:
  PdeLikelihood(ProblemSpec spec, Dataset data)
      : spec_(std::move(spec)), data_(std::move(data)), eval_(spec_.grid, data_.xs) {
    spec_.validate();
    data_.validate();
  }

  double operator()(const SpectralVector& theta) const {
    const GridField field = synthesize(theta, spec_.grid);
    return gaussian_log_likelihood(forward(field, spec_), data_, eval_);
  }

  const ProblemSpec& spec() const noexcept { return spec_; }
  const Dataset& data() const noexcept { return data_; }

 private:
  ProblemSpec spec_;
  Dataset data_;
  PointEvaluator eval_;
};

/// Gaussian likelihood of the linear model y = offset + A (theta - theta_ref) + sigma eps.
class LinearGaussianLikelihood {
 public:
  LinearGaussianLikelihood(Eigen::MatrixXd design_matrix, Eigen::VectorXd offset, Eigen::VectorXd y, double sigma,
                           SpectralVector theta_ref)
      : A_(std::move(design_matrix)),
        residual0_(std::move(y) - offset),
        sigma_(sigma),
        ref_(std::move(theta_ref)) {
    if (A_.rows() != residual0_.size()) throw DimensionError("design matrix rows must match observations");
    if (A_.cols() != static_cast<Eigen::Index>(ref_.size())) throw DimensionError("design matrix columns must match J^2");
    if (!(sigma_ > 0.0)) throw DomainError("sigma must be > 0");
  }

  double operator()(const SpectralVector& theta) const {
    ref_.check_same_truncation(theta);
    Eigen::VectorXd d(static_cast<Eigen::Index>(theta.size()));
    for (std::size_t p = 0; p < theta.size(); ++p) d(static_cast<Eigen::Index>(p)) = theta[p] - ref_[p];
    const Eigen::VectorXd r = residual0_ - A_ * d;
    return -r.squaredNorm() / (2.0 * sigma_ * sigma_);
  }

  const Eigen::MatrixXd& design_matrix() const noexcept { return A_; }
  /// y - offset
  const Eigen::VectorXd& centred_data() const noexcept { return residual0_; }
  double sigma() const noexcept { return sigma_; }
  const SpectralVector& reference() const noexcept { return ref_; }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd residual0_;
  double sigma_;
  SpectralVector ref_;
};

struct ChainConfig {
  int S = 10000;
  int burn_in = -1;  ///< -1 selects S/5
  double beta_pcn = 0.99;
  std::uint64_t seed = 0;
  int thin = 1;
  PriorSpec prior;
  double max_failure_fraction = 0.01;

  int effective_burn_in() const { return burn_in >= 0 ? burn_in : S / 5; }

  void validate() const {
    if (S < 1) throw ConfigError("chain S must be >= 1");
    if (effective_burn_in() >= S) throw ConfigError("burn_in must be smaller than S");
    if (!(beta_pcn > 0.0 && beta_pcn <= 1.0)) throw ConfigError("beta_pcn must lie in (0, 1]");
    if (thin < 1) throw ConfigError("thin must be >= 1");
    prior.validate();
  }
};

struct Chain {
  std::vector<SpectralVector> states;
  std::vector<double> log_liks;
  double accept_rate = 0.0;
  int failures = 0;
  ChainConfig config;
};

struct StepResult {
  SpectralVector next;
  double next_ll = 0.0;
  bool accepted = false;
  bool failed = false;
  std::string diagnostic;
};

/// One pCN proposal and accept/reject. A solver failure rejects the step and
/// records the diagnostic.
template <LogLikelihoodModel Model, class Rng>
StepResult pcn_step(const SpectralVector& current, double current_ll, const ChainConfig& cfg, const Model& model,
                    Rng& rng) {
  const SpectralVector xi = sample(cfg.prior, rng);
  current.check_same_truncation(xi);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);

  const double keep = std::sqrt(std::max(0.0, 1.0 - cfg.beta_pcn * cfg.beta_pcn));
  SpectralVector proposal(current.truncation());
  for (std::size_t p = 0; p < current.size(); ++p) proposal[p] = keep * current[p] + cfg.beta_pcn * xi[p];

  StepResult out;
  double proposal_ll = 0.0;
  try {
    proposal_ll = model(proposal);
  } catch (const Error& e) {
    out.next = current;
    out.next_ll = current_ll;
    out.failed = true;
    out.diagnostic = e.what();
    return out;
  }
  const double log_ratio = proposal_ll - current_ll;
  if (log_ratio >= 0.0 || std::log(u) < log_ratio) {
    out.next = std::move(proposal);
    out.next_ll = proposal_ll;
    out.accepted = true;
  } else {
    out.next = current;
    out.next_ll = current_ll;
  }
  return out;
}

/// Runs S steps from a prior draw, calling keep(iter, state, log_lik) for every
/// post-burn-in state retained by thinning. Returns the acceptance rate over all S steps.
template <LogLikelihoodModel Model, class Keep>
double run_chain(const ChainConfig& cfg, const Model& model, Keep&& keep, int* failures_out = nullptr) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  SpectralVector state = sample(cfg.prior, rng);
  double ll = 0.0;
  try {
    ll = model(state);
  } catch (const Error& e) {
    throw ChainQualityError(std::string("initial state could not be evaluated: ") + e.what());
  }
  const int burn = cfg.effective_burn_in();
  long accepted = 0;
  int failures = 0;
  for (int it = 0; it < cfg.S; ++it) {
    StepResult step = pcn_step(state, ll, cfg, model, rng);
    accepted += step.accepted ? 1 : 0;
    failures += step.failed ? 1 : 0;
    state = std::move(step.next);
    ll = step.next_ll;
    if (it >= burn && (it - burn) % cfg.thin == 0) keep(it, state, ll);
  }
  if (failures > cfg.max_failure_fraction * cfg.S) {
    throw ChainQualityError(std::to_string(failures) + " of " + std::to_string(cfg.S) +
                            " proposals failed to evaluate");
  }
  if (failures_out) *failures_out = failures;
  return static_cast<double>(accepted) / cfg.S;
}

template <LogLikelihoodModel Model>
Chain run_chain(const ChainConfig& cfg, const Model& model) {
  Chain chain;
  chain.config = cfg;
  const int kept = (cfg.S - cfg.effective_burn_in() + cfg.thin - 1) / std::max(cfg.thin, 1);
  chain.states.reserve(static_cast<std::size_t>(std::max(kept, 0)));
  chain.log_liks.reserve(static_cast<std::size_t>(std::max(kept, 0)));
  chain.accept_rate = run_chain(
      cfg, model,
      [&](int, const SpectralVector& s, double ll) {
        chain.states.push_back(s);
        chain.log_liks.push_back(ll);
      },
      &chain.failures);
  return chain;
}

struct TuneResult {
  double beta = 1.0;
  double pilot_accept = 0.0;  ///< acceptance over the second half of the pilot
};

struct TuneOptions {
  double target = 0.55;
  double floor = 1e-4;
  int batch = 50;
};

/// Adjusts beta on a pilot run (seeded independently of the recorded run) by
/// log beta += (acc - target) / sqrt(batch index). Tuning never overlaps sampling.
template <LogLikelihoodModel Model>
TuneResult tune_beta(const ChainConfig& cfg, const Model& model, int pilot_steps, TuneOptions opts = {}) {
  if (pilot_steps < 100) throw ConfigError("tune_beta needs at least 100 pilot steps");
  ChainConfig pilot = cfg;
  pilot.beta_pcn = std::clamp(cfg.beta_pcn, opts.floor, 1.0);
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e9955bd1e995ULL);
  SpectralVector state = sample(cfg.prior, rng);
  double ll = model(state);

  const int batches = std::max(2, pilot_steps / opts.batch);
  long late_steps = 0, late_accepts = 0;
  for (int b = 0; b < batches; ++b) {
    int acc = 0;
    for (int s = 0; s < opts.batch; ++s) {
      StepResult step = pcn_step(state, ll, pilot, model, rng);
      acc += step.accepted ? 1 : 0;
      state = std::move(step.next);
      ll = step.next_ll;
    }
    const double rate = static_cast<double>(acc) / opts.batch;
    if (2 * b >= batches) {
      late_steps += opts.batch;
      late_accepts += acc;
    }
    const double gain = 2.0 / std::sqrt(1.0 + b);
    pilot.beta_pcn = std::clamp(pilot.beta_pcn * std::exp(gain * (rate - opts.target)), opts.floor, 1.0);
  }
  TuneResult out;
  out.beta = pilot.beta_pcn;
  out.pilot_accept = static_cast<double>(late_accepts) / static_cast<double>(late_steps);
  const bool pinned_low = out.pilot_accept == 0.0;
  const bool pinned_high = out.pilot_accept == 1.0 && out.beta < 1.0;
  if (pinned_low || pinned_high) {
    throw TuningError("pilot acceptance pinned at " + std::to_string(out.pilot_accept) + " with beta " +
                          std::to_string(out.beta),
                      out.beta, out.pilot_accept);
  }
  return out;
}

}  // namespace bvm
