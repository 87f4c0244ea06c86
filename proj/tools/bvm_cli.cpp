#include "bvm_cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#ifndef BVM_UQ_VERSION
#define BVM_UQ_VERSION "0.0.0"
#endif

namespace bvm::cli {

using nlohmann::json;

const char* tool_version() { return BVM_UQ_VERSION; }

namespace {

std::string join_path(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError((where.empty() ? "config" : where) + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown config key \"" + join_path(where, key) + "\"");
  }
}

template <class T>
T get_or(const json& obj, const std::string& where, const char* key, T fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key \"" + join_path(where, key) + "\" has the wrong type");
  }
}

/// Field given as "zero"/"bump" or {"modes": [[j, k, value], ...]} on the sine basis.
GridField parse_field(const json& node, const std::string& where, const Grid& grid, const char* named) {
  if (node.is_string()) {
    const std::string name = node.get<std::string>();
    if (name == "zero") return GridField(grid);
    if (name == "bump" && std::string(named) == "bump") return eval_bump_psi(grid);
    throw ConfigError("config key \"" + where + "\" must be \"zero\"" +
                      (std::string(named) == "bump" ? ", \"bump\"" : "") + " or {\"modes\": [...]}");
  }
  check_keys(node, where, {"modes"});
  const json& modes = node.at("modes");
  if (!modes.is_array()) throw ConfigError("config key \"" + where + ".modes\" must be an array");
  int J = 1;
  std::vector<std::tuple<int, int, double>> entries;
  for (const json& e : modes) {
    if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() || !e[1].is_number_integer() || !e[2].is_number()) {
      throw ConfigError("entries of \"" + where + ".modes\" must be [j, k, value]");
    }
    const int j = e[0].get<int>(), k = e[1].get<int>();
    if (j < 1 || k < 1) throw ConfigError("mode indices in \"" + where + ".modes\" start at 1");
    if (j > grid.cells() || k > grid.cells()) throw ConfigError("mode index in \"" + where + ".modes\" exceeds m");
    J = std::max({J, j, k});
    entries.emplace_back(j, k, e[2].get<double>());
  }
  SpectralVector v(J);
  for (const auto& [j, k, value] : entries) v(j, k) += value;
  return synthesize(v, grid);
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

json conditions_json(const CoverageConditions& c) {
  return {{"smoothness", c.smoothness},
          {"dimension", c.dimension},
          {"truth_smoothness", c.truth_smoothness},
          {"alpha_le_beta_half_d", c.alpha_le_beta_half_d},
          {"all", c.all}};
}

json spectral_json(const SpectralVector& v) {
  json rows = json::array();
  for (std::size_t p = 0; p < v.size(); ++p) {
    const auto [j, k] = v.mode(p);
    rows.push_back({j, k, v[p]});
  }
  return rows;
}

std::string field_csv(const GridField& f) {
  std::ostringstream os;
  write_csv(os, f);
  return os.str();
}

}  // namespace

RunConfig parse_config(const json& doc) {
  check_keys(doc, "", {"problem", "theta0", "psi", "prior", "design", "sigma", "chain", "replicates", "gamma",
                       "base_seed", "model", "threads", "histogram_bins", "sweep"});
  RunConfig rc;
  ExperimentConfig& ec = rc.experiment;

  const json problem = doc.value("problem", json::object());
  check_keys(problem, "problem", {"m", "source", "boundary", "k_min", "sign", "tol", "max_iter"});
  const int m = get_or(problem, "problem", "m", 32);
  if (m < 4) throw ConfigError("problem.m must be >= 4");
  const Grid grid(m);
  const json source = problem.value("source", json("benchmark"));
  bool benchmark = false;
  if (source.is_string() && source.get<std::string>() == "benchmark") {
    ec.problem = poisson_benchmark(grid);
    benchmark = true;
  } else if (source.is_number()) {
    ec.problem.grid = grid;
    ec.problem.f_source = GridField(grid, source.get<double>());
    ec.problem.g_boundary = GridField(grid);
  } else {
    throw ConfigError("problem.source must be \"benchmark\" or a constant");
  }
  const double boundary = get_or(problem, "problem", "boundary", 0.0);
  if (boundary != 0.0) {
    ec.problem.g_boundary = GridField(grid, boundary);
    benchmark = false;
  }
  ec.problem.k_min = get_or(problem, "problem", "k_min", 0.0);
  ec.problem.sign = get_or(problem, "problem", "sign", ec.problem.sign);
  ec.problem.solve.tol = get_or(problem, "problem", "tol", ec.problem.solve.tol);
  ec.problem.solve.max_iter = get_or(problem, "problem", "max_iter", ec.problem.solve.max_iter);
  benchmark = benchmark && ec.problem.k_min == 0.0 && ec.problem.sign == -1.0;

  ec.theta0 = doc.contains("theta0") ? parse_field(doc["theta0"], "theta0", grid, "zero") : GridField(grid);
  ec.psi = doc.contains("psi") ? parse_field(doc["psi"], "psi", grid, "bump") : eval_bump_psi(grid);
  rc.analytic_case = benchmark && ec.theta0.max_abs() == 0.0;

  const json prior = doc.value("prior", json::object());
  check_keys(prior, "prior", {"alpha", "tau", "beta", "J"});
  ec.prior.alpha = get_or(prior, "prior", "alpha", ec.prior.alpha);
  ec.prior.beta = get_or(prior, "prior", "beta", ec.prior.alpha + 2.0);
  ec.prior.J = get_or(prior, "prior", "J", 0);
  if (ec.prior.J < 0) throw ConfigError("prior.J must be >= 1 (or 0 for m/2)");
  if (prior.contains("tau") && prior["tau"].is_string()) {
    if (prior["tau"].get<std::string>() != "auto") throw ConfigError("prior.tau must be a number or \"auto\"");
    ec.prior.tau.reset();
  } else {
    ec.prior.tau = get_or(prior, "prior", "tau", 1.0);
  }

  const json design = doc.value("design", json::object());
  check_keys(design, "design", {"kind", "sqrt_n", "n"});
  const std::string kind = get_or<std::string>(design, "design", "kind", "grid");
  if (kind == "grid") {
    ec.design.kind = DesignKind::grid;
    ec.design.sqrt_n = get_or(design, "design", "sqrt_n", 20);
  } else if (kind == "uniform") {
    ec.design.kind = DesignKind::uniform;
    ec.design.n = get_or(design, "design", "n", 400);
  } else {
    throw ConfigError("design.kind must be \"grid\" or \"uniform\"");
  }

  ec.sigma = get_or(doc, "", "sigma", ec.sigma);

  const json chain = doc.value("chain", json::object());
  check_keys(chain, "chain", {"S", "burn_in", "beta_pcn", "pilot_steps", "thin"});
  ec.chain.S = get_or(chain, "chain", "S", ec.chain.S);
  ec.chain.burn_in = get_or(chain, "chain", "burn_in", ec.chain.burn_in);
  ec.chain.pilot_steps = get_or(chain, "chain", "pilot_steps", ec.chain.pilot_steps);
  ec.chain.thin = get_or(chain, "chain", "thin", ec.chain.thin);
  if (ec.chain.thin < 1) throw ConfigError("chain.thin must be >= 1");
  if (chain.contains("beta_pcn") && chain["beta_pcn"].is_string()) {
    if (chain["beta_pcn"].get<std::string>() != "tune") throw ConfigError("chain.beta_pcn must be a number or \"tune\"");
    ec.chain.beta_pcn.reset();
  } else {
    ec.chain.beta_pcn = get_or(chain, "chain", "beta_pcn", 0.99);
  }

  ec.replicates = get_or(doc, "", "replicates", ec.replicates);
  ec.gamma = get_or(doc, "", "gamma", ec.gamma);
  ec.base_seed = get_or<std::uint64_t>(doc, "", "base_seed", ec.base_seed);
  ec.threads = get_or(doc, "", "threads", 0);
  const std::string model = get_or<std::string>(doc, "", "model", "pde");
  if (model == "pde") {
    ec.model = ModelKind::pde;
  } else if (model == "linearized") {
    ec.model = ModelKind::linearized;
  } else {
    throw ConfigError("model must be \"pde\" or \"linearized\"");
  }

  rc.histogram_bins = get_or(doc, "", "histogram_bins", rc.histogram_bins);
  if (rc.histogram_bins < 2) throw ConfigError("histogram_bins must be >= 2");
  if (doc.contains("sweep")) {
    check_keys(doc["sweep"], "sweep", {"N"});
    rc.sweep_N = get_or(doc["sweep"], "sweep", "N", rc.sweep_N);
    if (rc.sweep_N.empty()) throw ConfigError("sweep.N must not be empty");
    for (double n : rc.sweep_N) {
      if (!(n >= 1.0)) throw ConfigError("sweep.N entries must be >= 1");
    }
  }

  ec.validate();
  rc.canonical = doc;
  return rc;
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string config_hash(const json& config) { return sha256_hex(config.dump()); }

RunDirectory::RunDirectory(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw InputError("cannot create output directory " + root_.string() + ": " + ec.message());
}

void RunDirectory::write(const std::string& name, const std::string& content) {
  const std::filesystem::path p = root_ / name;
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
  out.close();
  if (!out) throw InputError("cannot write " + p.string());
  outputs_.push_back(name);
}

void RunDirectory::write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

int cmd_forward(const RunConfig& rc, RunDirectory& dir) {
  const ExperimentConfig& ec = rc.experiment;
  const GridField u = forward(ec.theta0, ec.problem);
  dir.write("u.csv", field_csv(u));
  json report = {{"m", ec.problem.grid.cells()}, {"h", ec.problem.grid.spacing()}, {"analytic_case", rc.analytic_case}};
  if (rc.analytic_case) {
    const GridField exact = poisson_benchmark_solution(ec.problem.grid);
    GridField diff = u;
    diff -= exact;
    const double h = ec.problem.grid.spacing();
    report["max_error"] = diff.max_abs();
    report["error_bound"] = 2.0 * h * h;
    report["within_bound"] = diff.max_abs() <= 2.0 * h * h;
  }
  dir.write_json("report.json", report);
  return kExitOk;
}

int cmd_sample(const RunConfig& rc, RunDirectory& dir) {
  const ExperimentConfig& ec = rc.experiment;
  const ExperimentContext ctx = prepare_experiment(ec);
  const int J = ctx.prior.truncation();
  SpectralVector mean_state(J);
  long kept = 0;
  std::ostringstream trace_csv;
  trace_csv << std::setprecision(17) << "iter,psi_functional,log_lik\n";
  const PosteriorRun run = run_posterior(ec, ctx, ec.base_seed, [&](int it, const SpectralVector& s, double ll) {
    mean_state += s;
    ++kept;
    trace_csv << it << ',' << ctx.psi.dot(s) << ',' << ll << '\n';
  });
  mean_state *= 1.0 / static_cast<double>(kept);

  std::ostringstream data_csv;
  write_dataset_csv(data_csv, run.data);
  dir.write("dataset.csv", data_csv.str());
  dir.write_json("dataset.json", {{"N", run.data.N()},
                                  {"sigma", run.data.sigma},
                                  {"seed", ec.base_seed},
                                  {"design", ec.design.kind == DesignKind::grid ? "grid" : "uniform"}});
  dir.write("trace.csv", trace_csv.str());

  const Histogram hist = histogram(run.trace, rc.histogram_bins);
  std::ostringstream hist_csv;
  hist_csv << std::setprecision(17) << "lo,hi,count\n";
  for (const HistogramBin& b : hist.bins) hist_csv << b.lo << ',' << b.hi << ',' << b.count << '\n';
  dir.write("histogram.csv", hist_csv.str());
  dir.write_json("histogram_markers.json", {{"mean", hist.mean},
                                            {"sd", hist.sd},
                                            {"minus_1sd", hist.mean - hist.sd},
                                            {"plus_1sd", hist.mean + hist.sd},
                                            {"truth", ctx.truth}});

  std::ostringstream mean_csv;
  write_csv(mean_csv, mean_state);
  dir.write("posterior_mean_coeffs.csv", mean_csv.str());
  dir.write("posterior_mean.csv", field_csv(synthesize(mean_state, ec.problem.grid)));

  const CredibleInterval ci = credible_interval(run.trace, ec.gamma);
  json summary = {{"S", ec.chain.S},
                  {"burn_in", ec.chain.burn_in >= 0 ? ec.chain.burn_in : ec.chain.S / 5},
                  {"thin", ec.chain.thin},
                  {"kept", kept},
                  {"seed", ec.base_seed},
                  {"chain_seed", chain_seed(ec.base_seed)},
                  {"beta_pcn", run.beta_pcn},
                  {"accept_rate", run.accept_rate},
                  {"prior", {{"alpha", ctx.prior.alpha}, {"tau", ctx.prior.tau}, {"J", J}}},
                  {"N", run.data.N()},
                  {"sigma", ec.sigma},
                  {"mean", run.trace.mean},
                  {"sd", run.trace.sd},
                  {"ess", run.trace.ess},
                  {"truth", ctx.truth},
                  {"one_sd_interval_covers_truth", std::abs(ctx.truth - run.trace.mean) <= run.trace.sd},
                  {"credible_interval",
                   {{"gamma", ci.gamma}, {"center", ci.center}, {"half_width", ci.half_width},
                    {"covers_truth", ci.contains(ctx.truth)}}}};
  if (run.tuning) {
    summary["tuning"] = {{"tuned_beta", run.tuning->beta},
                         {"pilot_accept", run.tuning->pilot_accept},
                         {"pilot_steps", ec.chain.pilot_steps}};
  }
  if (run.oracle) summary["conjugate_oracle"] = {{"mean", run.oracle->mean}, {"sd", run.oracle->sd}};
  dir.write_json("summary.json", summary);
  return kExitOk;
}

int cmd_asymptotics(const RunConfig& rc, RunDirectory& dir) {
  const ExperimentConfig& ec = rc.experiment;
  const int J = ec.prior.J > 0 ? ec.prior.J : std::min(8, ec.problem.grid.cells() / 2);
  const LinearizationPoint lp(ec.theta0, ec.problem);
  const InfoGram ig = build_info_gram(lp, J, ec.threads);
  const SpectralVector psi = analyze(ec.psi, J);
  const SpectralVector theta0 = analyze(ec.theta0, J);

  std::ostringstream sweep;
  sweep << std::setprecision(17) << "N,s_N,t_N,b_N,ratio,tau\n";
  std::vector<std::pair<double, double>> s_points;
  for (double N : rc.sweep_N) {
    const double tau = ec.prior.tau ? *ec.prior.tau : tau_star(N, ec.prior.alpha, ec.prior.beta, PriorSpec::kDim);
    const AsymptoticReport rep = asymptotic_report(psi, theta0, ig, N, tau, ec.prior.alpha, ec.prior.beta);
    s_points.emplace_back(N, rep.s_N);
    sweep << N << ',' << rep.s_N << ',' << rep.t_N << ',' << rep.b_N << ',' << rep.ratio_t_over_s << ',' << tau << '\n';
    std::ostringstream name;
    name << "report_N" << std::llround(N) << ".json";
    dir.write_json(name.str(), {{"N", rep.N},
                                {"alpha", rep.alpha},
                                {"beta", rep.beta},
                                {"tau", rep.tau},
                                {"tau_mode", ec.prior.tau ? "fixed" : "auto"},
                                {"J", J},
                                {"s_N", rep.s_N},
                                {"t_N", rep.t_N},
                                {"b_N", rep.b_N},
                                {"ratio_t_over_s", rep.ratio_t_over_s},
                                {"perturbation_condition", rep.condition},
                                {"ill_conditioned", rep.ill_conditioned},
                                {"gram_symmetry_defect", ig.symmetry_defect},
                                {"psi_bar", spectral_json(rep.psi_bar)},
                                {"conditions", conditions_json(rep.conditions)}});
  }
  dir.write("sweep.csv", sweep.str());
  json summary = {{"conditions", conditions_json(check_coverage_conditions(ec.prior.alpha, ec.prior.beta, PriorSpec::kDim))},
                  {"J", J}};
  if (s_points.size() >= 2) {
    const RateFit fit = rate_fit(s_points);
    summary["s_N_slope"] = fit.slope;
    summary["s_N_slope_stderr"] = fit.stderr_slope;
  }
  dir.write_json("sweep_summary.json", summary);
  return kExitOk;
}

int cmd_coverage(const RunConfig& rc, RunDirectory& dir) {
  const ExperimentConfig& ec = rc.experiment;
  const CoverageReport rep = coverage_experiment(ec);
  std::ostringstream csv;
  csv << std::setprecision(17) << "rep,center,half_width,covered,accept_rate\n";
  json per = json::array();
  for (const ReplicateResult& r : rep.per_replicate) {
    json row = {{"rep", r.rep}, {"excluded", r.excluded}, {"seed", ec.base_seed + static_cast<std::uint64_t>(r.rep)}};
    if (r.excluded) {
      row["diagnostic"] = r.diagnostic;
    } else {
      csv << r.rep << ',' << r.interval.center << ',' << r.interval.half_width << ',' << (r.covered ? 1 : 0) << ','
          << r.accept_rate << '\n';
      row["center"] = r.interval.center;
      row["half_width"] = r.interval.half_width;
      row["covered"] = r.covered;
      row["accept_rate"] = r.accept_rate;
      row["beta_pcn"] = r.beta_pcn;
      row["ess"] = r.ess;
      row["posterior_sd"] = r.posterior_sd;
      if (!std::isnan(r.oracle_mean)) {
        row["oracle_mean"] = r.oracle_mean;
        row["oracle_sd"] = r.oracle_sd;
      }
    }
    per.push_back(row);
  }
  const int used = rep.replicates - rep.excluded;
  const double mc_slack = std::sqrt(rep.nominal * (1.0 - rep.nominal) / std::max(used, 1));
  dir.write_json("coverage_report.json", {{"replicates", rep.replicates},
                                          {"excluded", rep.excluded},
                                          {"covered", rep.covered},
                                          {"empirical_coverage", rep.empirical_coverage},
                                          {"wilson_lo", rep.wilson_lo},
                                          {"wilson_hi", rep.wilson_hi},
                                          {"nominal", rep.nominal},
                                          {"truth_value", rep.truth_value},
                                          {"mc_slack", mc_slack},
                                          {"wilson_lo_at_least_nominal_minus_0.10", rep.wilson_lo >= rep.nominal - 0.10},
                                          {"per_replicate", per}});
  dir.write("replicates.csv", csv.str());
  return kExitOk;
}

int run(const Options& opts) {
  const auto started = std::chrono::steady_clock::now();
  try {
    json doc = load_json(opts.config);
    if (opts.seed) {
      if (!doc.is_object()) throw ConfigError("config must be a JSON object");
      doc["base_seed"] = *opts.seed;
    }
    RunConfig rc = parse_config(doc);
    int threads = opts.threads.value_or(0);
    if (threads <= 0 && std::getenv("BVM_UQ_THREADS")) threads = threads_from_env();
    if (threads <= 0) threads = rc.experiment.threads > 0 ? rc.experiment.threads : 1;
    rc.experiment.threads = threads;

    RunDirectory dir(opts.out);
    int code = kExitOk;
    if (opts.command == "forward") {
      code = cmd_forward(rc, dir);
    } else if (opts.command == "sample") {
      code = cmd_sample(rc, dir);
    } else if (opts.command == "asymptotics") {
      code = cmd_asymptotics(rc, dir);
    } else if (opts.command == "coverage") {
      code = cmd_coverage(rc, dir);
    } else {
      throw ConfigError("unknown command " + opts.command);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const json manifest = {{"command", opts.command},
                           {"config_hash", config_hash(rc.canonical)},
                           {"tool_version", tool_version()},
                           {"base_seed", rc.experiment.base_seed},
                           {"threads", threads},
                           {"outputs", dir.outputs()},
                           {"wall_time", wall}};
    std::ofstream(dir.root() / "manifest.json") << manifest.dump(2) << "\n";
    return code;
  } catch (const NumericalError& e) {
    std::cerr << "bvm-uq: numerical failure: " << e.what() << "\n";
    return kExitNumerics;
  } catch (const QualityError& e) {
    std::cerr << "bvm-uq: chain quality failure: " << e.what() << "\n";
    return kExitQuality;
  } catch (const Error& e) {
    std::cerr << "bvm-uq: invalid configuration: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "bvm-uq: " << e.what() << "\n";
    return 1;
  }
}

int main(int argc, char** argv) {
  CLI::App app{"Posterior sampling, asymptotics and coverage for the Darcy inverse problem", "bvm-uq"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1, 1);
  Options opts;
  std::uint64_t seed = 0;
  int threads = 0;
  for (const char* name : {"forward", "sample", "asymptotics", "coverage"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opts.config, "experiment config (JSON)")->required();
    sub->add_option("--out", opts.out, "output directory")->required();
    sub->add_option("--seed", seed, "override base_seed");
    sub->add_option("--threads", threads, "worker threads (falls back to BVM_UQ_THREADS)")->check(CLI::PositiveNumber);
    sub->callback([&opts, &seed, &threads, sub] {
      opts.command = sub->get_name();
      if (sub->count("--seed") > 0) opts.seed = seed;
      if (sub->count("--threads") > 0) opts.threads = threads;
    });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  return run(opts);
}

}  // namespace bvm::cli
