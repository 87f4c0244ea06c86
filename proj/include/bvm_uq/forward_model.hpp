#pragma once

// The forward map theta -> u solving div(a_theta grad u) = sign * f, its
// point observations with Gaussian noise, and the Gaussian log-likelihood.

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bvm_uq/elliptic_solver.hpp"
#include "bvm_uq/errors.hpp"
#include "bvm_uq/mesh_field.hpp"

namespace bvm {

struct ProblemSpec {
  Grid grid;
  GridField f_source;
  GridField g_boundary;
  double k_min = 1e-3;
  double sign = 1.0;  ///< -1 expresses -div(a grad u) = f
  SolveConfig solve;

  void validate() const {
    if (!(f_source.grid() == grid) || !(g_boundary.grid() == grid)) {
      throw DimensionError("problem fields must live on the problem grid");
    }
    if (!(k_min >= 0.0)) throw ConfigError("k_min must be >= 0");
    if (sign != 1.0 && sign != -1.0) throw ConfigError("sign must be +1 or -1");
    solve.validate();
  }
};

/// -Laplace(u) = f with f = -2x(1-x) - 2y(1-y), zero boundary data, a = e^theta.
inline ProblemSpec poisson_benchmark(const Grid& grid) {
  ProblemSpec spec;
  spec.grid = grid;
  spec.f_source = GridField::from_function(grid, [](double x, double y) {
    return -2.0 * x * (1.0 - x) - 2.0 * y * (1.0 - y);
  });
  spec.g_boundary = GridField(grid);
  spec.k_min = 0.0;
  spec.sign = -1.0;
  return spec;
}

/// Closed-form solution of poisson_benchmark at theta = 0.
inline GridField poisson_benchmark_solution(const Grid& grid) {
  return GridField::from_function(grid, [](double x, double y) { return -x * y * (1.0 - x) * (1.0 - y); });
}

inline GridField conductivity(const GridField& theta, const ProblemSpec& spec) {
  GridField a(theta.grid());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t = theta[i];
    if (!std::isfinite(t)) throw RangeError("theta is not finite");
    if (t > 700.0) throw RangeError("theta exceeds 700; exp(theta) would overflow");
    a[i] = std::exp(t) + spec.k_min;
  }
  return a;
}

inline GridField forward(const GridField& theta, const ProblemSpec& spec) {
  theta.check_same_grid(spec.f_source);
  const GridField a = conductivity(theta, spec);
  GridField rhs = spec.f_source;
  if (spec.sign != 1.0) rhs *= spec.sign;
  return solve_dirichlet(a, rhs, spec.g_boundary, spec.solve);
}

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// sqrt_n x sqrt_n cell-centred lattice (i - 1/2)/sqrt_n, strictly inside the square.
inline std::vector<Point> grid_design(int sqrt_n) {
  if (sqrt_n < 1) throw DomainError("grid design needs sqrt_n >= 1");
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(sqrt_n) * sqrt_n);
  for (int iy = 0; iy < sqrt_n; ++iy) {
    for (int ix = 0; ix < sqrt_n; ++ix) {
      pts.push_back({(ix + 0.5) / sqrt_n, (iy + 0.5) / sqrt_n});
    }
  }
  return pts;
}

/// n i.i.d. uniform points on [0,1]^2.
inline std::vector<Point> uniform_design(int n, std::uint64_t seed) {
  if (n < 0) throw DomainError("uniform design needs n >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Point> pts(static_cast<std::size_t>(n));
  for (auto& p : pts) {
    p.x = unif(rng);
    p.y = unif(rng);
  }
  return pts;
}

/// Precomputed bilinear interpolation weights for a fixed design.
class PointEvaluator {
 public:
  PointEvaluator() = default;
  PointEvaluator(const Grid& grid, const std::vector<Point>& design) : grid_(grid) {
    const int m = grid.cells();
    stencils_.reserve(design.size());
    for (const Point& p : design) {
      if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
        std::ostringstream msg;
        msg << "design point (" << p.x << ", " << p.y << ") lies outside [0,1]^2";
        throw DomainError(msg.str());
      }
      const double sx = p.x * m, sy = p.y * m;
      const int ix = std::min(static_cast<int>(sx), m - 1);
      const int iy = std::min(static_cast<int>(sy), m - 1);
      const double tx = sx - ix, ty = sy - iy;
      Stencil s;
      s.idx = {grid.index(ix, iy), grid.index(ix + 1, iy), grid.index(ix, iy + 1), grid.index(ix + 1, iy + 1)};
      s.w = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
      stencils_.push_back(s);
    }
  }

  std::size_t size() const noexcept { return stencils_.size(); }
  const Grid& grid() const noexcept { return grid_; }

  double evaluate(const GridField& u, std::size_t i) const noexcept {
    const Stencil& s = stencils_[i];
    return s.w[0] * u[s.idx[0]] + s.w[1] * u[s.idx[1]] + s.w[2] * u[s.idx[2]] + s.w[3] * u[s.idx[3]];
  }

  std::vector<double> evaluate(const GridField& u) const {
    if (!(u.grid() == grid_)) throw DimensionError("field grid differs from the evaluator grid");
    std::vector<double> out(stencils_.size());
    for (std::size_t i = 0; i < stencils_.size(); ++i) out[i] = evaluate(u, i);
    return out;
  }

 private:
  struct Stencil {
    std::array<std::size_t, 4> idx{};
    std::array<double, 4> w{};
  };
  Grid grid_;
  std::vector<Stencil> stencils_;
};

inline double interpolate(const GridField& u, Point p) {
  return PointEvaluator(u.grid(), {p}).evaluate(u, 0);
}

struct Dataset {
  std::vector<Point> xs;
  std::vector<double> ys;
  double sigma = 1.0;

  std::size_t N() const noexcept { return xs.size(); }

  void validate() const {
    if (xs.size() != ys.size()) throw DimensionError("dataset needs one observation per design point");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
    for (const Point& p : xs) {
      if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
        throw DomainError("design point outside [0,1]^2");
      }
    }
  }
};

/// y_i = u(x_i) + sigma * eps_i with eps_i i.i.d. N(0, 1) from a generator seeded by `seed`.
inline Dataset observe(const GridField& u, const std::vector<Point>& design, double sigma, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw DomainError("sigma must be > 0");
  const PointEvaluator eval(u.grid(), design);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  data.xs = design;
  data.sigma = sigma;
  data.ys.resize(design.size());
  for (std::size_t i = 0; i < design.size(); ++i) data.ys[i] = eval.evaluate(u, i) + sigma * normal(rng);
  return data;
}

/// -sum_i |y_i - u(x_i)|^2 / (2 sigma^2) for precomputed evaluation weights.
inline double gaussian_log_likelihood(const GridField& u, const Dataset& data, const PointEvaluator& eval) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.N(); ++i) {
    const double r = data.ys[i] - eval.evaluate(u, i);
    s += r * r;
  }
  return -s / (2.0 * data.sigma * data.sigma);
}

/// -l_N(theta); one forward solve.
inline double log_likelihood(const GridField& theta, const Dataset& data, const ProblemSpec& spec) {
  data.validate();
  const GridField u = forward(theta, spec);
  return gaussian_log_likelihood(u, data, PointEvaluator(spec.grid, data.xs));
}

/// CSV `x,y,value`.
inline void write_dataset_csv(std::ostream& os, const Dataset& data) {
  os.precision(17);
  os << "x,y,value\n";
  for (std::size_t i = 0; i < data.N(); ++i) os << data.xs[i].x << ',' << data.xs[i].y << ',' << data.ys[i] << '\n';
}

inline Dataset read_dataset_csv(std::istream& is, double sigma) {
  std::string line;
  if (!std::getline(is, line) || line != "x,y,value") throw InputError("expected CSV header 'x,y,value'");
  Dataset data;
  data.sigma = sigma;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Point p;
    double v = 0.0;
    char c1 = 0, c2 = 0;
    if (!(ls >> p.x >> c1 >> p.y >> c2 >> v) || c1 != ',' || c2 != ',') {
      throw InputError("malformed dataset row at line " + std::to_string(lineno));
    }
    data.xs.push_back(p);
    data.ys.push_back(v);
  }
  data.validate();
  return data;
}

}  // namespace bvm
