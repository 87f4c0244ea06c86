#pragma once

// Flux-form finite differences for L_a u = div(a grad u) with Dirichlet data,
// solved by conjugate gradients on the sign-flipped interior system.

#include <cmath>
#include <string>
#include <vector>

#include "bvm_uq/errors.hpp"
#include "bvm_uq/mesh_field.hpp"

namespace bvm {

struct SolveConfig {
  double tol = 1e-10;
  int max_iter = 0;  ///< 0 selects 10*(m+1)^2

  void validate() const {
    if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("solver tol must lie in (0, 1)");
    if (max_iter < 0) throw ConfigError("solver max_iter must be >= 1 (or 0 for the default)");
  }
  int iteration_limit(const Grid& grid) const {
    return max_iter > 0 ? max_iter : 10 * static_cast<int>(grid.size());
  }
};

/// Five-point flux stencil with arithmetic-mean face coefficients.
class EllipticOperator {
 public:
  /// Requires a > 0 at every node.
  static EllipticOperator assemble(const GridField& a) {
    const Grid& grid = a.grid();
    const int n = grid.nodes_per_side();
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        if (!(a(ix, iy) > 0.0)) throw CoefficientError(ix, iy, a(ix, iy));
      }
    }
    return EllipticOperator(a);
  }

  /// Same stencil for a coefficient of either sign, e.g. a linearized perturbation.
  static EllipticOperator assemble_signed(const GridField& c) { return EllipticOperator(c); }

  const Grid& grid() const noexcept { return grid_; }

  /// Face coefficient between (ix, iy) and (ix+1, iy).
  double face_x(int ix, int iy) const noexcept { return fx_[static_cast<std::size_t>(iy) * m_ + ix]; }
  /// Face coefficient between (ix, iy) and (ix, iy+1).
  double face_y(int ix, int iy) const noexcept { return fy_[static_cast<std::size_t>(iy) * (m_ + 1) + ix]; }

  /// (L u) at interior nodes; boundary entries of the result are 0.
  GridField apply(const GridField& u) const {
    GridField out(grid_);
    apply_into(u.values(), out.values());
    return out;
  }

  void apply_into(std::span<const double> u, std::span<double> out) const {
    const int n = m_ + 1;
    const double inv_h2 = static_cast<double>(m_) * m_;
    for (int ix = 0; ix < n; ++ix) {
      out[ix] = 0.0;
      out[static_cast<std::size_t>(m_) * n + ix] = 0.0;
    }
    for (int iy = 1; iy < m_; ++iy) {
      const std::size_t row = static_cast<std::size_t>(iy) * n;
      out[row] = 0.0;
      out[row + m_] = 0.0;
      for (int ix = 1; ix < m_; ++ix) {
        const std::size_t i = row + ix;
        const double ue = u[i + 1], uw = u[i - 1], un = u[i + n], us = u[i - n], uc = u[i];
        const double flux = face_x(ix, iy) * (ue - uc) - face_x(ix - 1, iy) * (uc - uw) +
                            face_y(ix, iy) * (un - uc) - face_y(ix, iy - 1) * (uc - us);
        out[i] = flux * inv_h2;
      }
    }
  }

  /// Diagonal of -L at an interior node.
  double negated_diagonal(int ix, int iy) const noexcept {
    return (face_x(ix, iy) + face_x(ix - 1, iy) + face_y(ix, iy) + face_y(ix, iy - 1)) *
           static_cast<double>(m_) * m_;
  }

 private:
  explicit EllipticOperator(const GridField& a) : grid_(a.grid()), m_(a.grid().cells()) {
    const int n = m_ + 1;
    fx_.resize(static_cast<std::size_t>(n) * m_);
    fy_.resize(static_cast<std::size_t>(m_) * n);
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < m_; ++ix) fx_[static_cast<std::size_t>(iy) * m_ + ix] = 0.5 * (a(ix, iy) + a(ix + 1, iy));
    }
    for (int iy = 0; iy < m_; ++iy) {
      for (int ix = 0; ix < n; ++ix) fy_[static_cast<std::size_t>(iy) * n + ix] = 0.5 * (a(ix, iy) + a(ix, iy + 1));
    }
  }

  Grid grid_;
  int m_;
  std::vector<double> fx_;
  std::vector<double> fy_;
};

inline EllipticOperator assemble(const GridField& a) { return EllipticOperator::assemble(a); }

/// Solves L w = rhs at interior nodes with w = 0 on the boundary.
/// Jacobi-preconditioned CG on -L, which is symmetric positive definite.
inline GridField solve_zero_dirichlet(const EllipticOperator& op, const GridField& rhs, const SolveConfig& cfg) {
  cfg.validate();
  const Grid& grid = op.grid();
  if (!(rhs.grid() == grid)) throw DimensionError("right-hand side lives on a different grid");
  const int m = grid.cells();
  const std::size_t N = grid.size();

  std::vector<double> b(N, 0.0), inv_diag(N, 0.0);
  double bnorm2 = 0.0;
  for (int iy = 1; iy < m; ++iy) {
    for (int ix = 1; ix < m; ++ix) {
      const std::size_t i = grid.index(ix, iy);
      b[i] = -rhs[i];
      bnorm2 += b[i] * b[i];
      inv_diag[i] = 1.0 / op.negated_diagonal(ix, iy);
    }
  }
  GridField x(grid);
  if (bnorm2 == 0.0) return x;
  const double bnorm = std::sqrt(bnorm2);

  std::vector<double> r = b, z(N, 0.0), p(N, 0.0), Ap(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = 0.0;
  for (std::size_t i = 0; i < N; ++i) rz += r[i] * z[i];

  auto xs = x.values();
  const int limit = cfg.iteration_limit(grid);
  double rnorm = bnorm;
  for (int it = 0; it < limit; ++it) {
    op.apply_into(p, Ap);
    double pAp = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      Ap[i] = -Ap[i];
      pAp += p[i] * Ap[i];
    }
    if (!(pAp > 0.0)) {
      throw SolverError("CG breakdown: operator is not positive definite", rnorm / bnorm, it);
    }
    const double step = rz / pAp;
    double rr = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      xs[i] += step * p[i];
      r[i] -= step * Ap[i];
      rr += r[i] * r[i];
    }
    rnorm = std::sqrt(rr);
    if (rnorm <= cfg.tol * bnorm) return x;
    double rz_next = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      z[i] = inv_diag[i] * r[i];
      rz_next += r[i] * z[i];
    }
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < N; ++i) p[i] = z[i] + beta * p[i];
  }
  throw SolverError("CG did not converge in " + std::to_string(limit) + " iterations (relative residual " +
                        std::to_string(rnorm / bnorm) + ")",
                    rnorm / bnorm, limit);
}

/// u with L_a u = f inside and u = g_boundary on the boundary.
/// Inhomogeneous data is lifted: w = u - g_hat with g_hat = g on the boundary, 0 inside.
inline GridField solve_dirichlet(const EllipticOperator& op, const GridField& f, const GridField& g_boundary,
                                 const SolveConfig& cfg) {
  const Grid& grid = op.grid();
  f.check_same_grid(g_boundary);
  GridField lift(grid);
  const int n = grid.nodes_per_side();
  bool any_boundary = false;
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      if (grid.on_boundary(ix, iy)) {
        lift(ix, iy) = g_boundary(ix, iy);
        any_boundary = any_boundary || g_boundary(ix, iy) != 0.0;
      }
    }
  }
  if (!any_boundary) return solve_zero_dirichlet(op, f, cfg);
  GridField rhs = f - op.apply(lift);
  GridField u = solve_zero_dirichlet(op, rhs, cfg);
  u += lift;
  return u;
}

inline GridField solve_dirichlet(const GridField& a, const GridField& f, const GridField& g_boundary,
                                 const SolveConfig& cfg) {
  return solve_dirichlet(EllipticOperator::assemble(a), f, g_boundary, cfg);
}

}  // namespace bvm
