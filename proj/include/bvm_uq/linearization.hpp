#pragma once

// Linearization of the forward map at theta0:
//   I(h)   = -L_{a0}^{-1} [div(e^{theta0} h grad u0)]
//   I*(g)  = e^{theta0} grad u0 . grad L_{a0}^{-1} g
//   R(h)   = G(theta0 + h) - G(theta0) - I(h)
//
// The divergence term uses the same flux stencil as L_a. Summing that stencil by
// parts gives the discrete adjoint: at node n,
//   I*(g)_n = e^{theta0}_n / (2 w_n) * sum over faces f touching n of du0_f * dw_f,
// with w_n the trapezoid weight and d the difference across the face. Inside the
// square this averages forward and backward gradient products; on an edge only the
// inward face survives, a one-sided gradient. The identity <I h, g> = <h, I* g>
// then holds to solver tolerance.

#include "bvm_uq/elliptic_solver.hpp"
#include "bvm_uq/forward_model.hpp"
#include "bvm_uq/mesh_field.hpp"

namespace bvm {

/// theta0 together with a0 = conductivity(theta0) and u0 = forward(theta0), always
/// recomputed from theta0.
class LinearizationPoint {
 public:
  LinearizationPoint(GridField theta0, ProblemSpec spec)
      : theta0_(std::move(theta0)),
        spec_(std::move(spec)),
        a0_(conductivity(theta0_, spec_)),
        u0_(forward(theta0_, spec_)),
        op_(EllipticOperator::assemble(a0_)),
        exp_theta0_(theta0_.grid()) {
    for (std::size_t i = 0; i < theta0_.size(); ++i) exp_theta0_[i] = std::exp(theta0_[i]);
  }

  const GridField& theta0() const noexcept { return theta0_; }
  const GridField& a0() const noexcept { return a0_; }
  const GridField& u0() const noexcept { return u0_; }
  const ProblemSpec& spec() const noexcept { return spec_; }
  const EllipticOperator& op() const noexcept { return op_; }
  const GridField& exp_theta0() const noexcept { return exp_theta0_; }
  const Grid& grid() const noexcept { return theta0_.grid(); }

 private:
  GridField theta0_;
  ProblemSpec spec_;
  GridField a0_;
  GridField u0_;
  EllipticOperator op_;
  GridField exp_theta0_;
};

/// div(c grad u) at interior nodes with the flux stencil; c may change sign.
inline GridField flux_divergence(const GridField& c, const GridField& u) {
  return EllipticOperator::assemble_signed(c).apply(u);
}

inline GridField apply_score(const GridField& h, const LinearizationPoint& lp) {
  h.check_same_grid(lp.theta0());
  GridField c = h;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= lp.exp_theta0()[i];
  GridField w = solve_zero_dirichlet(lp.op(), flux_divergence(c, lp.u0()), lp.spec().solve);
  w *= -1.0;
  return w;
}

inline GridField apply_score_adjoint(const GridField& g, const LinearizationPoint& lp) {
  g.check_same_grid(lp.theta0());
  const GridField w = solve_zero_dirichlet(lp.op(), g, lp.spec().solve);
  const GridField& u0 = lp.u0();
  const Grid& grid = lp.grid();
  const int m = grid.cells();
  const int n = m + 1;
  GridField face_sum(grid);
  auto add_face = [&](int ax, int ay, int bx, int by) {
    const double p = (u0(bx, by) - u0(ax, ay)) * (w(bx, by) - w(ax, ay));
    face_sum(ax, ay) += p;
    face_sum(bx, by) += p;
  };
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < m; ++ix) add_face(ix, iy, ix + 1, iy);
  }
  for (int iy = 0; iy < m; ++iy) {
    for (int ix = 0; ix < n; ++ix) add_face(ix, iy, ix, iy + 1);
  }
  GridField out(grid);
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      out(ix, iy) = lp.exp_theta0()(ix, iy) * face_sum(ix, iy) / (2.0 * grid.weight(ix, iy));
    }
  }
  return out;
}

inline GridField remainder(const GridField& h, const LinearizationPoint& lp) {
  GridField shifted = lp.theta0() + h;
  GridField r = forward(shifted, lp.spec());
  r -= lp.u0();
  r -= apply_score(h, lp);
  return r;
}

}  // namespace bvm
