#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bvm_uq/linearization.hpp"
#include "oracles.hpp"

using namespace bvm;
using Catch::Approx;

namespace {

GridField scaled(const GridField& f, double target_sup) { return (target_sup / f.max_abs()) * f; }

LinearizationPoint smooth_point(int m, std::uint64_t seed) {
  const Grid g(m);
  return LinearizationPoint(0.5 * oracle::random_smooth(g, seed, 3, false), poisson_benchmark(g));
}

}  // namespace

TEST_CASE("linearization point is consistent with theta0") {
  const LinearizationPoint lp = smooth_point(16, 1);
  const GridField u = forward(lp.theta0(), lp.spec());
  for (std::size_t i = 0; i < u.size(); ++i) {
    CHECK(lp.u0()[i] == u[i]);
    CHECK(lp.a0()[i] == Approx(std::exp(lp.theta0()[i])));
  }
}

TEST_CASE("score operator is linear") {
  const LinearizationPoint lp = smooth_point(32, 2);
  const Grid& g = lp.grid();
  CHECK(apply_score(GridField(g), lp).max_abs() == 0.0);
  const GridField h1 = oracle::random_smooth(g, 3), h2 = oracle::random_smooth(g, 4);
  const GridField Ih1 = apply_score(h1, lp), Ih2 = apply_score(h2, lp);
  const GridField twice = apply_score(2.0 * h1, lp);
  for (std::size_t i = 0; i < Ih1.size(); ++i) CHECK(std::abs(twice[i] - 2.0 * Ih1[i]) <= 1e-10);
  const GridField comb = apply_score(0.3 * h1 - 1.7 * h2, lp);
  const GridField expected = 0.3 * Ih1 - 1.7 * Ih2;
  CHECK(l2_norm(comb - expected) <= 1e-8 * l2_norm(expected));
}

TEST_CASE("score operator matches a finite-difference derivative") {
  const LinearizationPoint lp = smooth_point(32, 5);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const GridField h = oracle::random_smooth(lp.grid(), 50 + s, 4, false);
    const GridField Ih = apply_score(h, lp);
    const GridField fd = oracle::fd_derivative(lp, h, 1e-4);
    CHECK(l2_norm(Ih - fd) <= 1e-6 * l2_norm(Ih));
  }
}

TEST_CASE("adjoint identity") {
  const LinearizationPoint lp = smooth_point(64, 6);
  const Grid& g = lp.grid();
  CHECK(apply_score_adjoint(GridField(g), lp).max_abs() == 0.0);
  for (std::uint64_t s = 0; s < 4; ++s) {
    const GridField h = oracle::random_smooth(g, 60 + s);
    const GridField w = oracle::random_smooth(g, 70 + s);
    const GridField Ih = apply_score(h, lp);
    const double lhs = inner_product(Ih, w);
    const double rhs = inner_product(h, apply_score_adjoint(w, lp));
    CHECK(std::abs(lhs - rhs) / (l2_norm(Ih) * l2_norm(w)) <= 1e-6);
  }
  // h not vanishing on the boundary: the discrete adjoint still pairs exactly.
  const GridField h = oracle::random_smooth(g, 80, 4, false);
  const GridField w = oracle::random_smooth(g, 81);
  const GridField Ih = apply_score(h, lp);
  CHECK(std::abs(inner_product(Ih, w) - inner_product(h, apply_score_adjoint(w, lp))) /
            (l2_norm(Ih) * l2_norm(w)) <=
        1e-6);
}

TEST_CASE("adjoint at theta0 = 0 approximates grad u0 . grad L^{-1} g") {
  auto rel_diff = [](int m) {
    const Grid g(m);
    const LinearizationPoint lp(GridField(g), poisson_benchmark(g));
    const GridField w = oracle::random_smooth(g, 90);
    const GridField adj = apply_score_adjoint(w, lp);
    const GridField v = solve_zero_dirichlet(lp.op(), w, lp.spec().solve);
    const GridField& u = lp.u0();
    const double inv2h = 0.5 * m;
    double diff = 0.0, norm = 0.0;
    for (int iy = 1; iy < m; ++iy) {
      for (int ix = 1; ix < m; ++ix) {
        const double ux = (u(ix + 1, iy) - u(ix - 1, iy)) * inv2h, uy = (u(ix, iy + 1) - u(ix, iy - 1)) * inv2h;
        const double vx = (v(ix + 1, iy) - v(ix - 1, iy)) * inv2h, vy = (v(ix, iy + 1) - v(ix, iy - 1)) * inv2h;
        const double centered = ux * vx + uy * vy;
        diff += std::pow(adj(ix, iy) - centered, 2);
        norm += centered * centered;
      }
    }
    return std::sqrt(diff / norm);
  };
  const double d32 = rel_diff(32), d64 = rel_diff(64);
  CHECK(d64 < 1e-2);
  CHECK(d32 / d64 > 3.0);
}

TEST_CASE("remainder is quadratic") {
  const LinearizationPoint lp = smooth_point(32, 7);
  CHECK(remainder(GridField(lp.grid()), lp).max_abs() <= 1e-12);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const GridField h = scaled(oracle::random_smooth(lp.grid(), 100 + s, 4, false), 0.1);
    const double r1 = l2_norm(remainder(h, lp));
    for (double t : {0.5, 0.25}) {
      const double rt = l2_norm(remainder(t * h, lp));
      CHECK(rt / r1 == Approx(t * t).epsilon(0.3));
    }
  }
}

TEST_CASE("remainder over sup-norm squared does not grow as h shrinks") {
  const LinearizationPoint lp = smooth_point(32, 8);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const GridField h = scaled(oracle::random_smooth(lp.grid(), 200 + s, 4, false), 0.2);
    const double big = l2_norm(remainder(h, lp)) / std::pow(h.max_abs(), 2);
    const GridField half = 0.5 * h;
    const double small = l2_norm(remainder(half, lp)) / std::pow(half.max_abs(), 2);
    CHECK(small <= 1.5 * big);
    CHECK(std::isfinite(big));
  }
}

TEST_CASE("grid mismatch is rejected") {
  const LinearizationPoint lp = smooth_point(16, 9);
  CHECK_THROWS_AS(apply_score(GridField(Grid(8)), lp), DimensionError);
  CHECK_THROWS_AS(apply_score_adjoint(GridField(Grid(8)), lp), DimensionError);
}
