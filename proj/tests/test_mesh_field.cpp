#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "bvm_uq/gaussian_prior.hpp"
#include "bvm_uq/mesh_field.hpp"
#include "oracles.hpp"

using namespace bvm;
using Catch::Approx;

TEST_CASE("grid geometry and node ordering") {
  const Grid g(8);
  CHECK(g.size() == 81);
  CHECK(g.spacing() * g.cells() == 1.0);
  CHECK(g.coord(8) == 1.0);
  CHECK(g.index(3, 2) == 2u * 9u + 3u);
  CHECK(g.on_boundary(0, 4));
  CHECK_FALSE(g.on_boundary(4, 4));
  CHECK_THROWS_AS(Grid(3), DomainError);

  double total = 0.0;
  for (int iy = 0; iy <= 8; ++iy) {
    for (int ix = 0; ix <= 8; ++ix) total += g.weight(ix, iy);
  }
  CHECK(total == Approx(1.0).epsilon(1e-15));
  CHECK(g.weight(0, 0) == Approx(g.weight(4, 4) / 4));
  CHECK(g.weight(0, 4) == Approx(g.weight(4, 4) / 2));
}

TEST_CASE("inner product: constants, normalization, orthogonality") {
  const Grid g(64);
  const GridField one(g, 1.0);
  CHECK(inner_product(one, one) == Approx(1.0).epsilon(1e-14));

  const GridField e11 = eigenfunction(1, 1, g);
  const GridField e21 = eigenfunction(2, 1, g);
  const double h2 = g.spacing() * g.spacing();
  CHECK(std::abs(inner_product(e11, e11) - 1.0) <= h2);
  CHECK(std::abs(inner_product(e11, e21)) <= h2);

  const GridField other(Grid(32), 1.0);
  CHECK_THROWS_AS(inner_product(one, other), DimensionError);
}

TEST_CASE("inner product is exact for bilinear data and symmetric/bilinear") {
  const Grid g(16);
  const GridField bil = GridField::from_function(g, [](double x, double y) { return 1.0 + 2.0 * x - y + 3.0 * x * y; });
  CHECK(inner_product(bil, GridField(g, 1.0)) == Approx(1.0 + 1.0 - 0.5 + 0.75).epsilon(1e-14));

  const GridField a = oracle::random_smooth(g, 1, 4, false);
  const GridField b = oracle::random_smooth(g, 2, 4, false);
  const GridField c = oracle::random_smooth(g, 3, 4, false);
  CHECK(inner_product(a, b) == Approx(inner_product(b, a)).epsilon(1e-14));
  CHECK(inner_product(2.0 * a + c, b) == Approx(2.0 * inner_product(a, b) + inner_product(c, b)).epsilon(1e-12));
}

TEST_CASE("inner product converges at second order for smooth integrands") {
  auto err = [](int m) {
    const Grid g(m);
    const GridField f = GridField::from_function(
        g, [](double x, double y) { return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y) * std::exp(x); });
    // integral of e^x sin(pi x) over [0,1] = pi (1 + e) / (1 + pi^2)
    const double ix = std::numbers::pi * (1.0 + std::numbers::e) / (1.0 + std::numbers::pi * std::numbers::pi);
    return std::abs(inner_product(f, GridField(g, 1.0)) - ix * 2.0 / std::numbers::pi);
  };
  const double ratio = err(32) / err(64);
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("synthesize") {
  const Grid g(16);
  CHECK(synthesize(SpectralVector(4), g).max_abs() == 0.0);

  SpectralVector v(4);
  v(1, 1) = 1.0;
  const GridField f = synthesize(v, g);
  const GridField e = GridField::from_function(
      g, [](double x, double y) { return 2.0 * std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y); });
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == Approx(e[i]).margin(1e-14));

  CHECK_THROWS_AS(synthesize(SpectralVector(17), g), AliasingError);
}

TEST_CASE("analyze inverts synthesize for J <= m/2") {
  const Grid g(32);
  SpectralVector v(16);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  for (std::size_t p = 0; p < v.size(); ++p) v[p] = n01(rng);
  const SpectralVector back = analyze(synthesize(v, g), 16);
  for (std::size_t p = 0; p < v.size(); ++p) CHECK(std::abs(back[p] - v[p]) <= 1e-10);
}

TEST_CASE("analyze picks out a single mode") {
  const Grid g(64);
  const SpectralVector c = analyze(eigenfunction(2, 3, g), 8);
  for (int j = 1; j <= 8; ++j) {
    for (int k = 1; k <= 8; ++k) {
      if (j == 2 && k == 3) {
        CHECK(c(j, k) == Approx(1.0).epsilon(1e-12));
      } else {
        CHECK(std::abs(c(j, k)) <= 1e-8);
      }
    }
  }
  CHECK(analyze(GridField(g), 8).norm() == 0.0);

  const GridField a = oracle::random_smooth(g, 4);
  const GridField b = oracle::random_smooth(g, 5);
  const SpectralVector sum = analyze(a + b, 8);
  const SpectralVector sa = analyze(a, 8), sb = analyze(b, 8);
  for (std::size_t p = 0; p < sum.size(); ++p) CHECK(std::abs(sum[p] - sa[p] - sb[p]) <= 1e-12);
}

TEST_CASE("Parseval for a band-limited field") {
  const Grid g(64);
  SpectralVector v(6);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  for (std::size_t p = 0; p < v.size(); ++p) v[p] = n01(rng);
  const GridField f = synthesize(v, g);
  const SpectralVector c = analyze(f, 32);
  CHECK(l2_norm(f) * l2_norm(f) == Approx(c.norm() * c.norm()).epsilon(1e-10));
}

TEST_CASE("bump functional") {
  CHECK(bump_psi(0.5, 0.4) == Approx(oracle::kBumpCenter).epsilon(1e-15));
  CHECK(bump_psi(0.3, 0.4) == 0.0);
  CHECK(bump_psi(0.375, 0.4) == 0.0);
  CHECK(bump_psi(0.5, 0.2) == 0.0);
  CHECK(bump_psi(0.37505, 0.4) == 0.0);  // exponent below -700
  CHECK(bump_psi(0.3751, 0.4) > 0.0);

  const Grid g(64);
  const GridField psi = eval_bump_psi(g);
  for (int iy = 0; iy <= 64; ++iy) {
    for (int ix = 0; ix <= 64; ++ix) {
      const double x = g.coord(ix), y = g.coord(iy);
      const bool inside = x > 0.375 && x < 0.625 && y > 0.2 && y < 0.6;
      if (!inside) CHECK(psi(ix, iy) == 0.0);
      CHECK((psi(ix, iy) == 0.0 || psi(ix, iy) >= 1e-300));
    }
  }
  // Energy of the bump in modes <= 16 at m = 64.
  const double total = l2_norm(psi);
  const double low = analyze(psi, 16).norm();
  CHECK(low * low / (total * total) >= 0.99);
}

TEST_CASE("field and spectral CSV round trip") {
  const Grid g(8);
  const GridField f = oracle::random_smooth(g, 9, 4, false);
  std::stringstream ss;
  write_csv(ss, f);
  const GridField back = read_grid_field_csv(ss, g);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(back[i] == f[i]);

  SpectralVector v(3);
  v(2, 3) = -1.25;
  v(1, 1) = 0.1;
  std::stringstream sv;
  write_csv(sv, v);
  CHECK(read_spectral_csv(sv, 3) == v);

  std::stringstream bad("ix,iy,value\n0,0\n");
  CHECK_THROWS_AS(read_grid_field_csv(bad, g), InputError);
  std::stringstream wrong_header("a,b,c\n");
  CHECK_THROWS_AS(read_spectral_csv(wrong_header, 3), InputError);
}

TEST_CASE("field construction errors") {
  const Grid g(8);
  CHECK_THROWS_AS(GridField(g, std::vector<double>(10, 0.0)), DimensionError);
  CHECK_THROWS_AS(SpectralVector(0), DomainError);
  CHECK_THROWS_AS(SpectralVector(2, std::vector<double>(3, 0.0)), DimensionError);
  GridField a(g), b(Grid(16));
  CHECK_THROWS_AS(a += b, DimensionError);
}
