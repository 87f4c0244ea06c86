#pragma once

// Uniform node grids on the unit square, grid functions, trapezoid quadrature
// and the Dirichlet-sine eigenbasis e_jk(x, y) = 2 sin(j pi x) sin(k pi y).

#include <cmath>
#include <cstddef>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bvm_uq/errors.hpp"

namespace bvm {

/// (m+1) x (m+1) node lattice over [0,1]^2 with spacing h = 1/m.
class Grid {
 public:
  static constexpr int kMinCells = 4;

  Grid() = default;
  explicit Grid(int m) : m_(m) {
    if (m < kMinCells) {
      throw DomainError("grid needs at least " + std::to_string(kMinCells) +
                        " cells per side, got " + std::to_string(m));
    }
  }

  int cells() const noexcept { return m_; }
  int nodes_per_side() const noexcept { return m_ + 1; }
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(m_ + 1) * static_cast<std::size_t>(m_ + 1);
  }
  double spacing() const noexcept { return 1.0 / m_; }
  // i/m rather than i*h so that the last node sits exactly at 1.
  double coord(int i) const noexcept { return static_cast<double>(i) / m_; }
  std::size_t index(int ix, int iy) const noexcept {
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(m_ + 1) +
           static_cast<std::size_t>(ix);
  }
  bool on_boundary(int ix, int iy) const noexcept {
    return ix == 0 || iy == 0 || ix == m_ || iy == m_;
  }

  /// Trapezoid weight of node (ix, iy): h^2 inside, h^2/2 on edges, h^2/4 at corners.
  double weight(int ix, int iy) const noexcept {
    const double h = spacing();
    double w = h * h;
    if (ix == 0 || ix == m_) w *= 0.5;
    if (iy == 0 || iy == m_) w *= 0.5;
    return w;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int m_ = kMinCells;
};

/// Real values on the nodes of a Grid, row-major: index = iy*(m+1) + ix.
class GridField {
 public:
  GridField() = default;
  explicit GridField(const Grid& grid, double fill = 0.0) : grid_(grid), values_(grid.size(), fill) {}
  GridField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw DimensionError("field has " + std::to_string(values_.size()) + " values, grid needs " +
                           std::to_string(grid_.size()));
    }
  }

  /// Samples f(x, y) at every node.
  template <class F>
  static GridField from_function(const Grid& grid, F&& f) {
    GridField out(grid);
    const int n = grid.nodes_per_side();
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        out(ix, iy) = f(grid.coord(ix), grid.coord(iy));
      }
    }
    return out;
  }

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(int ix, int iy) noexcept { return values_[grid_.index(ix, iy)]; }
  double operator()(int ix, int iy) const noexcept { return values_[grid_.index(ix, iy)]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double max_abs() const noexcept {
    double out = 0.0;
    for (double v : values_) out = std::max(out, std::abs(v));
    return out;
  }
  double min() const noexcept {
    double out = values_.empty() ? 0.0 : values_.front();
    for (double v : values_) out = std::min(out, v);
    return out;
  }
  bool all_finite() const noexcept {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  GridField& operator+=(const GridField& other) {
    check_same_grid(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }
  GridField& operator-=(const GridField& other) {
    check_same_grid(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
  }
  GridField& operator*=(double s) noexcept {
    for (double& v : values_) v *= s;
    return *this;
  }
  friend GridField operator+(GridField a, const GridField& b) { return a += b; }
  friend GridField operator-(GridField a, const GridField& b) { return a -= b; }
  friend GridField operator*(double s, GridField a) { return a *= s; }
  friend GridField operator*(GridField a, double s) { return a *= s; }

  void check_same_grid(const GridField& other) const {
    if (!(grid_ == other.grid_)) {
      throw DimensionError("grid mismatch: m=" + std::to_string(grid_.cells()) + " vs m=" +
                           std::to_string(other.grid_.cells()));
    }
  }

 private:
  Grid grid_;
  std::vector<double> values_;
};

/// Coefficients in the truncated sine basis; entry (j, k), 1 <= j,k <= J, multiplies e_jk.
class SpectralVector {
 public:
  SpectralVector() = default;
  explicit SpectralVector(int J) : J_(J), coeffs_(static_cast<std::size_t>(J) * J, 0.0) {
    if (J < 1) throw DomainError("spectral truncation must be positive");
  }
  SpectralVector(int J, std::vector<double> coeffs) : J_(J), coeffs_(std::move(coeffs)) {
    if (J < 1) throw DomainError("spectral truncation must be positive");
    if (coeffs_.size() != static_cast<std::size_t>(J) * J) {
      throw DimensionError("spectral vector needs J^2 = " + std::to_string(J * J) + " coefficients");
    }
  }

  int truncation() const noexcept { return J_; }
  std::size_t size() const noexcept { return coeffs_.size(); }
  std::span<const double> coeffs() const noexcept { return coeffs_; }
  std::span<double> coeffs() noexcept { return coeffs_; }

  /// Flat position of mode (j, k).
  std::size_t flat(int j, int k) const noexcept {
    return static_cast<std::size_t>(j - 1) * J_ + static_cast<std::size_t>(k - 1);
  }
  /// Mode (j, k) of a flat position.
  std::pair<int, int> mode(std::size_t p) const noexcept {
    return {static_cast<int>(p / J_) + 1, static_cast<int>(p % J_) + 1};
  }
  double& operator()(int j, int k) noexcept { return coeffs_[flat(j, k)]; }
  double operator()(int j, int k) const noexcept { return coeffs_[flat(j, k)]; }
  double& operator[](std::size_t p) noexcept { return coeffs_[p]; }
  double operator[](std::size_t p) const noexcept { return coeffs_[p]; }

  void check_same_truncation(const SpectralVector& other) const {
    if (J_ != other.J_) {
      throw DimensionError("truncation mismatch: J=" + std::to_string(J_) + " vs J=" +
                           std::to_string(other.J_));
    }
  }

  double dot(const SpectralVector& other) const {
    check_same_truncation(other);
    double s = 0.0;
    for (std::size_t p = 0; p < coeffs_.size(); ++p) s += coeffs_[p] * other.coeffs_[p];
    return s;
  }
  double norm() const noexcept {
    double s = 0.0;
    for (double c : coeffs_) s += c * c;
    return std::sqrt(s);
  }

  SpectralVector& operator+=(const SpectralVector& other) {
    check_same_truncation(other);
    for (std::size_t p = 0; p < coeffs_.size(); ++p) coeffs_[p] += other.coeffs_[p];
    return *this;
  }
  SpectralVector& operator*=(double s) noexcept {
    for (double& c : coeffs_) c *= s;
    return *this;
  }
  friend SpectralVector operator+(SpectralVector a, const SpectralVector& b) { return a += b; }
  friend SpectralVector operator*(double s, SpectralVector a) { return a *= s; }

  friend bool operator==(const SpectralVector&, const SpectralVector&) = default;

 private:
  int J_ = 1;
  std::vector<double> coeffs_ = std::vector<double>(1, 0.0);
};

/// Composite-trapezoid quadrature of f*g over [0,1]^2.
inline double inner_product(const GridField& f, const GridField& g) {
  f.check_same_grid(g);
  const Grid& grid = f.grid();
  const int n = grid.nodes_per_side();
  double s = 0.0;
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) s += grid.weight(ix, iy) * f(ix, iy) * g(ix, iy);
  }
  return s;
}

inline double l2_norm(const GridField& f) { return std::sqrt(inner_product(f, f)); }

namespace detail {

// table[(j-1)*(m+1) + i] = sin(j pi x_i), j = 1..J
inline std::vector<double> sine_table(const Grid& grid, int J) {
  const int n = grid.nodes_per_side();
  std::vector<double> table(static_cast<std::size_t>(J) * n);
  for (int j = 1; j <= J; ++j) {
    for (int i = 0; i < n; ++i) {
      // Exact zeros at both ends; sin(j*pi) would otherwise leave ~1e-16.
      table[static_cast<std::size_t>(j - 1) * n + i] =
          (i == 0 || i == n - 1) ? 0.0 : std::sin(j * std::numbers::pi * grid.coord(i));
    }
  }
  return table;
}

inline void check_truncation(int J, const Grid& grid) {
  if (J > grid.cells()) {
    throw AliasingError("truncation J=" + std::to_string(J) + " exceeds m=" +
                        std::to_string(grid.cells()) + "; sine modes would alias on the grid");
  }
}

}  // namespace detail

/// The field sum_{j,k<=J} v_jk e_jk at the grid nodes.
inline GridField synthesize(const SpectralVector& v, const Grid& grid) {
  const int J = v.truncation();
  detail::check_truncation(J, grid);
  const int n = grid.nodes_per_side();
  const auto S = detail::sine_table(grid, J);
  // Separable: first contract over k for each (j, iy), then over j.
  std::vector<double> partial(static_cast<std::size_t>(J) * n, 0.0);
  for (int j = 1; j <= J; ++j) {
    for (int k = 1; k <= J; ++k) {
      const double c = v(j, k);
      if (c == 0.0) continue;
      const double* sk = &S[static_cast<std::size_t>(k - 1) * n];
      double* row = &partial[static_cast<std::size_t>(j - 1) * n];
      for (int iy = 0; iy < n; ++iy) row[iy] += c * sk[iy];
    }
  }
  GridField out(grid);
  for (int iy = 0; iy < n; ++iy) {
    for (int j = 1; j <= J; ++j) {
      const double c = 2.0 * partial[static_cast<std::size_t>(j - 1) * n + iy];
      if (c == 0.0) continue;
      const double* sj = &S[static_cast<std::size_t>(j - 1) * n];
      for (int ix = 0; ix < n; ++ix) out(ix, iy) += c * sj[ix];
    }
  }
  return out;
}

/// Quadrature projections <f, e_jk> for j, k <= J.
inline SpectralVector analyze(const GridField& f, int J) {
  const Grid& grid = f.grid();
  detail::check_truncation(J, grid);
  const int n = grid.nodes_per_side();
  const auto S = detail::sine_table(grid, J);
  // Basis functions vanish on the boundary, so only interior weights h^2 contribute.
  const double h2 = grid.spacing() * grid.spacing();
  std::vector<double> partial(static_cast<std::size_t>(J) * n, 0.0);  // (j, iy)
  for (int iy = 1; iy < n - 1; ++iy) {
    for (int j = 1; j <= J; ++j) {
      const double* sj = &S[static_cast<std::size_t>(j - 1) * n];
      double s = 0.0;
      for (int ix = 1; ix < n - 1; ++ix) s += f(ix, iy) * sj[ix];
      partial[static_cast<std::size_t>(j - 1) * n + iy] = s;
    }
  }
  SpectralVector out(J);
  for (int j = 1; j <= J; ++j) {
    for (int k = 1; k <= J; ++k) {
      const double* sk = &S[static_cast<std::size_t>(k - 1) * n];
      const double* pj = &partial[static_cast<std::size_t>(j - 1) * n];
      double s = 0.0;
      for (int iy = 1; iy < n - 1; ++iy) s += pj[iy] * sk[iy];
      out(j, k) = 2.0 * h2 * s;
    }
  }
  return out;
}

/// Smooth bump exp{-[1/((8x-3)(5-8x)) + 1/((5y-1)(3-5y))]} on (3/8,5/8)x(1/5,3/5), zero elsewhere.
inline double bump_psi(double x, double y) noexcept {
  const double px = (8.0 * x - 3.0) * (5.0 - 8.0 * x);
  const double py = (5.0 * y - 1.0) * (3.0 - 5.0 * y);
  if (!(px > 0.0) || !(py > 0.0)) return 0.0;
  const double exponent = -(1.0 / px + 1.0 / py);
  if (exponent < -700.0) return 0.0;
  return std::exp(exponent);
}

inline GridField eval_bump_psi(const Grid& grid) { return GridField::from_function(grid, bump_psi); }

// CSV: `ix,iy,value` for fields, `j,k,coeff` for spectral vectors.

inline void write_csv(std::ostream& os, const GridField& f) {
  os.precision(17);
  os << "ix,iy,value\n";
  const int n = f.grid().nodes_per_side();
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) os << ix << ',' << iy << ',' << f(ix, iy) << '\n';
  }
}

inline void write_csv(std::ostream& os, const SpectralVector& v) {
  os.precision(17);
  os << "j,k,coeff\n";
  const int J = v.truncation();
  for (int j = 1; j <= J; ++j) {
    for (int k = 1; k <= J; ++k) os << j << ',' << k << ',' << v(j, k) << '\n';
  }
}

namespace detail {

inline void expect_header(std::istream& is, const std::string& header) {
  std::string line;
  if (!std::getline(is, line) || line != header) {
    throw InputError("expected CSV header '" + header + "', got '" + line + "'");
  }
}

template <class Row>
void read_triples(std::istream& is, Row&& row) {
  std::string line;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long a = 0, b = 0;
    double value = 0.0;
    char c1 = 0, c2 = 0;
    if (!(ls >> a >> c1 >> b >> c2 >> value) || c1 != ',' || c2 != ',') {
      throw InputError("malformed CSV row at line " + std::to_string(lineno));
    }
    row(a, b, value, lineno);
  }
}

}  // namespace detail

inline GridField read_grid_field_csv(std::istream& is, const Grid& grid) {
  detail::expect_header(is, "ix,iy,value");
  GridField out(grid);
  std::vector<char> seen(grid.size(), 0);
  const int n = grid.nodes_per_side();
  detail::read_triples(is, [&](long long ix, long long iy, double v, int lineno) {
    if (ix < 0 || iy < 0 || ix >= n || iy >= n) {
      throw InputError("node index out of range at line " + std::to_string(lineno));
    }
    out(static_cast<int>(ix), static_cast<int>(iy)) = v;
    seen[grid.index(static_cast<int>(ix), static_cast<int>(iy))] = 1;
  });
  for (char s : seen) {
    if (!s) throw InputError("field CSV does not cover every node");
  }
  return out;
}

inline SpectralVector read_spectral_csv(std::istream& is, int J) {
  detail::expect_header(is, "j,k,coeff");
  SpectralVector out(J);
  detail::read_triples(is, [&](long long j, long long k, double v, int lineno) {
    if (j < 1 || k < 1 || j > J || k > J) {
      throw InputError("mode index out of range at line " + std::to_string(lineno));
    }
    out(static_cast<int>(j), static_cast<int>(k)) = v;
  });
  return out;
}

}  // namespace bvm
