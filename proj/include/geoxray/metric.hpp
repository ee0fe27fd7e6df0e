// Isothermal disk metrics ds^2 = e^{2*lambda}(dx^2 + dy^2): analytic presets
// (flat, constant curvature, Gaussian bump) and tabulated lambda via tensor
// cubic B-splines. Supplies the derivative jet needed by frames, curvature,
// and curvature gradients.
#pragma once

#include "core.hpp"

namespace geoxray {

// lambda and the derivative combinations consumed downstream.
struct MetricJet {
  double lam = 0, lx = 0, ly = 0;        // lambda, d/dx, d/dy
  double lxx = 0, lxy = 0, lyy = 0;      // second derivatives
  double lap = 0, lapx = 0, lapy = 0;    // laplacian(lambda) and its gradient
};

// Tensor-product interpolating cubic B-spline on a uniform square grid.
// Coefficients solved by separable tridiagonal collocation with linear
// end extrapolation (ghost c_{-1} = 2c_0 - c_1). C^2 evaluation, analytic
// piecewise derivatives through third order.
class Bspline2 {
 public:
  Bspline2() = default;
  Bspline2(std::vector<double> f, int nx, int ny, double half_width)
      : nx_(nx), ny_(ny), L_(half_width) {
    if (nx < 4 || ny < 4) throw config_error("spline table needs at least 4x4 samples");
    if (int64_t(nx) * ny != int64_t(f.size())) throw config_error("spline table size mismatch");
    hx_ = 2.0 * L_ / (nx_ - 1);
    hy_ = 2.0 * L_ / (ny_ - 1);
    // rows (x direction), then columns (y direction)
    std::vector<double> tmp(f.size());
    std::vector<double> line(std::max(nx_, ny_)), out(std::max(nx_, ny_));
    for (int j = 0; j < ny_; ++j) {
      solve_line(&f[size_t(j) * nx_], 1, nx_, out.data());
      std::copy(out.begin(), out.begin() + nx_, tmp.begin() + size_t(j) * nx_);
    }
    c_.assign(size_t(nx_ + 2) * (ny_ + 2), 0.0);
    std::vector<double> col(ny_);
    for (int i = 0; i < nx_; ++i) {
      for (int j = 0; j < ny_; ++j) line[j] = tmp[size_t(j) * nx_ + i];
      solve_line(line.data(), 1, ny_, out.data());
      for (int j = 0; j < ny_; ++j) cref(i, j) = out[j];
    }
    // ghost pads, both axes
    for (int j = 0; j < ny_; ++j) {
      cref(-1, j) = 2 * cref(0, j) - cref(1, j);
      cref(nx_, j) = 2 * cref(nx_ - 1, j) - cref(nx_ - 2, j);
    }
    for (int i = -1; i <= nx_; ++i) {
      cref(i, -1) = 2 * cref(i, 0) - cref(i, 1);
      cref(i, ny_) = 2 * cref(i, ny_ - 1) - cref(i, ny_ - 2);
    }
  }

  double half_width() const { return L_; }

  // mixed partial d^(dx+dy)/dx^dx dy^dy, dx,dy in 0..3
  double eval(double x, double y, int dx, int dy) const {
    double gx = (x + L_) / hx_, gy = (y + L_) / hy_;
    int i0 = std::clamp(int(std::floor(gx)), 0, nx_ - 2);
    int j0 = std::clamp(int(std::floor(gy)), 0, ny_ - 2);
    auto bx = basis(gx - i0, dx), by = basis(gy - j0, dy);
    double sx = std::pow(1.0 / hx_, dx), sy = std::pow(1.0 / hy_, dy);
    double acc = 0;
    for (int b = 0; b < 4; ++b) {
      double row = 0;
      for (int a = 0; a < 4; ++a) row += bx[a] * cconst(i0 - 1 + a, j0 - 1 + b);
      acc += by[b] * row;
    }
    return acc * sx * sy;
  }

 private:
  int nx_ = 0, ny_ = 0;
  double L_ = 1, hx_ = 1, hy_ = 1;
  std::vector<double> c_;  // (ny_+2) x (nx_+2), ghost border of 1

  double& cref(int i, int j) { return c_[size_t(j + 1) * (nx_ + 2) + (i + 1)]; }
  double cconst(int i, int j) const { return c_[size_t(j + 1) * (nx_ + 2) + (i + 1)]; }

  // Tridiagonal collocation (1/6, 2/3, 1/6) with identity end rows.
  static void solve_line(const double* f, int stride, int n, double* out) {
    std::vector<double> diag(n, 2.0 / 3.0), rhs(n);
    for (int i = 0; i < n; ++i) rhs[i] = f[i * stride];
    diag[0] = diag[n - 1] = 1.0;
    std::vector<double> upper(n, 1.0 / 6.0);
    upper[0] = 0.0;
    // Thomas sweep; sub-diagonal is 1/6 except row n-1 where it is 0.
    for (int i = 1; i < n; ++i) {
      double sub = (i == n - 1) ? 0.0 : 1.0 / 6.0;
      double m = sub / diag[i - 1];
      diag[i] -= m * upper[i - 1];
      rhs[i] -= m * rhs[i - 1];
    }
    out[n - 1] = rhs[n - 1] / diag[n - 1];
    for (int i = n - 2; i >= 0; --i) out[i] = (rhs[i] - upper[i] * out[i + 1]) / diag[i];
  }

  static std::array<double, 4> basis(double u, int order) {
    switch (order) {
      case 0:
        return {(1 - u) * (1 - u) * (1 - u) / 6.0, (3 * u * u * u - 6 * u * u + 4) / 6.0,
                (-3 * u * u * u + 3 * u * u + 3 * u + 1) / 6.0, u * u * u / 6.0};
      case 1:
        return {-(1 - u) * (1 - u) / 2.0, (3 * u * u - 4 * u) / 2.0,
                (-3 * u * u + 2 * u + 1) / 2.0, u * u / 2.0};
      case 2:
        return {1 - u, 3 * u - 2, 1 - 3 * u, u};
      case 3:
        return {-1.0, 3.0, -3.0, 1.0};
      default:
        throw numeric_error("spline derivative order out of range");
    }
  }
};

class IsothermalMetric {
 public:
  enum class Kind { euclidean, constant_curvature, bump, tabulated };

  static IsothermalMetric euclidean(double R = 1.0) {
    IsothermalMetric m;
    m.kind_ = Kind::euclidean;
    m.R_ = R;
    return m;
  }
  // lambda = ln(2/(1 + kappa0 r^2)); Gaussian curvature kappa0 everywhere.
  static IsothermalMetric constant_curvature(double kappa0, double R) {
    if (kappa0 < 0 && R * R >= 1.0 / -kappa0)
      throw config_error("hyperbolic disk radius must satisfy R < 1/sqrt(-kappa)");
    IsothermalMetric m;
    m.kind_ = Kind::constant_curvature;
    m.R_ = R;
    m.k0_ = kappa0;
    return m;
  }
  // lambda = amp * exp(-|p-p0|^2 / (2 sigma^2)): analytic curvature bump.
  static IsothermalMetric gaussian_bump(double amp, double sigma, double x0 = 0.15,
                                        double y0 = -0.1, double R = 1.0) {
    IsothermalMetric m;
    m.kind_ = Kind::bump;
    m.R_ = R;
    m.amp_ = amp;
    m.sig_ = sigma;
    m.x0_ = x0;
    m.y0_ = y0;
    return m;
  }
  // Table spans [-half_width, half_width]^2; the metric disk radius is
  // half_width / 1.08 so interpolation stencils never leave the table.
  static IsothermalMetric tabulated(std::vector<double> lam, int nx, int ny, double half_width) {
    IsothermalMetric m;
    m.kind_ = Kind::tabulated;
    m.spline_ = Bspline2(std::move(lam), nx, ny, half_width);
    m.R_ = half_width / 1.08;
    return m;
  }

  Kind kind() const { return kind_; }
  double radius() const { return R_; }

  MetricJet jet(double x, double y) const {
    MetricJet j;
    switch (kind_) {
      case Kind::euclidean:
        return j;
      case Kind::constant_curvature: {
        double r2 = x * x + y * y, q = 1.0 + k0_ * r2;
        if (q <= 0) throw numeric_error("constant-curvature factor singular inside table");
        j.lam = std::log(2.0 / q);
        j.lx = -2.0 * k0_ * x / q;
        j.ly = -2.0 * k0_ * y / q;
        j.lxx = -2.0 * k0_ / q + 4.0 * k0_ * k0_ * x * x / (q * q);
        j.lxy = 4.0 * k0_ * k0_ * x * y / (q * q);
        j.lyy = -2.0 * k0_ / q + 4.0 * k0_ * k0_ * y * y / (q * q);
        j.lap = -4.0 * k0_ / (q * q);
        j.lapx = 16.0 * k0_ * k0_ * x / (q * q * q);
        j.lapy = 16.0 * k0_ * k0_ * y / (q * q * q);
        return j;
      }
      case Kind::bump: {
        double dx = x - x0_, dy = y - y0_, s2 = sig_ * sig_;
        double rho2 = dx * dx + dy * dy;
        double G = amp_ * std::exp(-rho2 / (2 * s2));
        j.lam = G;
        j.lx = -dx / s2 * G;
        j.ly = -dy / s2 * G;
        j.lxx = G * (dx * dx / (s2 * s2) - 1.0 / s2);
        j.lxy = G * dx * dy / (s2 * s2);
        j.lyy = G * (dy * dy / (s2 * s2) - 1.0 / s2);
        j.lap = G * (rho2 / (s2 * s2) - 2.0 / s2);
        j.lapx = G * dx * (4.0 / (s2 * s2) - rho2 / (s2 * s2 * s2));
        j.lapy = G * dy * (4.0 / (s2 * s2) - rho2 / (s2 * s2 * s2));
        return j;
      }
      case Kind::tabulated: {
        j.lam = spline_.eval(x, y, 0, 0);
        j.lx = spline_.eval(x, y, 1, 0);
        j.ly = spline_.eval(x, y, 0, 1);
        j.lxx = spline_.eval(x, y, 2, 0);
        j.lxy = spline_.eval(x, y, 1, 1);
        j.lyy = spline_.eval(x, y, 0, 2);
        j.lap = j.lxx + j.lyy;
        j.lapx = spline_.eval(x, y, 3, 0) + spline_.eval(x, y, 1, 2);
        j.lapy = spline_.eval(x, y, 2, 1) + spline_.eval(x, y, 0, 3);
        return j;
      }
    }
    return j;
  }

  double lambda(double x, double y) const { return jet(x, y).lam; }
  double conf(double x, double y) const { return std::exp(jet(x, y).lam); }

  // Gaussian curvature kappa = -e^{-2 lambda} laplacian(lambda).
  double curvature(double x, double y) const {
    require_in_disk(x, y);
    MetricJet j = jet(x, y);
    return -std::exp(-2 * j.lam) * j.lap;
  }
  // Chart gradient of kappa (d kappa/dx, d kappa/dy).
  std::array<double, 2> curvature_grad(double x, double y) const {
    MetricJet j = jet(x, y);
    double e = std::exp(-2 * j.lam);
    return {e * (2 * j.lx * j.lap - j.lapx), e * (2 * j.ly * j.lap - j.lapy)};
  }
  // |d kappa|_g = e^{-lambda} |chart grad kappa|
  double dkappa_norm(double x, double y) const {
    MetricJet j = jet(x, y);
    double e = std::exp(-2 * j.lam);
    double kx = e * (2 * j.lx * j.lap - j.lapx), ky = e * (2 * j.ly * j.lap - j.lapy);
    return std::exp(-j.lam) * std::hypot(kx, ky);
  }

  bool in_disk(double x, double y, double slack = 1e-12) const {
    return x * x + y * y <= R_ * R_ * (1.0 + slack);
  }
  void require_in_disk(double x, double y) const {
    if (!in_disk(x, y, 1e-9)) throw config_error("chart point outside the disk");
  }

 private:
  Kind kind_ = Kind::euclidean;
  double R_ = 1.0;
  double k0_ = 0.0;                              // constant_curvature
  double amp_ = 0.0, sig_ = 1.0, x0_ = 0, y0_ = 0;  // bump
  Bspline2 spline_;                              // tabulated
};

// Unit phase point on SM in chart coordinates.
struct PhasePoint {
  double x = 0, y = 0, th = 0;
};

// Coefficients of the canonical frame in the (d/dx, d/dy, d/dtheta) basis:
//   X       = e^{-lam} (cos th, sin th, -lx sin th + ly cos th)
//   Xperp   = [X, V] = e^{-lam} (sin th, -cos th, lx cos th + ly sin th)
//   V       = (0, 0, 1)
struct FrameCoeffs {
  std::array<double, 3> X, Xperp, V;
};

inline FrameCoeffs frame_coefficients(const IsothermalMetric& m, const PhasePoint& q) {
  MetricJet j = m.jet(q.x, q.y);
  double e = std::exp(-j.lam), c = std::cos(q.th), s = std::sin(q.th);
  FrameCoeffs f;
  f.X = {e * c, e * s, e * (-j.lx * s + j.ly * c)};
  f.Xperp = {e * s, -e * c, e * (j.lx * c + j.ly * s)};
  f.V = {0, 0, 1};
  return f;
}

// Xperp applied to a fiber-independent function with chart gradient (gx, gy).
inline double xperp_scalar(const MetricJet& j, double th, double gx, double gy) {
  return std::exp(-j.lam) * (std::sin(th) * gx - std::cos(th) * gy);
}

}  // namespace geoxray
