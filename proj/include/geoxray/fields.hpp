// Sampled fields on the sphere bundle, the interior disk, and the boundary
// fan, plus the interpolation used to move between traces and grids.
#pragma once

#include "geodesic.hpp"

namespace geoxray {

// Field on SM sampled over Grid2 x uniform theta x nc components.
// Layout keeps the fiber (theta) contiguous for per-node FFTs.
struct SmField {
  Grid2 g;
  int nth = 0, nc = 1;
  std::vector<cplx> v;
  SmField() = default;
  SmField(Grid2 g_, int nth_, int nc_)
      : g(g_), nth(nth_), nc(nc_), v(size_t(g_.nodes()) * nth_ * nc_, cplx(0)) {}
  double theta(int it) const { return two_pi * it / nth; }
  size_t row(int ix, int iy, int c) const {
    return (size_t(iy) * g.nx + ix) * nc * nth + size_t(c) * nth;
  }
  cplx& at(int ix, int iy, int it, int c = 0) { return v[row(ix, iy, c) + it]; }
  cplx at(int ix, int iy, int it, int c = 0) const { return v[row(ix, iy, c) + it]; }
};

// Field on the interior disk (fiber-averaged / spatial quantities).
struct InteriorField {
  Grid2 g;
  int nc = 1;
  std::vector<cplx> v;
  InteriorField() = default;
  InteriorField(Grid2 g_, int nc_) : g(g_), nc(nc_), v(size_t(g_.nodes()) * nc_, cplx(0)) {}
  cplx& at(int ix, int iy, int c = 0) { return v[(size_t(iy) * g.nx + ix) * nc + c]; }
  cplx at(int ix, int iy, int c = 0) const { return v[(size_t(iy) * g.nx + ix) * nc + c]; }
};

// Field on the boundary fan (all of dSM; inward nodes are the data half).
struct BoundaryField {
  FanGrid fan;
  int nc = 1;
  std::vector<cplx> v;
  BoundaryField() = default;
  BoundaryField(FanGrid f, int nc_) : fan(f), nc(nc_), v(size_t(f.nodes()) * nc_, cplx(0)) {}
  cplx& at(int ib, int j, int c = 0) { return v[(size_t(ib) * fan.nomega + j) * nc + c]; }
  cplx at(int ib, int j, int c = 0) const { return v[(size_t(ib) * fan.nomega + j) * nc + c]; }
};

// Cubic interpolation of one boundary-field component over one half of the
// fan: periodic in beta, clamped in the recentred angle t = omega -/+ pi with
// zero extension beyond the tangential ends (data vanishes like mu there).
inline cplx fan_sample_half(const BoundaryField& f, int c, double beta, double t, bool inward) {
  if (!(t > -pi / 2 && t < pi / 2)) return cplx(0);
  const FanGrid& fan = f.fan;
  const int nh = fan.half_count();
  double jb = wrap_2pi(beta) / two_pi * fan.nbeta;
  double jt = (t + pi / 2) / two_pi * fan.nomega - 0.5;
  int ib0 = int(std::floor(jb)), it0 = int(std::floor(jt));
  auto wb = cubic_weights(jb - ib0);
  auto wt = cubic_weights(jt - it0);
  cplx acc(0);
  for (int a = -1; a <= 2; ++a) {
    int ib = ((ib0 + a) % fan.nbeta + fan.nbeta) % fan.nbeta;
    cplx rowv(0);
    for (int b = -1; b <= 2; ++b) {
      int k = it0 + b;
      if (k < 0 || k >= nh) continue;  // zero beyond tangency
      rowv += wt[b + 1] * f.at(ib, inward ? fan.inward_j(k) : fan.outward_j(k), c);
    }
    acc += wb[a + 1] * rowv;
  }
  return acc;
}

// Sample at a global boundary coordinate (beta, omega); the half is chosen
// by the sign of cos(omega).
inline cplx fan_sample(const BoundaryField& f, int c, double beta, double omega) {
  double cw = std::cos(omega);
  if (cw > 0) return fan_sample_half(f, c, beta, wrap_pm(omega), true);
  return fan_sample_half(f, c, beta, wrap_pm(omega - pi), false);
}

inline void fan_sample_vec(const BoundaryField& f, double beta, double omega, CVec& out) {
  out.resize(f.nc);
  for (int c = 0; c < f.nc; ++c) out[c] = fan_sample(f, c, beta, omega);
}

// ------------------------------------------------- SM field point sampler

// Bicubic in the chart, exact Fourier synthesis in theta. The fiber spectrum
// is precomputed once; only modes carrying energy are synthesized, so
// fiber-constant fields cost a single bicubic stencil per query.
struct SmSampler {
  Grid2 g;
  int nth = 0, nc = 1;
  std::vector<cplx> spec;  // same layout as SmField, theta slot = FFT bin
  std::vector<int> bins;   // active FFT bins
  std::vector<int> modes;  // matching signed modes

  explicit SmSampler(const SmField& f) : g(f.g), nth(f.nth), nc(f.nc), spec(f.v) {
    const size_t rows = size_t(g.nodes()) * nc;
    for (size_t r = 0; r < rows; ++r) fft_pow2(spec.data() + r * nth, nth, false);
    double scale = 1.0 / nth;
    for (auto& z : spec) z *= scale;
    std::vector<double> peak(nth, 0.0);
    double global = 0;
    for (size_t r = 0; r < rows; ++r)
      for (int k = 0; k < nth; ++k) {
        double a = std::abs(spec[r * nth + k]);
        peak[k] = std::max(peak[k], a);
        global = std::max(global, a);
      }
    for (int k = 0; k < nth; ++k)
      if (peak[k] > 1e-14 * std::max(global, 1e-300)) {
        bins.push_back(k);
        modes.push_back(dft_mode(k, nth));
      }
  }

  // bicubic weights/stencil for a chart point
  void stencil(double x, double y, int& ix0, int& iy0, std::array<double, 4>& wx,
               std::array<double, 4>& wy) const {
    double u = (x + g.R) / g.h, w = (y + g.R) / g.h;
    ix0 = std::clamp(int(std::floor(u)), 1, g.nx - 3);
    iy0 = std::clamp(int(std::floor(w)), 1, g.nx - 3);
    wx = cubic_weights(u - ix0);
    wy = cubic_weights(w - iy0);
  }

  void eval(double x, double y, double th, CVec& out) const {
    int ix0, iy0;
    std::array<double, 4> wx, wy;
    stencil(x, y, ix0, iy0, wx, wy);
    out.setZero(nc);
    for (size_t m = 0; m < bins.size(); ++m) {
      cplx phase = std::polar(1.0, modes[m] * th);
      int k = bins[m];
      for (int c = 0; c < nc; ++c) {
        cplx acc(0);
        for (int a = -1; a <= 2; ++a)
          for (int b = -1; b <= 2; ++b) {
            size_t r = (size_t(iy0 + b) * g.nx + (ix0 + a)) * nc + c;
            acc += wx[a + 1] * wy[b + 1] * spec[r * nth + k];
          }
        out[c] += acc * phase;
      }
    }
  }
};

// Bicubic point evaluation of an interior field component.
inline cplx interior_sample(const InteriorField& f, int c, double x, double y) {
  const Grid2& g = f.g;
  double u = (x + g.R) / g.h, w = (y + g.R) / g.h;
  int ix0 = std::clamp(int(std::floor(u)), 1, g.nx - 3);
  int iy0 = std::clamp(int(std::floor(w)), 1, g.nx - 3);
  auto wx = cubic_weights(u - ix0);
  auto wy = cubic_weights(w - iy0);
  cplx acc(0);
  for (int a = -1; a <= 2; ++a)
    for (int b = -1; b <= 2; ++b) acc += wx[a + 1] * wy[b + 1] * f.at(ix0 + a, iy0 + b, c);
  return acc;
}

// ------------------------------------------------------------ norms

// L2(M) norm with the area form e^{2 lambda} dx dy (trapezoid-in-mask).
inline double l2_interior(const IsothermalMetric& m, const InteriorField& f) {
  double acc = 0;
  for (int iy = 0; iy < f.g.nx; ++iy)
    for (int ix = 0; ix < f.g.nx; ++ix) {
      if (!f.g.inside(ix, iy)) continue;
      double w = std::exp(2 * m.lambda(f.g.x(ix), f.g.x(iy))) * f.g.h * f.g.h;
      for (int c = 0; c < f.nc; ++c) acc += w * std::norm(f.at(ix, iy, c));
    }
  return std::sqrt(acc);
}

inline double linf_interior(const InteriorField& f) {
  double acc = 0;
  for (int iy = 0; iy < f.g.nx; ++iy)
    for (int ix = 0; ix < f.g.nx; ++ix) {
      if (!f.g.inside(ix, iy)) continue;
      for (int c = 0; c < f.nc; ++c) acc = std::max(acc, std::abs(f.at(ix, iy, c)));
    }
  return acc;
}

}  // namespace geoxray
