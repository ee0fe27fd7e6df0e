// Fiberwise Fourier analysis: averages, mode projections, Hilbert transforms,
// and the raising/lowering ladder mu_{+/-} realized through closed forms with
// masked finite-difference d / dbar on the disk grid.
#pragma once

#include "transport.hpp"

namespace geoxray {

// ------------------------------------------------------------ fiber spectrum

// Per-node fiber Fourier coefficients c_k, |k| <= nth/2 - 1 (Nyquist carried
// but treated as unusable by the operators below). Layout mirrors SmField
// with the theta slot holding the FFT bin.
struct FiberSpectrum {
  Grid2 g;
  int nth = 0, nc = 1;
  std::vector<cplx> c;
  int kmax() const { return nth / 2 - 1; }
  size_t row(int ix, int iy, int comp) const {
    return (size_t(iy) * g.nx + ix) * nc * nth + size_t(comp) * nth;
  }
  cplx& at(int ix, int iy, int bin, int comp = 0) { return c[row(ix, iy, comp) + bin]; }
  cplx at(int ix, int iy, int bin, int comp = 0) const { return c[row(ix, iy, comp) + bin]; }
};

inline FiberSpectrum fiber_analyze(const SmField& f) {
  FiberSpectrum s;
  s.g = f.g;
  s.nth = f.nth;
  s.nc = f.nc;
  s.c = f.v;
  const size_t rows = size_t(f.g.nodes()) * f.nc;
  const double scale = 1.0 / f.nth;
  for (size_t r = 0; r < rows; ++r) {
    fft_pow2(s.c.data() + r * f.nth, f.nth, false);
    for (int k = 0; k < f.nth; ++k) s.c[r * f.nth + k] *= scale;
  }
  return s;
}

inline SmField fiber_synthesize(const FiberSpectrum& s) {
  SmField f(s.g, s.nth, s.nc);
  f.v = s.c;
  const size_t rows = size_t(s.g.nodes()) * s.nc;
  for (size_t r = 0; r < rows; ++r) {
    for (int k = 0; k < s.nth; ++k) f.v[r * s.nth + k] *= double(s.nth);
    fft_pow2(f.v.data() + r * s.nth, s.nth, true);
  }
  return f;
}

// ------------------------------------------------------- projections and H

// pi_0: fiber average per node.
inline InteriorField fiber_average(const SmField& u) {
  InteriorField out(u.g, u.nc);
  for (int iy = 0; iy < u.g.nx; ++iy)
    for (int ix = 0; ix < u.g.nx; ++ix)
      for (int c = 0; c < u.nc; ++c) {
        const cplx* row = u.v.data() + u.row(ix, iy, c);
        cplx acc(0);
        for (int it = 0; it < u.nth; ++it) acc += row[it];
        out.at(ix, iy, c) = acc / double(u.nth);
      }
  return out;
}

// Coefficient of e^{ik theta} per node (direct DFT; one mode only).
inline InteriorField mode_project(const SmField& u, int k) {
  if (std::abs(k) > u.nth / 2 - 1) throw config_error("mode outside the resolvable band");
  InteriorField out(u.g, u.nc);
  std::vector<cplx> ph(u.nth);
  for (int it = 0; it < u.nth; ++it) ph[it] = std::polar(1.0 / u.nth, -k * u.theta(it));
  for (int iy = 0; iy < u.g.nx; ++iy)
    for (int ix = 0; ix < u.g.nx; ++ix)
      for (int c = 0; c < u.nc; ++c) {
        const cplx* row = u.v.data() + u.row(ix, iy, c);
        cplx acc(0);
        for (int it = 0; it < u.nth; ++it) acc += row[it] * ph[it];
        out.at(ix, iy, c) = acc;
      }
  return out;
}

// h(x, y) e^{ik theta} as a sphere-bundle field.
inline SmField mode_embed(const InteriorField& h, int k, int nth) {
  SmField u(h.g, nth, h.nc);
  for (int iy = 0; iy < h.g.nx; ++iy)
    for (int ix = 0; ix < h.g.nx; ++ix)
      for (int c = 0; c < h.nc; ++c) {
        cplx base = h.at(ix, iy, c);
        for (int it = 0; it < nth; ++it)
          u.at(ix, iy, it, c) = base * std::polar(1.0, k * u.theta(it));
      }
  return u;
}

enum class HilbertParity { full, even, odd };

namespace detail {

// In-place fiber multiplier row transform shared by both field kinds.
// Offset sample grids are fine: a diagonal multiplier commutes with the
// half-sample phase the offset introduces.
inline void hilbert_row(cplx* row, int n, HilbertParity p) {
  fft_pow2(row, n, false);
  for (int b = 0; b < n; ++b) {
    int m = dft_mode(b, n);
    if (m == n / 2) {
      row[b] = 0;  // ambiguous-parity Nyquist: zeroed to keep H skew-adjoint
      continue;
    }
    if (p == HilbertParity::even && (m & 1)) row[b] = 0;
    if (p == HilbertParity::odd && !(m & 1)) row[b] = 0;
    row[b] *= cplx(0, m > 0 ? -1.0 : (m < 0 ? 1.0 : 0.0));
  }
  fft_pow2(row, n, true);
}

}  // namespace detail

// Fiber Hilbert transform: multiplier -i sgn(k). The parity variants apply H
// after projecting the input onto even/odd fiber modes.
inline SmField hilbert(const SmField& u, HilbertParity p = HilbertParity::full) {
  SmField out = u;
  const size_t rows = size_t(u.g.nodes()) * u.nc;
  for (size_t r = 0; r < rows; ++r) detail::hilbert_row(out.v.data() + r * u.nth, u.nth, p);
  return out;
}

// Same transform on a boundary fan: at fixed beta the omega row is the fiber.
inline BoundaryField hilbert(const BoundaryField& u, HilbertParity p = HilbertParity::full) {
  BoundaryField out = u;
  std::vector<cplx> row(u.fan.nomega);
  for (int ib = 0; ib < u.fan.nbeta; ++ib)
    for (int c = 0; c < u.nc; ++c) {
      for (int j = 0; j < u.fan.nomega; ++j) row[j] = out.at(ib, j, c);
      detail::hilbert_row(row.data(), u.fan.nomega, p);
      for (int j = 0; j < u.fan.nomega; ++j) out.at(ib, j, c) = row[j];
    }
  return out;
}

// --------------------------------------------------- masked derivatives

struct StencilQuality {
  std::int64_t centered = 0, onesided = 0, degraded = 0;
  std::int64_t total() const { return centered + onesided + degraded; }
  double degraded_frac() const { return total() ? double(degraded) / total() : 0.0; }
  void merge(const StencilQuality& o) {
    centered += o.centered;
    onesided += o.onesided;
    degraded += o.degraded;
  }
};

namespace detail {

// d/dx or d/dy of one component on the masked grid. Fourth-order centered in
// the interior, third-order four-point stencils near the rim, lower order
// (counted as degraded) where the mask pinches to fewer nodes.
inline void mask_derivative(const InteriorField& f, int comp, int axis, InteriorField& out,
                            int out_comp, StencilQuality& q) {
  const Grid2& g = f.g;
  const double h = g.h;
  const int sx = axis == 0 ? 1 : 0, sy = axis == 0 ? 0 : 1;
  for (int iy = 0; iy < g.nx; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      if (!g.inside(ix, iy)) continue;
      auto in = [&](int o) {
        int jx = ix + o * sx, jy = iy + o * sy;
        return jx >= 0 && jx < g.nx && jy >= 0 && jy < g.nx && g.inside(jx, jy);
      };
      auto v = [&](int o) { return f.at(ix + o * sx, iy + o * sy, comp); };
      cplx d;
      if (in(-2) && in(-1) && in(1) && in(2)) {
        d = (v(-2) - 8.0 * v(-1) + 8.0 * v(1) - v(2)) / (12 * h);
        ++q.centered;
      } else if (in(-1) && in(1) && in(2)) {
        d = (-2.0 * v(-1) - 3.0 * v(0) + 6.0 * v(1) - v(2)) / (6 * h);
        ++q.onesided;
      } else if (in(-2) && in(-1) && in(1)) {
        d = (v(-2) - 6.0 * v(-1) + 3.0 * v(0) + 2.0 * v(1)) / (6 * h);
        ++q.onesided;
      } else if (in(1) && in(2) && in(3)) {
        d = (-11.0 * v(0) + 18.0 * v(1) - 9.0 * v(2) + 2.0 * v(3)) / (6 * h);
        ++q.onesided;
      } else if (in(-1) && in(-2) && in(-3)) {
        d = (11.0 * v(0) - 18.0 * v(-1) + 9.0 * v(-2) - 2.0 * v(-3)) / (6 * h);
        ++q.onesided;
      } else if (in(-1) && in(1)) {
        d = (v(1) - v(-1)) / (2 * h);
        ++q.degraded;
      } else if (in(1) && in(2)) {
        d = (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2 * h);
        ++q.degraded;
      } else if (in(-1) && in(-2)) {
        d = (3.0 * v(0) - 4.0 * v(-1) + v(-2)) / (2 * h);
        ++q.degraded;
      } else if (in(1)) {
        d = (v(1) - v(0)) / h;
        ++q.degraded;
      } else if (in(-1)) {
        d = (v(0) - v(-1)) / h;
        ++q.degraded;
      } else {
        d = 0;
        ++q.degraded;
      }
      out.at(ix, iy, out_comp) = d;
    }
}

}  // namespace detail

// Wirtinger derivatives of every component: d = (dx - i dy)/2, dbar = (dx + i dy)/2.
inline void wirtinger(const InteriorField& f, InteriorField& d, InteriorField& dbar,
                      StencilQuality* q = nullptr) {
  d = InteriorField(f.g, f.nc);
  dbar = InteriorField(f.g, f.nc);
  StencilQuality local;
  InteriorField gx(f.g, f.nc), gy(f.g, f.nc);
  for (int c = 0; c < f.nc; ++c) {
    detail::mask_derivative(f, c, 0, gx, c, local);
    detail::mask_derivative(f, c, 1, gy, c, local);
  }
  const cplx ih(0, 0.5);
  for (size_t i = 0; i < f.v.size(); ++i) {
    d.v[i] = 0.5 * gx.v[i] - ih * gy.v[i];
    dbar.v[i] = 0.5 * gx.v[i] + ih * gy.v[i];
  }
  if (q) q->merge(local);
}

// ------------------------------------------------------------- ladder mu_pm

// mu_{+/-} on an Omega_k coefficient field h (u = h e^{ik theta}), the
// closed forms
//   mu_- u = e^{-(1+k) lam} ( dbar(h e^{k lam}) + A_zbar h e^{k lam} ) e^{i(k-1) theta}
//   mu_+ u = ( e^{(k-1) lam} d(h e^{-k lam})  + e^{-lam} A_z h ) e^{i(k+1) theta}
// returning the Omega_{k + sign} coefficient.
inline InteriorField gk_apply(const IsothermalMetric& m, const MatrixConnection* A,
                              const InteriorField& h, int k, int sign,
                              StencilQuality* q = nullptr) {
  if (sign != 1 && sign != -1) throw config_error("ladder sign must be +1 or -1");
  const Grid2& g = h.g;
  const int nc = h.nc;
  if (A && A->n() != nc) throw config_error("connection size does not match field");

  std::vector<double> lam(size_t(g.nodes()), 0.0);
  for (int iy = 0; iy < g.nx; ++iy)
    for (int ix = 0; ix < g.nx; ++ix)
      if (g.inside(ix, iy)) lam[size_t(iy) * g.nx + ix] = m.lambda(g.x(ix), g.x(iy));

  // weighted copy h e^{+/- k lam} (zero outside the mask)
  InteriorField p(g, nc);
  const double kw = sign < 0 ? double(k) : double(-k);
  for (int iy = 0; iy < g.nx; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      if (!g.inside(ix, iy)) continue;
      double w = std::exp(kw * lam[size_t(iy) * g.nx + ix]);
      for (int c = 0; c < nc; ++c) p.at(ix, iy, c) = w * h.at(ix, iy, c);
    }

  InteriorField d, dbar;
  wirtinger(p, d, dbar, q);
  const InteriorField& dd = sign < 0 ? dbar : d;

  InteriorField out(g, nc);
  CMat Az, Azb;
  CVec hv(nc), tmp(nc);
  for (int iy = 0; iy < g.nx; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      if (!g.inside(ix, iy)) continue;
      double lv = lam[size_t(iy) * g.nx + ix];
      for (int c = 0; c < nc; ++c) hv[c] = h.at(ix, iy, c);
      if (sign < 0) {
        double pre = std::exp(-(1 + k) * lv), wl = std::exp(k * lv);
        for (int c = 0; c < nc; ++c) out.at(ix, iy, c) = pre * dd.at(ix, iy, c);
        if (A) {
          A->components(g.x(ix), g.x(iy), Az, Azb);
          tmp.noalias() = Azb * hv;
          for (int c = 0; c < nc; ++c) out.at(ix, iy, c) += pre * wl * tmp[c];
        }
      } else {
        double pre = std::exp((k - 1) * lv), em = std::exp(-lv);
        for (int c = 0; c < nc; ++c) out.at(ix, iy, c) = pre * dd.at(ix, iy, c);
        if (A) {
          A->components(g.x(ix), g.x(iy), Az, Azb);
          tmp.noalias() = Az * hv;
          for (int c = 0; c < nc; ++c) out.at(ix, iy, c) += em * tmp[c];
        }
      }
    }
  return out;
}

// ------------------------------------------- assembled first-order operators

// (X + A)u through the ladder: out_k = mu_+ u_{k-1} + mu_- u_{k+1}. Modes that
// would land on the Nyquist bin are dropped (band truncation).
inline SmField xplus_a_apply(const IsothermalMetric& m, const MatrixConnection* A,
                             const SmField& u, StencilQuality* q = nullptr) {
  FiberSpectrum s = fiber_analyze(u);
  FiberSpectrum o = s;
  std::fill(o.c.begin(), o.c.end(), cplx(0));
  const int km = s.kmax();
  InteriorField hk(u.g, u.nc);
  for (int k = -km; k <= km; ++k) {
    int bin = (k + u.nth) % u.nth;
    for (int iy = 0; iy < u.g.nx; ++iy)
      for (int ix = 0; ix < u.g.nx; ++ix)
        for (int c = 0; c < u.nc; ++c) hk.at(ix, iy, c) = s.at(ix, iy, bin, c);
    for (int sg : {+1, -1}) {
      int kt = k + sg;
      if (std::abs(kt) > km) continue;
      InteriorField r = gk_apply(m, A, hk, k, sg, q);
      int bt = (kt + u.nth) % u.nth;
      for (int iy = 0; iy < u.g.nx; ++iy)
        for (int ix = 0; ix < u.g.nx; ++ix)
          for (int c = 0; c < u.nc; ++c) o.at(ix, iy, bt, c) += r.at(ix, iy, c);
    }
  }
  return fiber_synthesize(o);
}

// (Xperp - A_V)u = (mu_+ - mu_-)u / i through the ladder.
inline SmField xperp_minus_av_apply(const IsothermalMetric& m, const MatrixConnection* A,
                                    const SmField& u, StencilQuality* q = nullptr) {
  FiberSpectrum s = fiber_analyze(u);
  FiberSpectrum o = s;
  std::fill(o.c.begin(), o.c.end(), cplx(0));
  const int km = s.kmax();
  InteriorField hk(u.g, u.nc);
  const cplx mi(0, -1);  // 1/i
  for (int k = -km; k <= km; ++k) {
    int bin = (k + u.nth) % u.nth;
    for (int iy = 0; iy < u.g.nx; ++iy)
      for (int ix = 0; ix < u.g.nx; ++ix)
        for (int c = 0; c < u.nc; ++c) hk.at(ix, iy, c) = s.at(ix, iy, bin, c);
    for (int sg : {+1, -1}) {
      int kt = k + sg;
      if (std::abs(kt) > km) continue;
      InteriorField r = gk_apply(m, A, hk, k, sg, q);
      int bt = (kt + u.nth) % u.nth;
      cplx w = mi * double(sg);
      for (int iy = 0; iy < u.g.nx; ++iy)
        for (int ix = 0; ix < u.g.nx; ++ix)
          for (int c = 0; c < u.nc; ++c) o.at(ix, iy, bt, c) += w * r.at(ix, iy, c);
    }
  }
  return fiber_synthesize(o);
}

// pi_0 (Xperp - A_V) u = ( mu_+ u_{-1} - mu_- u_{+1} ) / i: only the +/-1
// modes of u contribute to the fiber average, so this shortcut powers the
// filtered-backprojection step without a full ladder sweep.
inline InteriorField pi0_xperp_minus_av(const IsothermalMetric& m, const MatrixConnection* A,
                                        const SmField& u, StencilQuality* q = nullptr) {
  InteriorField hm = mode_project(u, -1), hp = mode_project(u, +1);
  InteriorField a = gk_apply(m, A, hm, -1, +1, q);
  InteriorField b = gk_apply(m, A, hp, +1, -1, q);
  InteriorField out(u.g, u.nc);
  const cplx mi(0, -1);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = mi * (a.v[i] - b.v[i]);
  return out;
}

// pi_0 (X + A) u = mu_+ u_{-1} + mu_- u_{+1}.
inline InteriorField pi0_xplus_a(const IsothermalMetric& m, const MatrixConnection* A,
                                 const SmField& u, StencilQuality* q = nullptr) {
  InteriorField hm = mode_project(u, -1), hp = mode_project(u, +1);
  InteriorField a = gk_apply(m, A, hm, -1, +1, q);
  InteriorField b = gk_apply(m, A, hp, +1, -1, q);
  InteriorField out(u.g, u.nc);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] + b.v[i];
  return out;
}

}  // namespace geoxray
