// Shared analytic fixtures for the operator-level suites: a band-limited
// sphere-bundle field with closed-form transport derivatives, smooth random
// inflow data, and parity-pure torus fields for the scattering-relation tests.
#pragma once

#include <array>
#include <vector>

#include "geoxray/connection.hpp"
#include "geoxray/fields.hpp"
#include "geoxray/metric.hpp"

namespace gxtest {

using namespace geoxray;

// Band-limited field with analytic chart derivatives:
//   u_c(x,y,th) = sum_k p_{k,c}(x,y) exp(-2 r^2) e^{ik th},  p quadratic.
struct BandField {
  int kmin, kmax, nc;
  std::vector<std::array<cplx, 6>> coef;  // (1, x, y, x^2, xy, y^2) per (k, c)

  BandField(std::uint64_t seed, int kmin_, int kmax_, int nc_)
      : kmin(kmin_), kmax(kmax_), nc(nc_) {
    SplitMix64 rng(seed);
    coef.resize(size_t(kmax - kmin + 1) * nc);
    for (auto& a : coef)
      for (auto& z : a) z = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
  }
  const std::array<cplx, 6>& p(int k, int c) const { return coef[size_t(k - kmin) * nc + c]; }
  void mode(int k, int c, double x, double y, cplx& v, cplx& vx, cplx& vy) const {
    const auto& a = p(k, c);
    cplx q = a[0] + a[1] * x + a[2] * y + a[3] * x * x + a[4] * x * y + a[5] * y * y;
    cplx qx = a[1] + 2.0 * a[3] * x + a[4] * y;
    cplx qy = a[2] + a[4] * x + 2.0 * a[5] * y;
    double E = std::exp(-2 * (x * x + y * y));
    v = q * E;
    vx = (qx - 4 * x * q) * E;
    vy = (qy - 4 * y * q) * E;
  }
  cplx value(int c, double x, double y, double th) const {
    cplx acc(0), v, vx, vy;
    for (int k = kmin; k <= kmax; ++k) {
      mode(k, c, x, y, v, vx, vy);
      acc += v * std::polar(1.0, k * th);
    }
    return acc;
  }
  void value_vec(double x, double y, double th, CVec& out) const {
    out.resize(nc);
    for (int c = 0; c < nc; ++c) out[c] = value(c, x, y, th);
  }
  SmField fill(const Grid2& g, int nth) const {
    SmField u(g, nth, nc);
    for (int iy = 0; iy < g.nx; ++iy)
      for (int ix = 0; ix < g.nx; ++ix)
        for (int c = 0; c < nc; ++c)
          for (int it = 0; it < nth; ++it)
            u.at(ix, iy, it, c) = value(c, g.x(ix), g.x(iy), u.theta(it));
    return u;
  }
  // boundary trace of u on the inflow fan
  BoundaryField trace_inflow(const FanGrid& fan) const {
    BoundaryField h(fan, nc);
    for (int ib = 0; ib < fan.nbeta; ++ib)
      for (int jt = 0; jt < fan.nomega / 2; ++jt) {
        double be = fan.beta(ib);
        double th = be + pi + fan.inward_omega_t(jt);
        for (int c = 0; c < nc; ++c)
          h.at(ib, fan.inward_j(jt), c) = value(c, fan.R * std::cos(be), fan.R * std::sin(be), th);
      }
    return h;
  }
  // full torus boundary trace
  BoundaryField trace_torus(const FanGrid& fan) const {
    BoundaryField h(fan, nc);
    for (int ib = 0; ib < fan.nbeta; ++ib)
      for (int j = 0; j < fan.nomega; ++j) {
        double be = fan.beta(ib);
        double th = be + pi + fan.omega(j);
        for (int c = 0; c < nc; ++c)
          h.at(ib, j, c) = value(c, fan.R * std::cos(be), fan.R * std::sin(be), th);
      }
    return h;
  }
  // analytic (X + A)u and (Xperp - A_V)u at a phase point
  void transport_ops(const IsothermalMetric& m, const MatrixConnection* A, double x, double y,
                     double th, CVec& xa, CVec& xp) const {
    MetricJet j = m.jet(x, y);
    double ct = std::cos(th), st = std::sin(th), em = std::exp(-j.lam);
    CVec u = CVec::Zero(nc);
    xa = CVec::Zero(nc);
    xp = CVec::Zero(nc);
    cplx v, vx, vy;
    for (int c = 0; c < nc; ++c)
      for (int k = kmin; k <= kmax; ++k) {
        mode(k, c, x, y, v, vx, vy);
        cplx ph = std::polar(1.0, k * th), ik(0, double(k));
        u[c] += v * ph;
        xa[c] += em * (ct * vx + st * vy + (-j.lx * st + j.ly * ct) * ik * v) * ph;
        xp[c] += em * (st * vx - ct * vy + (j.lx * ct + j.ly * st) * ik * v) * ph;
      }
    if (A) {
      CMat Az, Azb;
      A->components(x, y, Az, Azb);
      cplx e1 = std::polar(1.0, th);
      CMat Am = em * (Az * e1 + Azb * std::conj(e1));
      CMat Av = cplx(0, 1) * em * (Az * e1 - Azb * std::conj(e1));
      xa += Am * u;
      xp -= Av * u;
    }
  }
};

// Smooth random trig-polynomial data on the inflow fan, zero on the outflow half.
inline BoundaryField smooth_inflow(const FanGrid& fan, int nc, std::uint64_t seed) {
  BoundaryField w(fan, nc);
  SplitMix64 rng(seed);
  for (int c = 0; c < nc; ++c) {
    double a[7];
    for (auto& x : a) x = rng.uniform(-1.0, 1.0);
    for (int ib = 0; ib < fan.nbeta; ++ib)
      for (int jt = 0; jt < fan.nomega / 2; ++jt) {
        double be = fan.beta(ib), t = fan.inward_omega_t(jt);
        w.at(ib, fan.inward_j(jt), c) =
            cplx(a[0] + a[1] * std::cos(be) + a[2] * std::sin(2 * be) + a[3] * std::cos(t),
                 a[4] * std::sin(t) * std::sin(be) + a[5] * std::cos(be + t) + 0.2 * a[6]);
      }
  }
  return w;
}

// Smooth torus field with definite parity under v -> -v (omega -> omega + pi):
// only fiber harmonics e^{ib omega} with b of the requested parity appear.
inline BoundaryField parity_torus(const FanGrid& fan, int nc, std::uint64_t seed, int parity) {
  BoundaryField w(fan, nc);
  SplitMix64 rng(seed);
  for (int c = 0; c < nc; ++c)
    for (int a = -2; a <= 2; ++a)
      for (int b = -3; b <= 3; ++b) {
        bool even = ((b % 2) + 2) % 2 == 0;
        if (even != (parity > 0)) continue;
        cplx amp(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        amp /= (1.0 + a * a + b * b);
        for (int ib = 0; ib < fan.nbeta; ++ib)
          for (int j = 0; j < fan.nomega; ++j)
            w.at(ib, j, c) += amp * std::polar(1.0, a * fan.beta(ib) + b * fan.omega(j));
      }
  return w;
}

// Relative sup difference over the inflow fan (both halves if full = true).
inline double rel_sup(const BoundaryField& a, const BoundaryField& b, bool full = false) {
  double num = 0, den = 0;
  const FanGrid& fan = a.fan;
  for (int ib = 0; ib < fan.nbeta; ++ib)
    for (int jt = 0; jt < fan.nomega / 2; ++jt)
      for (int half = 0; half < (full ? 2 : 1); ++half) {
        int j = half == 0 ? fan.inward_j(jt) : fan.outward_j(jt);
        for (int c = 0; c < a.nc; ++c) {
          num = std::max(num, std::abs(a.at(ib, j, c) - b.at(ib, j, c)));
          den = std::max(den, std::abs(b.at(ib, j, c)));
        }
      }
  return num / std::max(den, 1e-300);
}

// Relative L2 difference of interior fields over the chart mask.
inline double rel_l2(const IsothermalMetric& m, const InteriorField& a, const InteriorField& b) {
  const Grid2& g = a.g;
  double num = 0, den = 0;
  for (int iy = 0; iy < g.nx; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      if (!g.inside(ix, iy)) continue;
      double w = std::exp(2 * m.lambda(g.x(ix), g.x(iy)));
      for (int c = 0; c < a.nc; ++c) {
        num += w * std::norm(a.at(ix, iy, c) - b.at(ix, iy, c));
        den += w * std::norm(b.at(ix, iy, c));
      }
    }
  return std::sqrt(num / std::max(den, 1e-300));
}

inline double sup_abs(const BoundaryField& a) {
  double s = 0;
  for (const auto& z : a.v) s = std::max(s, std::abs(z));
  return s;
}

}  // namespace gxtest
