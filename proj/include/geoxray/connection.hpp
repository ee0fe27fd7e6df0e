// GL(n,C) connections as matrix 1-forms A = A_z dz + A_zbar dzbar in
// isothermal coordinates. Evaluation on SM, vertical derivative, curvature
// star(F_A) via the frame formula, gauge transforms, polynomial presets,
// a scalar builder -q^{-1}Xq, and the SU(2) boundary-map example.
#pragma once

#include "metric.hpp"

namespace geoxray {

// ------------------------------------------------------- polynomial helpers

// Dense complex polynomial in (x, y), powers 0..deg per axis.
struct Poly2 {
  int deg = 0;
  std::vector<cplx> c;  // c[a*(deg+1)+b] multiplies x^a y^b
  Poly2() : deg(0), c(1, cplx(0)) {}
  explicit Poly2(int d) : deg(d), c(size_t(d + 1) * (d + 1), cplx(0)) {}
  cplx& at(int a, int b) { return c[size_t(a) * (deg + 1) + b]; }
  cplx eval(double x, double y) const {
    cplx acc = 0;
    double xa = 1;
    for (int a = 0; a <= deg; ++a) {
      double yb = 1;
      cplx row = 0;
      for (int b = 0; b <= deg; ++b) {
        row += c[size_t(a) * (deg + 1) + b] * yb;
        yb *= y;
      }
      acc += xa * row;
      xa *= x;
    }
    return acc;
  }
  Poly2 dx() const {
    Poly2 r(deg);
    for (int a = 1; a <= deg; ++a)
      for (int b = 0; b <= deg; ++b) r.at(a - 1, b) += double(a) * c[size_t(a) * (deg + 1) + b];
    return r;
  }
  Poly2 dy() const {
    Poly2 r(deg);
    for (int a = 0; a <= deg; ++a)
      for (int b = 1; b <= deg; ++b) r.at(a, b - 1) += double(b) * c[size_t(a) * (deg + 1) + b];
    return r;
  }
};

// Matrix of polynomials with precomputed first/second derivative tables.
struct PolyMat {
  int n = 1;
  std::vector<Poly2> p;  // n*n row-major
  PolyMat() = default;
  PolyMat(int n_, int deg) : n(n_), p(size_t(n_) * n_, Poly2(deg)) {}
  Poly2& at(int i, int j) { return p[size_t(i) * n + j]; }
  void eval_into(double x, double y, CMat& m) const {
    m.resize(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = p[size_t(i) * n + j].eval(x, y);
  }
  CMat eval(double x, double y) const {
    CMat m;
    eval_into(x, y, m);
    return m;
  }
  PolyMat map(Poly2 (Poly2::*op)() const) const {
    PolyMat r;
    r.n = n;
    r.p.reserve(p.size());
    for (const auto& q : p) r.p.push_back((q.*op)());
    return r;
  }
  PolyMat dx() const { return map(&Poly2::dx); }
  PolyMat dy() const { return map(&Poly2::dy); }
};

// Random polynomial matrix with degree-damped coefficients.
inline PolyMat random_polymat(int n, int deg, SplitMix64& rng, double mag) {
  PolyMat m(n, deg);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int a = 0; a <= deg; ++a)
        for (int b = 0; b <= deg; ++b) {
          if (a + b > deg) continue;  // total-degree cut
          m.at(i, j).at(a, b) = mag * rng.cnormal() / double(1 << (a + b));
        }
  return m;
}

// --------------------------------------------------------------- connection

// Components, optionally with first derivatives, already scaled.
// Reused across calls: presets write in place, no per-call allocation
// once the matrices have their final size.
struct ConnJet {
  CMat Az, Azb, Azx, Azy, Azbx, Azby;
};

class MatrixConnection {
 public:
  // fn(x, y, jet, want_derivs): fills Az/Azb always, the derivative
  // blocks only when want_derivs is true.
  using JetFn = std::function<void(double, double, ConnJet&, bool)>;

  MatrixConnection() = default;
  MatrixConnection(int n, JetFn fn, bool unitary_tag = false, std::string name = "custom")
      : n_(n), fn_(std::move(fn)), unitary_(unitary_tag), name_(std::move(name)) {}

  int n() const { return n_; }
  bool unitary_tag() const { return unitary_; }
  const std::string& name() const { return name_; }
  cplx scale() const { return scale_; }

  MatrixConnection scaled(cplx s) const {
    MatrixConnection r = *this;
    r.scale_ *= s;
    return r;
  }

  void jet(double x, double y, ConnJet& j, bool derivs = true) const {
    fn_(x, y, j, derivs);
    if (scale_ != cplx(1.0)) {
      j.Az *= scale_;
      j.Azb *= scale_;
      if (derivs) {
        j.Azx *= scale_;
        j.Azy *= scale_;
        j.Azbx *= scale_;
        j.Azby *= scale_;
      }
    }
  }
  void components(double x, double y, CMat& Az, CMat& Azb) const {
    ConnJet j;
    jet(x, y, j, false);
    Az = std::move(j.Az);
    Azb = std::move(j.Azb);
  }
  // Allocation-free variant for inner ODE loops.
  void components_into(double x, double y, ConnJet& j) const { jet(x, y, j, false); }

  // A(x, y, theta) = e^{-lam}(A_z e^{i theta} + A_zbar e^{-i theta})
  CMat eval_on_sm(const IsothermalMetric& m, const PhasePoint& q) const {
    m.require_in_disk(q.x, q.y);
    CMat Az, Azb;
    components(q.x, q.y, Az, Azb);
    cplx ep(std::cos(q.th), std::sin(q.th));
    return std::exp(-m.lambda(q.x, q.y)) * (Az * ep + Azb * std::conj(ep));
  }
  // A_V = V(A) = i e^{-lam}(A_z e^{i theta} - A_zbar e^{-i theta})
  CMat vertical_derivative(const IsothermalMetric& m, const PhasePoint& q) const {
    m.require_in_disk(q.x, q.y);
    CMat Az, Azb;
    components(q.x, q.y, Az, Azb);
    cplx ep(std::cos(q.th), std::sin(q.th));
    return cplx(0, 1) * std::exp(-m.lambda(q.x, q.y)) * (Az * ep - Azb * std::conj(ep));
  }

  // star(F_A) = X A_V + Xperp A + [A, A_V], evaluated at a given theta.
  CMat star_curvature_at(const IsothermalMetric& m, double x, double y, double th) const {
    ConnJet cj;
    jet(x, y, cj);
    MetricJet mj = m.jet(x, y);
    double e = std::exp(-mj.lam), c = std::cos(th), s = std::sin(th);
    cplx i1(0, 1), ep(c, s), em(c, -s);
    // pointwise values
    CMat A = e * (cj.Az * ep + cj.Azb * em);
    CMat AV = i1 * e * (cj.Az * ep - cj.Azb * em);
    // chart derivatives of A and A_V (theta fixed)
    CMat Ax = e * ((cj.Azx * ep + cj.Azbx * em) - mj.lx * (cj.Az * ep + cj.Azb * em));
    CMat Ay = e * ((cj.Azy * ep + cj.Azby * em) - mj.ly * (cj.Az * ep + cj.Azb * em));
    CMat AVx = i1 * e * ((cj.Azx * ep - cj.Azbx * em) - mj.lx * (cj.Az * ep - cj.Azb * em));
    CMat AVy = i1 * e * ((cj.Azy * ep - cj.Azby * em) - mj.ly * (cj.Az * ep - cj.Azb * em));
    // frame coefficients; d/dtheta A = A_V, d/dtheta A_V = -A.
    double w = -mj.lx * s + mj.ly * c;   // theta-coefficient of X (times e^{-lam})
    double wp = mj.lx * c + mj.ly * s;   // theta-coefficient of Xperp
    CMat XAV = e * (c * AVx + s * AVy + w * (-A));
    CMat XpA = e * (s * Ax - c * Ay + wp * AV);
    return XAV + XpA + A * AV - AV * A;
  }

  // Evaluates at theta = 0, asserts theta-independence at theta = pi/3.
  CMat star_curvature(const IsothermalMetric& m, double x, double y, double rel_tol = 1e-8) const {
    CMat F0 = star_curvature_at(m, x, y, 0.0);
    CMat F1 = star_curvature_at(m, x, y, pi / 3.0);
    double scale = std::max(1.0, F0.norm());
    if ((F0 - F1).norm() > rel_tol * scale * 100 + 1e-7)
      throw numeric_error("star-curvature is theta-dependent: inconsistent connection derivatives");
    return F0;
  }

  // (alpha_A, sup |star F_A|_F): Frobenius suprema over polar sampling grids.
  std::array<double, 2> sup_norms(const IsothermalMetric& m, int nr = 48, int nang = 96,
                                  int nth = 32) const {
    double alpha = 0, supF = 0;
    double R = m.radius();
    for (int ir = 0; ir < nr; ++ir) {
      double r = R * (ir + 0.5) / nr;
      for (int ia = 0; ia < nang; ++ia) {
        double b = two_pi * ia / nang;
        double x = r * std::cos(b), y = r * std::sin(b);
        CMat Az, Azb;
        components(x, y, Az, Azb);
        double e = std::exp(-m.lambda(x, y));
        for (int it = 0; it < nth; ++it) {
          double th = two_pi * it / nth;
          cplx ep(std::cos(th), std::sin(th));
          CMat A = e * (Az * ep + Azb * std::conj(ep));
          alpha = std::max(alpha, 0.5 * (A + CMat(A.adjoint())).norm());
        }
        supF = std::max(supF, star_curvature_at(m, x, y, 0.0).norm());
      }
    }
    return {alpha, supF};
  }

 private:
  int n_ = 1;
  JetFn fn_ = [](double, double, ConnJet& j, bool) {
    j.Az = j.Azb = j.Azx = j.Azy = j.Azbx = j.Azby = CMat::Zero(1, 1);
  };
  cplx scale_{1.0, 0.0};
  bool unitary_ = false;
  std::string name_ = "zero";
};

// ------------------------------------------------------------------ presets

inline MatrixConnection conn_zero(int n) {
  return MatrixConnection(
      n,
      [n](double, double, ConnJet& j, bool derivs) {
        j.Az = j.Azb = CMat::Zero(n, n);
        if (derivs) j.Azx = j.Azy = j.Azbx = j.Azby = CMat::Zero(n, n);
      },
      true, "zero");
}

namespace detail {
// Shared closure body for polynomial component pairs.
inline MatrixConnection::JetFn polymat_jet(PolyMat Az, PolyMat Azb) {
  auto Azx = Az.dx(), Azy = Az.dy(), Azbx = Azb.dx(), Azby = Azb.dy();
  return [=](double x, double y, ConnJet& j, bool derivs) {
    Az.eval_into(x, y, j.Az);
    Azb.eval_into(x, y, j.Azb);
    if (derivs) {
      Azx.eval_into(x, y, j.Azx);
      Azy.eval_into(x, y, j.Azy);
      Azbx.eval_into(x, y, j.Azbx);
      Azby.eval_into(x, y, j.Azby);
    }
  };
}
inline PolyMat adjoint_neg(const PolyMat& m) {  // -(conjugate transpose), entrywise conj coeffs
  PolyMat r(m.n, m.p[0].deg);
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j) {
      const Poly2& src = m.p[size_t(j) * m.n + i];
      Poly2 q(src.deg);
      for (size_t k = 0; k < src.c.size(); ++k) q.c[k] = -std::conj(src.c[k]);
      r.at(i, j) = q;
    }
  return r;
}
}  // namespace detail

// A_z random polynomial, A_zbar = -A_z^*  =>  A + A^* = 0 on SM.
inline MatrixConnection conn_unitary_poly(int n, std::uint64_t seed, double mag = 0.6) {
  SplitMix64 rng(seed * 0x9e3779b97f4a7c15ull + 0x243f6a8885a308d3ull);
  PolyMat Az = random_polymat(n, 3, rng, mag);
  return MatrixConnection(n, detail::polymat_jet(Az, detail::adjoint_neg(Az)), true,
                          "unitary_poly");
}

// Independent polynomial components (generic GL(n,C) attenuation).
inline MatrixConnection conn_generic_poly(int n, std::uint64_t seed, double mag = 0.45) {
  SplitMix64 rng(seed * 0x9e3779b97f4a7c15ull + 0x13198a2e03707344ull);
  PolyMat Az = random_polymat(n, 3, rng, mag);
  PolyMat Azb = random_polymat(n, 3, rng, mag);
  return MatrixConnection(n, detail::polymat_jet(Az, Azb), false, "generic_poly");
}

// ---------------------------------------------------------------- gauge

// Smooth GL(n,C)-valued field with derivatives through second order.
struct GaugeField {
  int n = 1;
  // fills g, gx, gy, gxx, gxy, gyy
  std::function<void(double, double, CMat*, CMat*)> jet2;
  CMat eval(double x, double y) const {
    CMat g;
    jet2(x, y, &g, nullptr);
    return g;
  }
};

// g = I + P with ||P|| kept small enough for invertibility on the disk.
inline GaugeField gauge_poly(int n, std::uint64_t seed, double mag = 0.35) {
  SplitMix64 rng(seed * 0x9e3779b97f4a7c15ull + 0xa4093822299f31d0ull);
  PolyMat P = random_polymat(n, 3, rng, mag);
  auto Px = P.dx(), Py = P.dy();
  auto Pxx = Px.dx(), Pxy = Px.dy(), Pyy = Py.dy();
  GaugeField g;
  g.n = n;
  g.jet2 = [=](double x, double y, CMat* g0, CMat* d) {
    if (g0) *g0 = CMat::Identity(n, n) + P.eval(x, y);
    if (d) {
      d[0] = Px.eval(x, y);
      d[1] = Py.eval(x, y);
      d[2] = Pxx.eval(x, y);
      d[3] = Pxy.eval(x, y);
      d[4] = Pyy.eval(x, y);
    }
  };
  return g;
}

// Gauge action A . g = g^{-1} dg + g^{-1} A g, componentwise in (z, zbar).
inline MatrixConnection gauge_transform(const MatrixConnection& A, const GaugeField& g) {
  if (A.n() != g.n) throw config_error("gauge field dimension mismatch");
  int n = A.n();
  auto base = A;  // copy (captures scale)
  auto fn = [base, g, n](double x, double y, ConnJet& out, bool derivs) {
    ConnJet aj;
    base.jet(x, y, aj, derivs);
    CMat G, d[5];
    g.jet2(x, y, &G, d);
    const CMat &Gx = d[0], &Gy = d[1], &Gxx = d[2], &Gxy = d[3], &Gyy = d[4];
    cplx hf(0.5, 0.0), i1(0, 1);
    CMat Gz = hf * (Gx - i1 * Gy), Gzb = hf * (Gx + i1 * Gy);
    Eigen::PartialPivLU<CMat> lu(G);
    CMat Gi = lu.inverse();
    out.Az = Gi * (Gz + aj.Az * G);
    out.Azb = Gi * (Gzb + aj.Azb * G);
    if (derivs) {
      // chart derivatives of Gz, Gzb via second derivatives of g
      CMat Gzx = hf * (Gxx - i1 * Gxy), Gzy = hf * (Gxy - i1 * Gyy);
      CMat Gzbx = hf * (Gxx + i1 * Gxy), Gzby = hf * (Gxy + i1 * Gyy);
      CMat Gix = -Gi * Gx * Gi, Giy = -Gi * Gy * Gi;
      out.Azx = Gix * (Gz + aj.Az * G) + Gi * (Gzx + aj.Azx * G + aj.Az * Gx);
      out.Azy = Giy * (Gz + aj.Az * G) + Gi * (Gzy + aj.Azy * G + aj.Az * Gy);
      out.Azbx = Gix * (Gzb + aj.Azb * G) + Gi * (Gzbx + aj.Azbx * G + aj.Azb * Gx);
      out.Azby = Giy * (Gzb + aj.Azb * G) + Gi * (Gzby + aj.Azby * G + aj.Azb * Gy);
    }
  };
  return MatrixConnection(n, fn, false, "gauged:" + A.name());
}

// Flat connection g^{-1} dg.
inline MatrixConnection conn_pure_gauge(int n, std::uint64_t seed) {
  MatrixConnection r = gauge_transform(conn_zero(n), gauge_poly(n, seed));
  return MatrixConnection(
      n, [r](double x, double y, ConnJet& j, bool derivs) { r.jet(x, y, j, derivs); }, false,
      "pure_gauge");
}

// -A^H on SM. Fiber components swap under the pointwise adjoint:
// A^H = e^{-lam}(Azb^H e^{i th} + Az^H e^{-i th}), so (-A*)_z = -Azb^H.
// Unitary connections are fixed points of this map.
inline MatrixConnection conn_minus_adjoint(const MatrixConnection& A) {
  auto fn = [A](double x, double y, ConnJet& j, bool derivs) {
    ConnJet in;
    A.jet(x, y, in, derivs);
    j.Az = -in.Azb.adjoint();
    j.Azb = -in.Az.adjoint();
    if (derivs) {
      j.Azx = -in.Azbx.adjoint();
      j.Azy = -in.Azby.adjoint();
      j.Azbx = -in.Azx.adjoint();
      j.Azby = -in.Azy.adjoint();
    }
  };
  return MatrixConnection(A.n(), fn, A.unitary_tag(), "minus_adjoint:" + A.name());
}

// Scalar 1-form a := -q^{-1} X q for q = e^{i theta}: a_z = dlam_z, a_zbar = -dlam_zbar.
// Purely imaginary on SM.
inline MatrixConnection scalar_one_form_q(const IsothermalMetric& m) {
  auto fn = [m](double x, double y, ConnJet& j, bool derivs) {
    MetricJet mj = m.jet(x, y);
    auto c1 = [](double a, double b) { return CMat::Constant(1, 1, cplx(a, b)); };
    j.Az = c1(0.5 * mj.lx, -0.5 * mj.ly);
    j.Azb = c1(-0.5 * mj.lx, -0.5 * mj.ly);
    if (derivs) {
      j.Azx = c1(0.5 * mj.lxx, -0.5 * mj.lxy);
      j.Azy = c1(0.5 * mj.lxy, -0.5 * mj.lyy);
      j.Azbx = c1(-0.5 * mj.lxx, -0.5 * mj.lxy);
      j.Azby = c1(-0.5 * mj.lxy, -0.5 * mj.lyy);
    }
  };
  return MatrixConnection(1, fn, true, "q_form");
}

// ------------------------------------------------------------- SU(2) example

// Smooth SU(2) extension of the boundary map diag(e^{-2i phi}, e^{2i phi})
// via the belt-trick homotopy F = P(phi) R(s) P(phi) R(s)^{-1}:
//   F = [[c^2 e^{-2i phi} + s^2,  c s (1 - e^{-2i phi})],
//        [-c s (1 - e^{2i phi}),  s^2 + c^2 e^{2i phi}]],
// c = cos(pi s(r)/2), s = sin(pi s(r)/2), s(r) a C-infinity step with
// s == 1 near r = 0 (F == I) and s == 0 near r = 1 (F == boundary map).
struct Su2Example {
  MatrixConnection A;                                   // A_z = 0, A_zbar = -(dbar F) F^{-1}
  std::function<CMat(double, double)> F;                // the extension
  std::function<CVec(double, double)> h_z, h_zb;        // h_z = F e1, h_zbar = e1
  double r_lo = 0.12, r_hi = 0.93;                      // transition band of s(r)
};

namespace detail {
inline double su2_s(double r, double lo, double hi) {
  return 1.0 - cinf_step((r - lo) / (hi - lo));
}
inline double su2_sd(double r, double lo, double hi) {
  return -cinf_step_d((r - lo) / (hi - lo)) / (hi - lo);
}
// F and (dF/dr, dF/dphi) at polar (r, phi).
inline void su2_F_jet(double r, double phi, double lo, double hi, CMat& F, CMat* Fr, CMat* Fp) {
  double s = su2_s(r, lo, hi);
  double c = std::cos(pi * s / 2), sg = std::sin(pi * s / 2);
  cplx u = std::polar(1.0, 2 * phi), ub = std::conj(u);
  F.resize(2, 2);
  F(0, 0) = c * c * ub + sg * sg;
  F(0, 1) = c * sg * (1.0 - ub);
  F(1, 0) = -c * sg * (1.0 - u);
  F(1, 1) = sg * sg + c * c * u;
  if (Fr) {
    double sd = su2_sd(r, lo, hi);
    double cr = -sg * pi / 2 * sd, sr = c * pi / 2 * sd;
    Fr->resize(2, 2);
    (*Fr)(0, 0) = 2 * c * cr * ub + 2 * sg * sr;
    (*Fr)(0, 1) = (cr * sg + c * sr) * (1.0 - ub);
    (*Fr)(1, 0) = -(cr * sg + c * sr) * (1.0 - u);
    (*Fr)(1, 1) = 2 * sg * sr + 2 * c * cr * u;
  }
  if (Fp) {
    cplx i2(0, 2);
    Fp->resize(2, 2);
    (*Fp)(0, 0) = -i2 * c * c * ub;
    (*Fp)(0, 1) = c * sg * i2 * ub;
    (*Fp)(1, 0) = c * sg * i2 * u;  // d/dphi of -c s (1 - u) = c s * i2 u
    (*Fp)(1, 1) = i2 * c * c * u;
  }
}
// A_zbar = -(dbar F) F^{-1}, dbar = (e^{i phi}/2)(d/dr + (i/r) d/dphi).
inline CMat su2_Azb(double x, double y, double lo, double hi) {
  double r = std::hypot(x, y);
  if (r < 1e-12) return CMat::Zero(2, 2);
  double phi = std::atan2(y, x);
  CMat F, Fr, Fp;
  su2_F_jet(r, phi, lo, hi, F, &Fr, &Fp);
  cplx eip = std::polar(1.0, phi);
  CMat dbarF = 0.5 * eip * (Fr + cplx(0, 1) / r * Fp);
  return CMat(-dbarF * F.adjoint());  // F unitary: F^{-1} = F^H
}
}  // namespace detail

inline Su2Example su2_example() {
  Su2Example ex;
  double lo = ex.r_lo, hi = ex.r_hi;
  // component first derivatives by centered differences (analytic values,
  // FD only for the derivative closure; floor ~1e-9 with h = 1e-5)
  auto fn = [lo, hi](double x, double y, ConnJet& j, bool derivs) {
    const double h = 1e-5;
    j.Az = CMat::Zero(2, 2);
    j.Azb = detail::su2_Azb(x, y, lo, hi);
    if (derivs) {
      j.Azx = CMat::Zero(2, 2);
      j.Azy = CMat::Zero(2, 2);
      j.Azbx = (detail::su2_Azb(x + h, y, lo, hi) - detail::su2_Azb(x - h, y, lo, hi)) / (2 * h);
      j.Azby = (detail::su2_Azb(x, y + h, lo, hi) - detail::su2_Azb(x, y - h, lo, hi)) / (2 * h);
    }
  };
  ex.A = MatrixConnection(2, fn, false, "su2_example");
  ex.F = [lo, hi](double x, double y) {
    CMat F;
    detail::su2_F_jet(std::hypot(x, y), std::atan2(y, x), lo, hi, F, nullptr, nullptr);
    return F;
  };
  ex.h_z = [F = ex.F](double x, double y) { return CVec(F(x, y).col(0)); };
  ex.h_zb = [](double, double) {
    CVec e1(2);
    e1 << cplx(1, 0), cplx(0, 0);
    return e1;
  };
  return ex;
}

}  // namespace geoxray
