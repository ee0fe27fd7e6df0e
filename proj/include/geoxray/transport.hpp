// Attenuated transport along geodesics: propagators U_A, scattering data C_A,
// attenuated line integrals on boundary fans, first-integral extensions, and
// interior transport solves.
#pragma once

#include "fields.hpp"

namespace geoxray {

// U_A(q): solution of (X + A)U = 0 on SM with U = I on the inflow boundary.
// Since A(x, y, th + pi) = -A(x, y, th), the backward propagator along the
// chord through q coincides with the attenuation state of the forward trace
// launched from the reversed point, so a single trace suffices.
inline CMat propagator_U(const IsothermalMetric& m, const MatrixConnection* A,
                         const PhasePoint& q, const TraceOpts& opts = {},
                         TraceWorkspace* ws = nullptr) {
  TraceFlags fl;
  fl.attenuation = A != nullptr;
  TraceOpts o = opts;
  o.samples = false;
  GeodesicTrace tr = trace_augmented(m, A, reversed(q), fl, o, ws);
  if (!A) return CMat::Identity(1, 1);
  return tr.exit_state.Einv;
}

// ----------------------------------------------------------- scattering data

// C_A = U_A restricted to the outflow half of the fan. One trace per inward
// node (ib, jt) serves both ends of its chord: the outward node (ib, jt) is
// that chord run backwards, so C there equals the accumulated Einv(tau), and
// the value at the off-grid exit point is its inverse.
struct ScatteringData {
  FanGrid fan;
  int n = 1;
  bool has_conn = false;
  // indexed per inward node idx(ib, jt)
  std::vector<double> tau;
  std::vector<double> beta_out, omega_out;  // exit coordinates of the chord
  std::vector<double> dbeta;                // wrap_pm(beta_out - beta - pi)
  std::vector<double> omega_tilde;          // wrap_pm(omega_out - pi)
  std::vector<CMat> C;                      // C_A at outward node (ib, jt)
  std::vector<CMat> C_alpha;                // C_A at the chord's exit point = C^{-1}
  BoundaryField Cmi;                        // C - I over the full fan (zero on inflow half)

  size_t idx(int ib, int jt) const { return size_t(ib) * fan.half_count() + jt; }

  // Cubic interpolation of C_A at any boundary coordinate. U_A - I vanishes
  // identically on the closed inflow half, so zero extension across tangency
  // is exact and only leaves the interpolant's kink error near the ends.
  CMat C_interp(double beta, double omega) const {
    CMat r = CMat::Identity(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) r(a, b) += fan_sample(Cmi, a * n + b, beta, omega);
    return r;
  }
};

inline ScatteringData scattering_data(const IsothermalMetric& m, const MatrixConnection* A,
                                      const FanGrid& fan, TraceOpts opts = {}) {
  ScatteringData sd;
  sd.fan = fan;
  sd.has_conn = A != nullptr;
  sd.n = A ? A->n() : 1;
  const int nh = fan.half_count();
  const size_t N = size_t(fan.nbeta) * nh;
  sd.tau.resize(N);
  sd.beta_out.resize(N);
  sd.omega_out.resize(N);
  sd.dbeta.resize(N);
  sd.omega_tilde.resize(N);
  sd.C.resize(N);
  sd.C_alpha.resize(N);
  sd.Cmi = BoundaryField(fan, sd.n * sd.n);
  opts.samples = false;

  std::vector<TraceWorkspace> pool(num_threads());
  parallel_for(std::int64_t(N), [&](std::int64_t id) {
    int ib = int(id / nh), jt = int(id % nh);
    TraceFlags fl;
    fl.attenuation = A != nullptr;
    PhasePoint q = from_boundary(fan.R, fan.beta(ib), fan.inward_omega_t(jt));
    GeodesicTrace tr = trace_augmented(m, A, q, fl, opts, &pool[worker_id()]);
    BoundaryCoord bc = to_boundary(tr.exit);
    sd.tau[id] = tr.tau;
    sd.beta_out[id] = bc.beta;
    sd.omega_out[id] = bc.omega;
    sd.dbeta[id] = wrap_pm(bc.beta - fan.beta(ib) - pi);
    sd.omega_tilde[id] = wrap_pm(bc.omega - pi);
    CMat E = A ? tr.exit_state.Einv : CMat::Identity(sd.n, sd.n);
    sd.C[id] = E;
    sd.C_alpha[id] = A ? CMat(E.inverse()) : E;
    int jo = fan.outward_j(jt);
    for (int a = 0; a < sd.n; ++a)
      for (int b = 0; b < sd.n; ++b)
        sd.Cmi.at(ib, jo, a * sd.n + b) = E(a, b) - (a == b ? 1.0 : 0.0);
  });
  return sd;
}

// ----------------------------------------------------- attenuated integrals

// I_A f at every inflow fan node: quadrature of Einv(t) f(phi_t) along each
// chord. f is a callable f(x, y, theta, out&) filling nc components. The
// outflow half of the returned field is zero.
template <class F>
BoundaryField attenuated_integral_fn(const IsothermalMetric& m, const MatrixConnection* A, int nc,
                                     F&& f, const FanGrid& fan, TraceOpts opts = {}) {
  if (A && A->n() != nc) throw config_error("connection size does not match integrand");
  BoundaryField out(fan, nc);
  opts.samples = true;
  const int nh = fan.half_count();
  std::vector<TraceWorkspace> pool(num_threads());
  std::vector<std::pair<CVec, CVec>> scratch(num_threads());
  parallel_for(std::int64_t(fan.nbeta) * nh, [&](std::int64_t id) {
    int ib = int(id / nh), jt = int(id % nh);
    TraceFlags fl;
    fl.attenuation = A != nullptr;
    PhasePoint q = from_boundary(fan.R, fan.beta(ib), fan.inward_omega_t(jt));
    GeodesicTrace tr = trace_augmented(m, A, q, fl, opts, &pool[worker_id()]);
    auto& [fv, acc] = scratch[worker_id()];
    acc.setZero(nc);
    for (size_t k = 0; k < tr.samples.size(); ++k) {
      const TraceSample& s = tr.samples[k];
      f(s.q.x, s.q.y, wrap_2pi(s.q.th), fv);
      if (A)
        acc.noalias() += tr.quad_w[k] * (s.Einv * fv);
      else
        acc += tr.quad_w[k] * fv;
    }
    int j = fan.inward_j(jt);
    for (int c = 0; c < nc; ++c) out.at(ib, j, c) = acc[c];
  });
  return out;
}

// Gridded-integrand form: bicubic in the chart, spectral in theta.
inline BoundaryField attenuated_integral(const IsothermalMetric& m, const MatrixConnection* A,
                                         const SmField& f, const FanGrid& fan,
                                         TraceOpts opts = {}) {
  SmSampler smp(f);
  return attenuated_integral_fn(
      m, A, f.nc, [&smp](double x, double y, double th, CVec& o) { smp.eval(x, y, th, o); }, fan,
      opts);
}

// ------------------------------------------------- first-integral extension

// h_{psi,A}(x, v) = U_A(x, v) h(entry point of the chord through (x, v)),
// evaluated on a full sphere-bundle grid. h lives on the inflow fan nodes.
inline SmField first_integral_extension(const IsothermalMetric& m, const MatrixConnection* A,
                                        const BoundaryField& h, const Grid2& g, int nth,
                                        TraceOpts opts = {}) {
  const int nc = h.nc;
  if (A && A->n() != nc) throw config_error("connection size does not match boundary data");
  SmField u(g, nth, nc);
  opts.samples = false;
  TraceFlags fl;
  fl.attenuation = A != nullptr;
  std::vector<TraceWorkspace> pool(num_threads());
  std::vector<std::pair<CVec, CVec>> scratch(num_threads());
  parallel_for(std::int64_t(g.nx) * g.nx, [&](std::int64_t id) {
    int iy = int(id / g.nx), ix = int(id % g.nx);
    if (!g.inside(ix, iy)) return;
    auto& tw = pool[worker_id()];
    auto& [hv, uv] = scratch[worker_id()];
    double x = g.x(ix), yy = g.x(iy);
    for (int it = 0; it < nth; ++it) {
      PhasePoint q{x, yy, u.theta(it)};
      GeodesicTrace tr = trace_augmented(m, A, reversed(q), fl, opts, &tw);
      BoundaryCoord bc = to_boundary(tr.exit);
      double te = wrap_pm(bc.omega - pi);  // inflow coordinate of the entry point
      hv.resize(nc);
      for (int c = 0; c < nc; ++c) hv[c] = fan_sample_half(h, c, bc.beta, te, true);
      if (A) {
        uv.noalias() = tr.exit_state.Einv * hv;
        for (int c = 0; c < nc; ++c) u.at(ix, iy, it, c) = uv[c];
      } else {
        for (int c = 0; c < nc; ++c) u.at(ix, iy, it, c) = hv[c];
      }
    }
  });
  return u;
}

// ---------------------------------------------------------- interior solve

// u_A^f(x, v) = int_0^tau Einv(t) f(phi_t) dt from every sphere-bundle node:
// the unique solution of Xu + Au = -f vanishing on the outflow boundary.
template <class F>
SmField transport_solve_fn(const IsothermalMetric& m, const MatrixConnection* A, int nc, F&& f,
                           const Grid2& g, int nth, TraceOpts opts = {}) {
  if (A && A->n() != nc) throw config_error("connection size does not match integrand");
  SmField u(g, nth, nc);
  opts.samples = true;
  TraceFlags fl;
  fl.attenuation = A != nullptr;
  std::vector<TraceWorkspace> pool(num_threads());
  std::vector<std::pair<CVec, CVec>> scratch(num_threads());
  parallel_for(std::int64_t(g.nx) * g.nx, [&](std::int64_t id) {
    int iy = int(id / g.nx), ix = int(id % g.nx);
    if (!g.inside(ix, iy)) return;
    auto& tw = pool[worker_id()];
    auto& [fv, acc] = scratch[worker_id()];
    double x = g.x(ix), yy = g.x(iy);
    for (int it = 0; it < nth; ++it) {
      PhasePoint q{x, yy, u.theta(it)};
      GeodesicTrace tr = trace_augmented(m, A, q, fl, opts, &tw);
      acc.setZero(nc);
      for (size_t k = 0; k < tr.samples.size(); ++k) {
        const TraceSample& s = tr.samples[k];
        f(s.q.x, s.q.y, wrap_2pi(s.q.th), fv);
        if (A)
          acc.noalias() += tr.quad_w[k] * (s.Einv * fv);
        else
          acc += tr.quad_w[k] * fv;
      }
      for (int c = 0; c < nc; ++c) u.at(ix, iy, it, c) = acc[c];
    }
  });
  return u;
}

inline SmField transport_solve(const IsothermalMetric& m, const MatrixConnection* A,
                               const SmField& f, const Grid2& g, int nth, TraceOpts opts = {}) {
  SmSampler smp(f);
  return transport_solve_fn(
      m, A, f.nc, [&smp](double x, double y, double th, CVec& o) { smp.eval(x, y, th, o); }, g,
      nth, opts);
}

}  // namespace geoxray
