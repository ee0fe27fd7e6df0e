// Reconstruction pipeline: the boundary-data filter and the two filtered
// backprojection formulas, the intertwining error operators W (realized
// through their geodesic integral kernels), the Hilbert-Schmidt norm bound
// with its explicit constants, and the Neumann / Krylov solvers for the
// resulting Fredholm equations.
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "boundary.hpp"
#include "harmonics.hpp"
#include "transport.hpp"
#include "xray.hpp"

namespace geoxray {

// ============================================================== filter plan

// Everything the pipeline reuses across calls on one (metric, connection,
// grids) configuration: scattering tables on the data fan, the
// adjoint-partner connection -A*, the interior grid and fiber count for
// backprojection, and the metric's Jacobi-field constants.
struct FilterPlan {
  IsothermalMetric m;
  std::shared_ptr<const MatrixConnection> A;     // null = zero connection
  std::shared_ptr<const MatrixConnection> Aadj;  // -A*, null when A is null
  FanGrid fan;
  Grid2 g;
  int nth = 32;       // fiber nodes for extensions and fiber averages
  TraceOpts topt;
  ScatteringTables st;
  SimplicityReport geom;
  // Tangency damping width (in fan spacings) applied inside filter_stage.
  // The reconstruction formulas are most accurate with the raw filtered data
  // (0); the range-characterization stack applies its own damping.
  int taper_width = 0;
  // The transverse-derivative backprojection cannot be evaluated stably on
  // the final node rings (the filtered data folds with a square-root law at
  // the tangency circle their chords graze). Nodes within rim_band grid steps
  // of the rim are therefore continued radially from the clean interior;
  // set <= 0 to disable.
  double rim_band = 2.0;

  const MatrixConnection* conn() const { return A.get(); }
  const MatrixConnection* conn_adj() const { return Aadj.get(); }
  int nc() const { return A ? A->n() : 1; }
};

inline FilterPlan make_filter_plan(const IsothermalMetric& m, const MatrixConnection* A,
                                   const FanGrid& fan, const Grid2& g, int nth,
                                   TraceOpts opts = {}, const SimplicityReport* geom = nullptr,
                                   SimplicityOpts so = {}) {
  if (std::abs(fan.R - g.R) > 1e-12 * g.R || std::abs(m.radius() - g.R) > 1e-12 * g.R)
    throw config_error("make_filter_plan: fan, grid and metric disk radii differ");
  FilterPlan p;
  p.m = m;
  if (A) {
    p.A = std::make_shared<MatrixConnection>(*A);
    p.Aadj = std::make_shared<MatrixConnection>(conn_minus_adjoint(*A));
  }
  p.fan = fan;
  p.g = g;
  p.nth = nth;
  p.topt = opts;
  p.st = build_scattering_tables(m, p.conn(), fan, opts);
  p.geom = geom ? *geom : simplicity_constants(m, so);
  return p;
}

// ============================================================= filter stage

// Data-space filter: extend the inflow data to the boundary torus with the
// odd symmetry extension, apply the fiberwise Hilbert transform over the full
// direction circle, damp the tangency ring, fold back with the even
// symmetrization.
inline BoundaryField filter_stage(const FilterPlan& p, const BoundaryField& d) {
  detail::require_fan_match(p.fan, d.fan, "filter_stage");
  BoundaryField q = extend_Q(p.st, d, -1);
  BoundaryField hq = hilbert(q, HilbertParity::full);
  tangency_taper(hq, p.taper_width);
  return fold_B(p.st, hq, +1);
}

// Replace the values of the outermost `band` grid-step ring by quadratic
// radial continuation from three bicubic samples taken safely inside (the
// sampling stencils stay clear of the ring being replaced). Backprojections
// with a transverse derivative produce O(1) noise exactly on that ring; the
// continued values instead carry the interior's O(h^2) accuracy.
inline void rim_continue(InteriorField& F, double R, double band_steps) {
  if (band_steps <= 0) return;
  const Grid2& g = F.g;
  const double h = g.h, band = band_steps * h;
  const double s0 = R - band - 2.5 * h, s1 = s0 - 1.5 * h, s2 = s0 - 3.0 * h;
  if (s2 <= 0) return;
  std::vector<std::array<int, 2>> ring;
  std::vector<cplx> vals;
  for (int iy = 0; iy < g.nx; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      if (!g.inside(ix, iy)) continue;
      double x = g.x(ix), y = g.x(iy), rr = std::hypot(x, y);
      if (rr <= R - band) continue;
      double ux = x / rr, uy = y / rr;
      // quadratic Lagrange weights at rr on nodes {s0, s1, s2}
      double w0 = (rr - s1) * (rr - s2) / ((s0 - s1) * (s0 - s2));
      double w1 = (rr - s0) * (rr - s2) / ((s1 - s0) * (s1 - s2));
      double w2 = (rr - s0) * (rr - s1) / ((s2 - s0) * (s2 - s1));
      ring.push_back({ix, iy});
      for (int c = 0; c < F.nc; ++c)
        vals.push_back(w0 * interior_sample(F, c, ux * s0, uy * s0) +
                       w1 * interior_sample(F, c, ux * s1, uy * s1) +
                       w2 * interior_sample(F, c, ux * s2, uy * s2));
    }
  for (size_t k = 0; k < ring.size(); ++k)
    for (int c = 0; c < F.nc; ++c) F.at(ring[k][0], ring[k][1], c) = vals[k * F.nc + c];
}

// Backprojection of filtered function-transform data: for d on the inflow
// fan, returns (1/8pi) times the perpendicular adjoint taken at the partner
// connection -A*. When d is the function transform of f this equals
// f + W_A^2 f; on surfaces where the error operator vanishes (constant
// curvature, flat connection) it reconstructs f in one shot.
inline InteriorField fbp_I0(const FilterPlan& p, const BoundaryField& d,
                            PerpStrategy strategy = PerpStrategy::grid_fd,
                            StencilQuality* q = nullptr) {
  BoundaryField h = filter_stage(p, d);
  InteriorField r = adjoint_Iperp(p.m, p.conn_adj(), h, p.g, p.nth, p.topt, strategy, q);
  for (auto& z : r.v) z *= 1.0 / (8.0 * pi);
  rim_continue(r, p.m.radius(), p.rim_band);
  return r;
}

// Backprojection of filtered perpendicular-transform data: -(1/8pi) times
// the function adjoint at -A*. For d the perpendicular transform of f
// (vanishing at the rim) this equals f + W_{A,perp}^2 f.
inline InteriorField fbp_Iperp(const FilterPlan& p, const BoundaryField& d) {
  BoundaryField h = filter_stage(p, d);
  InteriorField r = adjoint_I0(p.m, p.conn_adj(), h, p.g, p.nth, p.topt);
  for (auto& z : r.v) z *= -1.0 / (8.0 * pi);
  rim_continue(r, p.m.radius(), p.rim_band);
  return r;
}

// =========================================================== error kernels

// Which of the two error operators a kernel routine realizes. Both act on
// interior fields as W f(x) = fiber-average of int_0^tau w(x,v,t) f(gamma(t)) dt,
// with matrix kernels
//   w    = K1 - (b1/b2) K2 - V(b1/b2) Einv          (function-transform side)
//   wperp = -(1/b2) K2 + (Vb2/b2^2) Einv            (perpendicular side)
// built from the trace blocks; with no connection present both collapse to
// scalar kernels -V(b1/b2) and -V(1/b2).
enum class ErrorOp { WA, WAperp };

inline const char* to_string(ErrorOp w) { return w == ErrorOp::WA ? "W_A" : "W_Aperp"; }

namespace detail {

// V(b1/b2) = (b2 Vb1 - b1 Vb2)/b2^2 and V(1/b2) = -Vb2/b2^2, both O(t^2)
// near the footpoint, evaluated through the variation blocks of a trace.
inline double v_ratio_b1b2(const TraceSample& s) {
  return (s.b2 * s.Vb1 - s.b1 * s.Vb2) / (s.b2 * s.b2);
}
inline double v_ratio_1b2(const TraceSample& s) { return -s.Vb2 / (s.b2 * s.b2); }

// Walk the kernel-weighted samples of one trace. For every quadrature node
// past the small-time cutoff, `fn(sample, quad_weight)` is invoked after the
// kernel for `which` has been assembled into `wmat` (connection present) or
// `wsca` (scalar path). The caller reads whichever form `matrix` selects.
// Kernels vanish at t = 0 and the ratio forms degrade to 0/0 there, so
// contributions with t below max(two quadrature panels, 1e-3 * tau_ref) are
// dropped; the omitted mass is O(cutoff^2) of the integral. A sign change of
// b2 away from the footpoint means a conjugate point: reported through
// `bad_b2` (never thrown here; callers aggregate outside parallel regions).
template <class Fn>
void kernel_trace_walk(const IsothermalMetric& m, const MatrixConnection* A, ErrorOp which,
                       const PhasePoint& q, double tau_ref, TraceOpts opts,
                       TraceWorkspace* ws, bool matrix, CMat& wmat, cplx& wsca,
                       std::atomic<long>* bad_b2, Fn&& fn) {
  opts.samples = true;
  TraceFlags fl;
  fl.attenuation = fl.kernels = (A != nullptr);
  fl.variation = true;
  GeodesicTrace tr = trace_augmented(m, A, q, fl, opts, ws);
  const double eps = std::max(2.0 * tr.tau / std::max(tr.panels, 1),
                              1e-3 * std::max(tau_ref, tr.tau));
  const double cp_floor = std::max(1e-6, 1e-3 * tr.tau);
  double b2_ref = 0;
  for (size_t k = 0; k < tr.samples.size(); ++k) {
    const TraceSample& s = tr.samples[k];
    if (s.t > cp_floor && std::abs(s.b2) > 100 * opts.atol) {
      if (b2_ref == 0)
        b2_ref = s.b2;
      else if (s.b2 * b2_ref < 0 && bad_b2)
        bad_b2->fetch_add(1, std::memory_order_relaxed);
    }
    if (s.t < eps) continue;
    if (matrix) {
      if (which == ErrorOp::WA) {
        wmat = s.K1;
        wmat.noalias() -= (s.b1 / s.b2) * s.K2;
        wmat.noalias() -= v_ratio_b1b2(s) * s.Einv;
      } else {
        wmat = (-1.0 / s.b2) * s.K2;
        wmat.noalias() -= v_ratio_1b2(s) * s.Einv;
      }
    } else {
      wsca = (which == ErrorOp::WA) ? -v_ratio_b1b2(s) : -v_ratio_1b2(s);
    }
    fn(s, tr.quad_w[k]);
  }
}

inline void throw_if_conjugate(const std::atomic<long>& bad) {
  long n = bad.load();
  if (n > 0)
    throw numeric_error("conjugate point: the vertical Jacobi field changes sign along " +
                        std::to_string(n) + " kernel trace sample(s); surface is not simple");
}

inline std::vector<std::array<int, 2>> interior_nodes(const Grid2& g) {
  std::vector<std::array<int, 2>> out;
  for (int iy = 0; iy < g.nx; ++iy)
    for (int ix = 0; ix < g.nx; ++ix)
      if (g.inside(ix, iy)) out.push_back({ix, iy});
  return out;
}

inline std::vector<cplx> field_to_vec(const InteriorField& f,
                                      const std::vector<std::array<int, 2>>& nodes) {
  std::vector<cplx> v(nodes.size() * f.nc);
  for (size_t k = 0; k < nodes.size(); ++k)
    for (int c = 0; c < f.nc; ++c) v[k * f.nc + c] = f.at(nodes[k][0], nodes[k][1], c);
  return v;
}

inline void vec_to_field(const std::vector<cplx>& v,
                         const std::vector<std::array<int, 2>>& nodes, InteriorField& f) {
  for (size_t k = 0; k < nodes.size(); ++k)
    for (int c = 0; c < f.nc; ++c) f.at(nodes[k][0], nodes[k][1], c) = v[k * f.nc + c];
}

}  // namespace detail

// One-shot error-operator application: every interior node owns a fan of
// kernel-weighted traces, integrated against bicubic samples of f. Prefer
// the cached ErrorOpPlan below when the operator is applied repeatedly.
inline InteriorField apply_error_op(const IsothermalMetric& m, const MatrixConnection* A,
                                    ErrorOp which, const InteriorField& f, int nth,
                                    double tau_ref, TraceOpts opts = {}) {
  const int nc = f.nc;
  if (A && A->n() != nc) throw config_error("apply_error_op: connection size mismatch");
  const Grid2& g = f.g;
  InteriorField out(g, nc);
  const bool matrix = A != nullptr;
  std::vector<TraceWorkspace> pool(num_threads());
  struct Scratch {
    CMat wm;
    cplx ws;
    CVec fv, acc;
  };
  std::vector<Scratch> scr(num_threads());
  std::atomic<long> bad(0);
  parallel_for(g.nodes(), [&](std::int64_t id) {
    int iy = int(id / g.nx), ix = int(id % g.nx);
    if (!g.inside(ix, iy)) return;
    auto& sc = scr[worker_id()];
    sc.fv.resize(nc);
    sc.acc.setZero(nc);
    double x = g.x(ix), y = g.x(iy);
    for (int it = 0; it < nth; ++it) {
      PhasePoint q{x, y, two_pi * it / nth};
      detail::kernel_trace_walk(
          m, A, which, q, tau_ref, opts, &pool[worker_id()], matrix, sc.wm, sc.ws, &bad,
          [&](const TraceSample& s, double qw) {
            for (int c = 0; c < nc; ++c) sc.fv[c] = interior_sample(f, c, s.q.x, s.q.y);
            if (matrix)
              sc.acc.noalias() += qw * (sc.wm * sc.fv);
            else
              sc.acc += (qw * sc.ws) * sc.fv;
          });
    }
    for (int c = 0; c < nc; ++c) out.at(ix, iy, c) = sc.acc[c] / double(nth);
  });
  detail::throw_if_conjugate(bad);
  return out;
}

inline InteriorField apply_WA(const FilterPlan& p, const InteriorField& f) {
  return apply_error_op(p.m, p.conn(), ErrorOp::WA, f, p.nth, p.geom.tau_inf, p.topt);
}
inline InteriorField apply_WAperp(const FilterPlan& p, const InteriorField& f) {
  return apply_error_op(p.m, p.conn(), ErrorOp::WAperp, f, p.nth, p.geom.tau_inf, p.topt);
}

// Kernel magnitudes along a single trace: (t, Frobenius norm of the kernel)
// pairs for every quadrature node with t >= t_floor. No small-time cutoff is
// applied beyond the caller's floor, so this exposes the raw o(t) vanishing.
inline std::vector<std::pair<double, double>> sample_kernel_norms(
    const IsothermalMetric& m, const MatrixConnection* A, ErrorOp which, const PhasePoint& q,
    double tau_ref, TraceOpts opts = {}, double t_floor = 0.0) {
  opts.samples = true;
  TraceFlags fl;
  fl.attenuation = fl.kernels = (A != nullptr);
  fl.variation = true;
  GeodesicTrace tr = trace_augmented(m, A, q, fl, opts);
  std::vector<std::pair<double, double>> out;
  CMat wm;
  for (const TraceSample& s : tr.samples) {
    if (s.t < std::max(t_floor, 1e-12) || s.b2 == 0.0) continue;
    double nrm;
    if (A) {
      if (which == ErrorOp::WAperp)
        wm = (-1.0 / s.b2) * s.K2 - detail::v_ratio_1b2(s) * s.Einv;
      else
        wm = s.K1 - (s.b1 / s.b2) * s.K2 - detail::v_ratio_b1b2(s) * s.Einv;
      nrm = wm.norm();
    } else {
      nrm = std::abs(which == ErrorOp::WA ? detail::v_ratio_b1b2(s) : detail::v_ratio_1b2(s));
    }
    out.emplace_back(s.t, nrm);
  }
  return out;
}

// ========================================================== cached operator

// Trace-free realization of one error operator on a fixed grid: every kept
// quadrature node is stored as a sample position plus its weight-scaled
// kernel (single-precision; the operator feeds percent-level contracts).
// Building costs one fan of augmented traces per interior node; applying is
// pure interpolation.
struct ErrorOpPlan {
  Grid2 g;
  int nth = 0, nc = 1;
  bool matrix = false;
  int kstride = 1;  // kernel entries per sample: nc^2 (matrix) or 1
  std::vector<std::array<int, 2>> nodes;
  std::vector<std::int64_t> offs;  // per node, into the sample arrays
  std::vector<float> px, py;
  std::vector<std::complex<float>> ker;

  std::int64_t samples() const { return std::int64_t(px.size()); }
};

inline ErrorOpPlan build_error_op_plan(const IsothermalMetric& m, const MatrixConnection* A,
                                       ErrorOp which, const Grid2& g, int nth, double tau_ref,
                                       TraceOpts opts = {}) {
  ErrorOpPlan pl;
  pl.g = g;
  pl.nth = nth;
  pl.nc = A ? A->n() : 1;
  pl.matrix = A != nullptr;
  pl.kstride = pl.matrix ? pl.nc * pl.nc : 1;
  pl.nodes = detail::interior_nodes(g);
  const size_t nn = pl.nodes.size();
  std::vector<std::vector<float>> bxy(nn);
  std::vector<std::vector<std::complex<float>>> bker(nn);
  std::vector<TraceWorkspace> pool(num_threads());
  struct Scratch {
    CMat wm;
    cplx ws;
  };
  std::vector<Scratch> scr(num_threads());
  std::atomic<long> bad(0);
  parallel_for(std::int64_t(nn), [&](std::int64_t k) {
    auto& sc = scr[worker_id()];
    double x = g.x(pl.nodes[k][0]), y = g.x(pl.nodes[k][1]);
    for (int it = 0; it < nth; ++it) {
      PhasePoint q{x, y, two_pi * it / nth};
      detail::kernel_trace_walk(
          m, A, which, q, tau_ref, opts, &pool[worker_id()], pl.matrix, sc.wm, sc.ws, &bad,
          [&](const TraceSample& s, double qw) {
            bxy[k].push_back(float(s.q.x));
            bxy[k].push_back(float(s.q.y));
            if (pl.matrix)
              for (int r = 0; r < pl.nc; ++r)
                for (int c = 0; c < pl.nc; ++c)
                  bker[k].push_back(std::complex<float>(qw * sc.wm(r, c)));
            else
              bker[k].push_back(std::complex<float>(qw * sc.ws));
          });
    }
  });
  detail::throw_if_conjugate(bad);
  pl.offs.resize(nn + 1, 0);
  for (size_t k = 0; k < nn; ++k) pl.offs[k + 1] = pl.offs[k] + std::int64_t(bxy[k].size() / 2);
  pl.px.resize(size_t(pl.offs[nn]));
  pl.py.resize(size_t(pl.offs[nn]));
  pl.ker.resize(size_t(pl.offs[nn]) * pl.kstride);
  for (size_t k = 0; k < nn; ++k) {
    std::int64_t o = pl.offs[k];
    for (size_t s = 0; s < bxy[k].size() / 2; ++s) {
      pl.px[size_t(o) + s] = bxy[k][2 * s];
      pl.py[size_t(o) + s] = bxy[k][2 * s + 1];
      for (int e = 0; e < pl.kstride; ++e)
        pl.ker[(size_t(o) + s) * pl.kstride + e] = bker[k][s * pl.kstride + e];
    }
  }
  return pl;
}

inline void apply_error_op(const ErrorOpPlan& pl, const InteriorField& f, InteriorField& out) {
  if (f.nc != pl.nc) throw config_error("ErrorOpPlan: component count mismatch");
  if (f.g.nx != pl.g.nx) throw config_error("ErrorOpPlan: grid mismatch");
  if (out.g.nx != pl.g.nx || out.nc != pl.nc) out = InteriorField(pl.g, pl.nc);
  std::fill(out.v.begin(), out.v.end(), cplx(0));
  const int nc = pl.nc;
  struct Scratch {
    CVec fv, acc;
  };
  std::vector<Scratch> scr(num_threads());
  parallel_for(std::int64_t(pl.nodes.size()), [&](std::int64_t k) {
    auto& sc = scr[worker_id()];
    sc.fv.resize(nc);
    sc.acc.setZero(nc);
    for (std::int64_t s = pl.offs[k]; s < pl.offs[k + 1]; ++s) {
      double x = pl.px[size_t(s)], y = pl.py[size_t(s)];
      for (int c = 0; c < nc; ++c) sc.fv[c] = interior_sample(f, c, x, y);
      const std::complex<float>* w = pl.ker.data() + size_t(s) * pl.kstride;
      if (pl.matrix) {
        for (int r = 0; r < nc; ++r) {
          cplx a(0);
          for (int c = 0; c < nc; ++c) a += cplx(w[r * nc + c]) * sc.fv[c];
          sc.acc[r] += a;
        }
      } else {
        sc.acc += cplx(w[0]) * sc.fv;
      }
    }
    for (int c = 0; c < nc; ++c) out.at(pl.nodes[k][0], pl.nodes[k][1], c) = sc.acc[c] / double(pl.nth);
  });
}

inline InteriorField apply_error_op(const ErrorOpPlan& pl, const InteriorField& f) {
  InteriorField out(pl.g, pl.nc);
  apply_error_op(pl, f, out);
  return out;
}

// Dense matrix of the cached operator in the interior-node basis; debug-scale
// only (the column count makes this quadratic in grid nodes).
inline CMat dense_error_op(const FilterPlan& p, ErrorOp which) {
  if (p.g.nx > 32) throw config_error("dense_error_op: grid larger than the debug cap (32)");
  ErrorOpPlan pl = build_error_op_plan(p.m, p.conn(), which, p.g, p.nth, p.geom.tau_inf, p.topt);
  auto nodes = pl.nodes;
  const int nc = pl.nc;
  const std::int64_t N = std::int64_t(nodes.size()) * nc;
  CMat M(N, N);
  InteriorField e(p.g, nc), col(p.g, nc);
  for (std::int64_t j = 0; j < N; ++j) {
    std::fill(e.v.begin(), e.v.end(), cplx(0));
    e.at(nodes[size_t(j / nc)][0], nodes[size_t(j / nc)][1], int(j % nc)) = 1.0;
    apply_error_op(pl, e, col);
    for (std::int64_t i = 0; i < N; ++i)
      M(i, j) = col.at(nodes[size_t(i / nc)][0], nodes[size_t(i / nc)][1], int(i % nc));
  }
  return M;
}

// =============================================================== solvers

// Truncated alternating series for (I + W^2)^{-1} r: terms (-1)^j W^{2j} r,
// stopped when the increment norm drops below tol * |r| or k_max terms were
// added. Three consecutive growing increments abort with a numeric error
// (the operator norm is not a contraction there).
struct NeumannResult {
  InteriorField f;
  std::vector<double> increments;  // weighted L2 norms of successive terms
  int terms = 0;
  bool converged = false;
};

inline NeumannResult neumann_solve(const FilterPlan& plan, const InteriorField& r, ErrorOp which,
                                   int k_max = 24, double tol = 1e-8) {
  ErrorOpPlan op =
      build_error_op_plan(plan.m, plan.conn(), which, plan.g, plan.nth, plan.geom.tau_inf, plan.topt);
  NeumannResult res;
  res.f = r;
  InteriorField p = r, t(plan.g, r.nc);
  const double r0 = norm_M(plan.m, r);
  double prev = std::numeric_limits<double>::infinity();
  int growing = 0;
  for (int j = 1; j <= k_max; ++j) {
    apply_error_op(op, p, t);
    apply_error_op(op, t, p);  // p <- W^2 p
    const double sgn = (j % 2 == 1) ? -1.0 : 1.0;
    for (size_t i = 0; i < res.f.v.size(); ++i) res.f.v[i] += sgn * p.v[i];
    double inc = norm_M(plan.m, p);
    res.increments.push_back(inc);
    res.terms = j;
    if (inc <= tol * std::max(r0, 1e-300)) {
      res.converged = true;
      break;
    }
    if (inc > prev) {
      if (++growing >= 3)
        throw numeric_error("neumann_solve: increments grew for 3 consecutive terms; "
                            "the error operator is not a contraction at this configuration");
    } else {
      growing = 0;
    }
    prev = inc;
  }
  return res;
}

// Restarted GMRES on a matrix-free operator over flattened interior vectors.
// All reductions are fixed-order serial sums, so reruns are bit-stable.
struct KrylovOpts {
  int restart = 30;
  int max_restarts = 10;
  double tol = 1e-8;
};

struct KrylovResult {
  int iterations = 0;
  double residual = 0;  // relative, in the flat l2 norm of the vectorization
  bool converged = false;
};

namespace detail {

template <class Op>
KrylovResult gmres_restarted(Op&& apply, const std::vector<cplx>& b, std::vector<cplx>& x,
                             const KrylovOpts& ko) {
  const size_t N = b.size();
  KrylovResult out;
  const double bnorm = l2_norm(b);
  if (bnorm == 0) {
    x.assign(N, cplx(0));
    out.converged = true;
    return out;
  }
  const int mr = std::max(1, ko.restart);
  std::vector<std::vector<cplx>> V(size_t(mr) + 1, std::vector<cplx>(N));
  std::vector<std::vector<cplx>> H(size_t(mr) + 1, std::vector<cplx>(size_t(mr), cplx(0)));
  const size_t mrs = size_t(mr);
  std::vector<cplx> cs(mrs), sn(mrs), gvec(mrs + 1), w(N), r(N);
  if (x.size() != N) x.assign(N, cplx(0));
  for (int outer = 0; outer < ko.max_restarts; ++outer) {
    apply(x, r);
    for (size_t i = 0; i < N; ++i) r[i] = b[i] - r[i];
    double beta = l2_norm(r);
    out.residual = beta / bnorm;
    if (out.residual <= ko.tol) {
      out.converged = true;
      return out;
    }
    for (size_t i = 0; i < N; ++i) V[0][i] = r[i] / beta;
    std::fill(gvec.begin(), gvec.end(), cplx(0));
    gvec[0] = beta;
    int j = 0;
    for (; j < mr; ++j) {
      apply(V[size_t(j)], w);
      for (int i = 0; i <= j; ++i) {
        cplx hij = dotc(V[size_t(i)], w);
        H[size_t(i)][size_t(j)] = hij;
        for (size_t q = 0; q < N; ++q) w[q] -= hij * V[size_t(i)][q];
      }
      double hnext = l2_norm(w);
      H[size_t(j) + 1][size_t(j)] = hnext;
      ++out.iterations;
      if (hnext > 1e-300)
        for (size_t q = 0; q < N; ++q) V[size_t(j) + 1][q] = w[q] / hnext;
      // previous Givens rotations, then the new one
      for (int i = 0; i < j; ++i) {
        cplx t0 = std::conj(cs[size_t(i)]) * H[size_t(i)][size_t(j)] +
                  std::conj(sn[size_t(i)]) * H[size_t(i) + 1][size_t(j)];
        cplx t1 = -sn[size_t(i)] * H[size_t(i)][size_t(j)] + cs[size_t(i)] * H[size_t(i) + 1][size_t(j)];
        H[size_t(i)][size_t(j)] = t0;
        H[size_t(i) + 1][size_t(j)] = t1;
      }
      {
        cplx a = H[size_t(j)][size_t(j)], bb = H[size_t(j) + 1][size_t(j)];
        double rr = std::sqrt(std::norm(a) + std::norm(bb));
        if (rr < 1e-300) rr = 1e-300;
        cs[size_t(j)] = a / rr;
        sn[size_t(j)] = bb / rr;
        H[size_t(j)][size_t(j)] = std::conj(cs[size_t(j)]) * a + std::conj(sn[size_t(j)]) * bb;
        H[size_t(j) + 1][size_t(j)] = 0;
        cplx g0 = std::conj(cs[size_t(j)]) * gvec[size_t(j)];
        cplx g1 = -sn[size_t(j)] * gvec[size_t(j)];
        gvec[size_t(j)] = g0;
        gvec[size_t(j) + 1] = g1;
      }
      out.residual = std::abs(gvec[size_t(j) + 1]) / bnorm;
      if (out.residual <= ko.tol || hnext <= 1e-300) {
        ++j;
        break;
      }
    }
    // back substitution on the j x j triangle, then update x
    std::vector<cplx> ycoef(size_t(j), cplx(0));
    for (int i = j - 1; i >= 0; --i) {
      cplx s = gvec[size_t(i)];
      for (int q2 = i + 1; q2 < j; ++q2) s -= H[size_t(i)][size_t(q2)] * ycoef[size_t(q2)];
      ycoef[size_t(i)] = s / H[size_t(i)][size_t(i)];
    }
    for (int i = 0; i < j; ++i)
      for (size_t q2 = 0; q2 < N; ++q2) x[q2] += ycoef[size_t(i)] * V[size_t(i)][q2];
    // the outer loop recomputes the true residual and exits when it meets tol
  }
  apply(x, r);
  for (size_t i = 0; i < N; ++i) r[i] = b[i] - r[i];
  out.residual = l2_norm(r) / bnorm;
  out.converged = out.residual <= ko.tol;
  return out;
}

}  // namespace detail

// Matrix-free Krylov solve of (I + W^2) f = r. Unlike the Neumann series this
// does not require the operator to be a contraction; non-convergence is
// recorded in the result, not thrown.
struct FredholmResult {
  InteriorField f;
  KrylovResult krylov;
};

inline FredholmResult solve_fredholm(const FilterPlan& plan, const InteriorField& r, ErrorOp which,
                                     KrylovOpts ko = {}) {
  ErrorOpPlan op =
      build_error_op_plan(plan.m, plan.conn(), which, plan.g, plan.nth, plan.geom.tau_inf, plan.topt);
  auto nodes = detail::interior_nodes(plan.g);
  std::vector<cplx> b = detail::field_to_vec(r, nodes);
  std::vector<cplx> x;
  InteriorField fin(plan.g, r.nc), fmid(plan.g, r.nc), fout(plan.g, r.nc);
  auto apply = [&](const std::vector<cplx>& in, std::vector<cplx>& out) {
    detail::vec_to_field(in, nodes, fin);
    apply_error_op(op, fin, fmid);
    apply_error_op(op, fmid, fout);
    out.resize(in.size());
    for (size_t k = 0; k < nodes.size(); ++k)
      for (int c = 0; c < r.nc; ++c)
        out[k * size_t(r.nc) + c] = in[k * size_t(r.nc) + c] + fout.at(nodes[k][0], nodes[k][1], c);
  };
  FredholmResult res;
  res.krylov = detail::gmres_restarted(apply, b, x, ko);
  res.f = InteriorField(plan.g, r.nc);
  detail::vec_to_field(x, nodes, res.f);
  return res;
}

// Power iteration on W* W with the weighted interior inner product; W* is
// never assembled — it is the partner operator with connection -A*
// (perpendicular partner for the function side and vice versa).
inline double operator_norm_estimate(const FilterPlan& plan, ErrorOp which, int iters = 14,
                                     std::uint64_t seed = 1) {
  const ErrorOp partner = (which == ErrorOp::WA) ? ErrorOp::WAperp : ErrorOp::WA;
  ErrorOpPlan fwd =
      build_error_op_plan(plan.m, plan.conn(), which, plan.g, plan.nth, plan.geom.tau_inf, plan.topt);
  ErrorOpPlan adj = build_error_op_plan(plan.m, plan.conn_adj(), partner, plan.g, plan.nth,
                                        plan.geom.tau_inf, plan.topt);
  const int nc = plan.nc();
  SplitMix64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  InteriorField x(plan.g, nc), wx(plan.g, nc), y(plan.g, nc);
  for (int iy = 0; iy < plan.g.nx; ++iy)
    for (int ix = 0; ix < plan.g.nx; ++ix)
      if (plan.g.inside(ix, iy))
        for (int c = 0; c < nc; ++c) x.at(ix, iy, c) = rng.cnormal();
  double nx0 = norm_M(plan.m, x);
  if (nx0 == 0) return 0;
  for (auto& z : x.v) z /= nx0;
  double lam = 0;
  for (int it = 0; it < iters; ++it) {
    apply_error_op(fwd, x, wx);
    double nw = norm_M(plan.m, wx);
    lam = nw * nw;  // Rayleigh quotient of W*W at the unit vector x
    apply_error_op(adj, wx, y);
    double ny = norm_M(plan.m, y);
    if (ny < 1e-280) break;  // operator numerically zero
    for (size_t i = 0; i < x.v.size(); ++i) x.v[i] = y.v[i] / ny;
  }
  return std::sqrt(std::max(lam, 0.0));
}

// ========================================================== explicit bounds

// Inputs and outputs of the Hilbert-Schmidt norm bound for the error
// operators: bound = sqrt(vol/(2 pi)) * sqrt(C |starF|^2 + C' |dkappa|^2)
// with C = n^3 e^{6 a tau} C2^2/C1^3 tau^2/2 and
// C' = n e^{2 a tau} C2^6/C1^5 tau^4/24.
struct BoundEvaluation {
  int n = 1;
  double C1 = 1, C2 = 1, tau_inf = 0, alpha_A = 0, sup_starF = 0, sup_dkappa = 0, vol_M = 0;
  double C = 0, Cprime = 0, bound = 0;
};

inline BoundEvaluation error_norm_bound(const SimplicityReport& rep, int n, double alpha_A,
                                     double sup_starF, double sup_dkappa) {
  BoundEvaluation b;
  b.n = n;
  b.C1 = rep.C1;
  b.C2 = rep.C2;
  b.tau_inf = rep.tau_inf;
  b.alpha_A = alpha_A;
  b.sup_starF = sup_starF;
  b.sup_dkappa = sup_dkappa;
  b.vol_M = rep.vol_M;
  const double t = b.tau_inf;
  b.C = std::pow(double(n), 3) * std::exp(6.0 * alpha_A * t) * (b.C2 * b.C2) /
        std::pow(b.C1, 3) * (t * t / 2.0);
  b.Cprime = double(n) * std::exp(2.0 * alpha_A * t) * std::pow(b.C2, 6) / std::pow(b.C1, 5) *
             (t * t * t * t / 24.0);
  b.bound = std::sqrt(b.vol_M / two_pi) *
            std::sqrt(b.C * sup_starF * sup_starF + b.Cprime * sup_dkappa * sup_dkappa);
  return b;
}

// Connection-free form of the same estimate, with the sharper constant that
// the scalar-kernel derivation allows.
inline double no_connection_bound(const SimplicityReport& rep, double sup_dkappa) {
  return sup_dkappa * std::pow(rep.C2, 3) * rep.tau_inf * rep.tau_inf /
         (24.0 * std::pow(rep.C1, 2.5)) * std::sqrt(rep.vol_M / two_pi);
}

// Sup norms entering the bound: alpha_A = sup over the sphere bundle of the
// Frobenius norm of the Hermitian part of the connection contracted with the
// direction, and the sup Frobenius norm of its curvature (a direction-free
// quantity, assembled at angle zero).
struct ConnectionBounds {
  double alpha_A = 0, sup_starF = 0;
};

inline ConnectionBounds connection_bounds(const IsothermalMetric& m, const MatrixConnection* A,
                                          int n_radial = 48, int n_angular = 64, int n_fiber = 32) {
  ConnectionBounds out;
  if (!A) return out;
  const int n = A->n();
  const double R = m.radius();
  ConnJet cj;
  CMat Am(n, n), AV(n, n), Ax(n, n), Ay(n, n), AVx(n, n), AVy(n, n), SF(n, n), herm(n, n);
  const cplx i1(0, 1);
  for (int ir = 0; ir < n_radial; ++ir) {
    double r = R * (ir + 0.5) / n_radial;
    for (int ia = 0; ia < n_angular; ++ia) {
      double phi = two_pi * ia / n_angular;
      double x = r * std::cos(phi), y = r * std::sin(phi);
      MetricJet j = m.jet(x, y);
      double e = std::exp(-j.lam);
      A->jet(x, y, cj, true);
      for (int it = 0; it < n_fiber; ++it) {
        double th = two_pi * it / n_fiber;
        cplx ep = std::polar(1.0, th), em = std::conj(ep);
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) Am(a, b) = e * (cj.Az(a, b) * ep + cj.Azb(a, b) * em);
        herm = 0.5 * (Am + Am.adjoint());
        out.alpha_A = std::max(out.alpha_A, herm.norm());
      }
      // curvature at theta = 0 (the combination has no angular dependence)
      cplx ep(1, 0), em(1, 0);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          Am(a, b) = e * (cj.Az(a, b) * ep + cj.Azb(a, b) * em);
          AV(a, b) = i1 * e * (cj.Az(a, b) * ep - cj.Azb(a, b) * em);
          Ax(a, b) = e * (cj.Azx(a, b) * ep + cj.Azbx(a, b) * em);
          Ay(a, b) = e * (cj.Azy(a, b) * ep + cj.Azby(a, b) * em);
          AVx(a, b) = i1 * e * (cj.Azx(a, b) * ep - cj.Azbx(a, b) * em);
          AVy(a, b) = i1 * e * (cj.Azy(a, b) * ep - cj.Azby(a, b) * em);
        }
      Ax -= j.lx * Am;
      Ay -= j.ly * Am;
      AVx -= j.lx * AV;
      AVy -= j.ly * AV;
      double u = j.ly, up = j.lx;  // theta-coefficients at angle zero
      SF.noalias() = Am * AV;
      SF.noalias() -= AV * Am;
      SF += e * (AVx - u * Am);
      SF += e * (-Ay + up * AV);
      out.sup_starF = std::max(out.sup_starF, SF.norm());
    }
  }
  return out;
}

inline BoundEvaluation error_norm_bound(const FilterPlan& plan) {
  ConnectionBounds cb = connection_bounds(plan.m, plan.conn());
  return error_norm_bound(plan.geom, plan.nc(), cb.alpha_A, cb.sup_starF, plan.geom.sup_dkappa);
}

// ===================================================== kernel-bound checker

// Samples |V(b1/b2)| and |V(1/b2)| along random interior traces and compares
// them with the quadratic bound (|dkappa| C2^3 / (12 C1^2)) t^2. Times below
// the floor are skipped: both quantities are O(t^2) there and the ODE's
// absolute tolerance dominates them. margin() > 1 means the bound holds
// strictly on every sampled point.
struct KernelBoundReport {
  std::int64_t points = 0;
  double max_ratio = 0;  // measured / bound, worst sample
  double max_abs = 0;    // worst |V(b1/b2)|, |V(1/b2)| seen (bound-free)
  double coeff = 0;      // |dkappa| C2^3 / (12 C1^2)
  double margin() const {
    return max_ratio > 0 ? 1.0 / max_ratio : std::numeric_limits<double>::infinity();
  }
};

inline KernelBoundReport kernel_bound_check(const FilterPlan& plan, std::int64_t min_points,
                                            std::uint64_t seed = 7) {
  KernelBoundReport rep;
  const SimplicityReport& geo = plan.geom;
  rep.coeff = geo.sup_dkappa * std::pow(geo.C2, 3) / (12.0 * geo.C1 * geo.C1);
  SplitMix64 rng(seed);
  TraceOpts opts = plan.topt;
  opts.samples = true;
  TraceFlags fl;
  fl.variation = true;
  const double R = plan.m.radius();
  TraceWorkspace ws{};
  std::int64_t traces = 0;
  while (rep.points < min_points && traces < min_points + 200000) {
    ++traces;
    double r = R * std::sqrt(rng.uniform()) * 0.999;
    double phi = two_pi * rng.uniform();
    PhasePoint q{r * std::cos(phi), r * std::sin(phi), two_pi * rng.uniform()};
    GeodesicTrace tr = trace_augmented(plan.m, nullptr, q, fl, opts, &ws);
    const double floor = std::max(0.05 * tr.tau, 0.01 * geo.tau_inf);
    for (const TraceSample& s : tr.samples) {
      if (s.t < floor || std::abs(s.b2) < 1e-12) continue;
      double v1 = std::abs(detail::v_ratio_b1b2(s));
      double v2 = std::abs(detail::v_ratio_1b2(s));
      rep.max_abs = std::max(rep.max_abs, std::max(v1, v2));
      double bnd = rep.coeff * s.t * s.t;
      if (bnd > 0) rep.max_ratio = std::max(rep.max_ratio, std::max(v1, v2) / bnd);
      ++rep.points;
    }
  }
  return rep;
}

// ============================================================ lambda sweep

// Reconstruction quality of the function-transform pipeline as the
// connection is scaled through a family lambda * A: forward data, filtered
// backprojection, then the Krylov Fredholm solve. Scale zero routes through
// the connection-free code path, so that row is exactly the no-connection
// reconstruction.
struct SweepRow {
  cplx lambda;
  double bound = 0;      // norm bound at this scale
  double rel_err = 0;    // weighted-L2 error of the solved field vs the phantom
  double residual = 0;   // final Krylov relative residual
  int iterations = 0;
  bool converged = false;
};

struct SweepReport {
  std::vector<SweepRow> rows;
};

inline SweepReport lambda_sweep(const IsothermalMetric& m, const MatrixConnection& A,
                                const std::vector<cplx>& lambdas, const InteriorField& phantom,
                                const FanGrid& fan, const Grid2& g, int nth, TraceOpts opts = {},
                                KrylovOpts ko = {}, SimplicityOpts so = {}) {
  SweepReport rep;
  const SimplicityReport geom = simplicity_constants(m, so);
  const double pnorm = norm_M(m, phantom);
  for (cplx lam : lambdas) {
    MatrixConnection Al = A.scaled(lam);
    const MatrixConnection* Ap = (lam == cplx(0)) ? nullptr : &Al;
    FilterPlan plan = make_filter_plan(m, Ap, fan, g, nth, opts, &geom);
    BoundaryField d = forward_I0(m, Ap, phantom, fan, opts);
    InteriorField r = fbp_I0(plan, d);
    FredholmResult fr = solve_fredholm(plan, r, ErrorOp::WA, ko);
    SweepRow row;
    row.lambda = lam;
    ConnectionBounds cb = connection_bounds(m, Ap);
    row.bound = error_norm_bound(geom, phantom.nc, cb.alpha_A, cb.sup_starF, geom.sup_dkappa).bound;
    double err = 0;
    {
      InteriorField diff = fr.f;
      for (size_t i = 0; i < diff.v.size(); ++i) diff.v[i] -= phantom.v[i];
      err = norm_M(m, diff) / std::max(pnorm, 1e-300);
    }
    row.rel_err = err;
    row.residual = fr.krylov.residual;
    row.iterations = fr.krylov.iterations;
    row.converged = fr.krylov.converged;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace geoxray
