// Boundary data-space machinery built on the scattering relation: smooth
// interpolants of alpha / alpha∘a / tau over the inflow fan, the extension
// Q_{A,±} of inflow data to the full boundary bundle, the fold B_{A,±} back
// onto the inflow half, symmetry decompositions of the inflow data space,
// and the composite range filters P_{A,±} = B_{A,-} H_± Q_{A,+}.
#pragma once

#include "harmonics.hpp"
#include "transport.hpp"

namespace geoxray {

namespace detail {

// Cubic sample of a per-chord table tab[ib * nh + jt] over the inflow half:
// periodic in beta, clamped in the recentred angle t with the stencil shifted
// inward at the tangency ends (one-sided extrapolation beyond the last node).
inline double half_table_sample(const double* tab, const FanGrid& fan, double beta, double t) {
  const int nh = fan.half_count();
  double jb = wrap_2pi(beta) / two_pi * fan.nbeta;
  double jt = (t + pi / 2) / two_pi * fan.nomega - 0.5;
  int ib0 = int(std::floor(jb));
  auto wb = cubic_weights(jb - ib0);
  int it0 = std::clamp(int(std::floor(jt)), 1, nh - 3);
  auto wt = cubic_weights(jt - it0);
  double acc = 0;
  for (int a = -1; a <= 2; ++a) {
    int ib = ((ib0 + a) % fan.nbeta + fan.nbeta) % fan.nbeta;
    double row = 0;
    for (int b = -1; b <= 2; ++b) row += wt[b + 1] * tab[size_t(ib) * nh + (it0 + b)];
    acc += wb[a + 1] * row;
  }
  return acc;
}

}  // namespace detail

// Inflow-half sample of a boundary field with the stencil shifted inward at
// the tangency ends. Unlike fan_sample_half (zero extension, right for data
// vanishing like mu), this extrapolates one-sided, which is exact for
// constants and right for generic inflow data that stays finite at tangency.
inline cplx inflow_sample(const BoundaryField& f, int c, double beta, double t) {
  const FanGrid& fan = f.fan;
  const int nh = fan.half_count();
  double jb = wrap_2pi(beta) / two_pi * fan.nbeta;
  double jt = (t + pi / 2) / two_pi * fan.nomega - 0.5;
  int ib0 = int(std::floor(jb));
  auto wb = cubic_weights(jb - ib0);
  int it0 = std::clamp(int(std::floor(jt)), 1, nh - 3);
  auto wt = cubic_weights(jt - it0);
  cplx acc(0);
  for (int a = -1; a <= 2; ++a) {
    int ib = ((ib0 + a) % fan.nbeta + fan.nbeta) % fan.nbeta;
    cplx row(0);
    for (int b = -1; b <= 2; ++b) row += wt[b + 1] * f.at(ib, fan.inward_j(it0 + b), c);
    acc += wb[a + 1] * row;
  }
  return acc;
}

inline void inflow_sample_vec(const BoundaryField& f, double beta, double t, CVec& out) {
  out.resize(f.nc);
  for (int c = 0; c < f.nc; ++c) out[c] = inflow_sample(f, c, beta, t);
}

// Bi-periodic cubic sample over the full fan torus (beta, omega); used when
// both halves carry data and the fiber Hilbert transform has mixed them.
inline cplx fan_sample_torus(const BoundaryField& f, int c, double beta, double omega) {
  const FanGrid& fan = f.fan;
  double jb = wrap_2pi(beta) / two_pi * fan.nbeta;
  double jw = wrap_2pi(omega) / two_pi * fan.nomega - 0.5;
  int ib0 = int(std::floor(jb)), iw0 = int(std::floor(jw));
  auto wb = cubic_weights(jb - ib0);
  auto ww = cubic_weights(jw - iw0);
  cplx acc(0);
  for (int a = -1; a <= 2; ++a) {
    int ib = ((ib0 + a) % fan.nbeta + fan.nbeta) % fan.nbeta;
    cplx row(0);
    for (int b = -1; b <= 2; ++b) {
      int j = ((iw0 + b) % fan.nomega + fan.nomega) % fan.nomega;
      row += ww[b + 1] * f.at(ib, j, c);
    }
    acc += wb[a + 1] * row;
  }
  return acc;
}

// -------------------------------------------------------- scattering tables

// Interpolated scattering relation. The interpolation variables are
// dbeta = beta_out - beta - pi and omega_tilde = omega_out - pi: both extend
// continuously to the tangency ends of the inflow half, unlike beta_out and
// omega_out themselves, whose wrap seams sit exactly there.
struct ScatteringTables {
  ScatteringData sd;

  const FanGrid& fan() const { return sd.fan; }

  // chord exit time from the inflow point (beta, t), t from the inward normal
  double tau(double beta, double t) const {
    return std::max(0.0, detail::half_table_sample(sd.tau.data(), sd.fan, beta, t));
  }

  // alpha∘a: the inflow-to-inflow involution, recentred coordinates
  void alpha_a(double beta, double t, double& beta2, double& t2) const {
    beta2 = wrap_2pi(beta + pi + detail::half_table_sample(sd.dbeta.data(), sd.fan, beta, t));
    t2 = detail::half_table_sample(sd.omega_tilde.data(), sd.fan, beta, t);
  }

  // alpha: the other endpoint (with direction of travel) of the geodesic
  // through the boundary point (beta, omega); maps inflow to outflow points
  // and outflow to inflow.
  void alpha(double beta, double omega, double& beta2, double& omega2) const {
    if (std::cos(omega) > 0) {  // inflow: exit point of the forward chord
      double t = wrap_pm(omega);
      beta2 = wrap_2pi(beta + pi + detail::half_table_sample(sd.dbeta.data(), sd.fan, beta, t));
      omega2 = wrap_2pi(detail::half_table_sample(sd.omega_tilde.data(), sd.fan, beta, t) + pi);
    } else {  // outflow: entry of the arriving chord = alpha∘a of the flip
      double b2, t2;
      alpha_a(beta, wrap_pm(omega - pi), b2, t2);
      beta2 = b2;
      omega2 = wrap_2pi(t2);
    }
  }
};

inline ScatteringTables build_scattering_tables(const IsothermalMetric& m,
                                                const MatrixConnection* A, const FanGrid& fan,
                                                const TraceOpts& opts = {}) {
  return ScatteringTables{scattering_data(m, A, fan, opts)};
}

// ------------------------------------------------------- Q / B / P operators

namespace detail {
inline void require_fan_match(const FanGrid& a, const FanGrid& b, const char* who) {
  if (a.nbeta != b.nbeta || a.nomega != b.nomega)
    throw config_error(std::string(who) + ": fan grid mismatch");
}
inline void require_channels(const ScatteringData& sd, int nc, const char* who) {
  if (sd.has_conn && nc != sd.n)
    throw config_error(std::string(who) + ": channel count does not match connection size");
}
}  // namespace detail

// Q_{A,±}: extend inflow data h to the full boundary bundle. Identity on the
// inflow half; at an outflow node q the chord through q entered the disk at
// alpha(q), and the transport propagator at q is the stored per-node C value
// (the outflow node (ib, jt) is the antipodal flip of the inward node
// (ib, jt), i.e. its chord run backwards), so the value is ±C·h(alpha(q))
// with alpha(q) = (beta_out, omega_tilde) of the inward node.
inline BoundaryField extend_Q(const ScatteringTables& st, const BoundaryField& h, int sign) {
  const ScatteringData& sd = st.sd;
  const FanGrid& fan = sd.fan;
  detail::require_fan_match(fan, h.fan, "extend_Q");
  detail::require_channels(sd, h.nc, "extend_Q");
  BoundaryField out(fan, h.nc);
  const int nh = fan.half_count();
  const double sg = sign < 0 ? -1.0 : 1.0;
  std::vector<std::pair<CVec, CVec>> scratch(num_threads());
  parallel_for(std::int64_t(fan.nbeta) * nh, [&](std::int64_t id) {
    int ib = int(id / nh), jt = int(id % nh);
    int ji = fan.inward_j(jt), jo = fan.outward_j(jt);
    size_t k = sd.idx(ib, jt);
    for (int c = 0; c < h.nc; ++c) out.at(ib, ji, c) = h.at(ib, ji, c);
    auto& [hv, tv] = scratch[worker_id()];
    inflow_sample_vec(h, sd.beta_out[k], sd.omega_tilde[k], hv);
    if (sd.has_conn) {
      tv.noalias() = sd.C[k] * hv;
      for (int c = 0; c < h.nc; ++c) out.at(ib, jo, c) = sg * tv[c];
    } else {
      for (int c = 0; c < h.nc; ++c) out.at(ib, jo, c) = sg * hv[c];
    }
  });
  return out;
}

// B_{A,±}: fold full-boundary data g onto the inflow half,
// (Bg)(p) = g(p) ± C_A^{-1}(alpha(p)) g(alpha(p)). C_A^{-1} at the chord's
// exit point equals the stored outflow-node C value, and g at the exit point
// (beta_out, omega_out) is read with the bi-periodic torus sample since g
// generally carries data on both halves. The outflow half of the result is 0.
inline BoundaryField fold_B(const ScatteringTables& st, const BoundaryField& g, int sign) {
  const ScatteringData& sd = st.sd;
  const FanGrid& fan = sd.fan;
  detail::require_fan_match(fan, g.fan, "fold_B");
  detail::require_channels(sd, g.nc, "fold_B");
  BoundaryField out(fan, g.nc);
  const int nh = fan.half_count();
  const double sg = sign < 0 ? -1.0 : 1.0;
  std::vector<std::pair<CVec, CVec>> scratch(num_threads());
  parallel_for(std::int64_t(fan.nbeta) * nh, [&](std::int64_t id) {
    int ib = int(id / nh), jt = int(id % nh);
    int ji = fan.inward_j(jt);
    size_t k = sd.idx(ib, jt);
    auto& [gv, tv] = scratch[worker_id()];
    gv.resize(g.nc);
    for (int c = 0; c < g.nc; ++c) gv[c] = fan_sample_torus(g, c, sd.beta_out[k], sd.omega_out[k]);
    if (sd.has_conn) {
      tv.noalias() = sd.C[k] * gv;
      for (int c = 0; c < g.nc; ++c) out.at(ib, ji, c) = g.at(ib, ji, c) + sg * tv[c];
    } else {
      for (int c = 0; c < g.nc; ++c) out.at(ib, ji, c) = g.at(ib, ji, c) + sg * gv[c];
    }
  });
  return out;
}

// Plain (non-orthogonal) symmetry projections
//   h ↦ (h ± C_A^{-1}(alpha(p)) h(alpha_a(p))) / 2.
// The two signs reassemble h and land in the ± transport-symmetric subspaces
// (h(alpha_a p) = ±C_A(alpha(p)) h(p)); used to manufacture members.
inline BoundaryField v_space_project(const ScatteringTables& st, const BoundaryField& h,
                                     int sign) {
  const ScatteringData& sd = st.sd;
  const FanGrid& fan = sd.fan;
  detail::require_fan_match(fan, h.fan, "v_space_project");
  detail::require_channels(sd, h.nc, "v_space_project");
  BoundaryField out(fan, h.nc);
  const int nh = fan.half_count();
  const double sg = sign < 0 ? -1.0 : 1.0;
  std::vector<std::pair<CVec, CVec>> scratch(num_threads());
  parallel_for(std::int64_t(fan.nbeta) * nh, [&](std::int64_t id) {
    int ib = int(id / nh), jt = int(id % nh);
    int ji = fan.inward_j(jt);
    size_t k = sd.idx(ib, jt);
    auto& [gv, tv] = scratch[worker_id()];
    inflow_sample_vec(h, sd.beta_out[k], sd.omega_tilde[k], gv);
    if (sd.has_conn)
      tv.noalias() = sd.C[k] * gv;
    else
      tv = gv;
    for (int c = 0; c < h.nc; ++c) out.at(ib, ji, c) = 0.5 * (h.at(ib, ji, c) + sg * tv[c]);
  });
  return out;
}

// Relative sup residual of the symmetry h(alpha_a p) = ±C h(p) over the
// inflow fan, with C = C_A(alpha(p)) by default or, for the -A* companion
// space, C = C_A(alpha(p))^{-*} (adjoint_partner = true).
inline double membership_residual(const ScatteringTables& st, const BoundaryField& h, int sign,
                                  bool adjoint_partner = false) {
  const ScatteringData& sd = st.sd;
  const FanGrid& fan = sd.fan;
  detail::require_fan_match(fan, h.fan, "membership_residual");
  detail::require_channels(sd, h.nc, "membership_residual");
  const int nh = fan.half_count();
  const double sg = sign < 0 ? -1.0 : 1.0;
  double rmax = 0, hmax = 0;
  CVec gv, hv, mv;
  for (int ib = 0; ib < fan.nbeta; ++ib)
    for (int jt = 0; jt < nh; ++jt) {
      int ji = fan.inward_j(jt);
      size_t k = sd.idx(ib, jt);
      inflow_sample_vec(h, sd.beta_out[k], sd.omega_tilde[k], gv);
      hv.resize(h.nc);
      for (int c = 0; c < h.nc; ++c) hv[c] = h.at(ib, ji, c);
      if (sd.has_conn)
        mv = adjoint_partner ? CVec(sd.C[k].adjoint() * hv) : CVec(sd.C_alpha[k] * hv);
      else
        mv = hv;
      rmax = std::max(rmax, (gv - sg * mv).cwiseAbs().maxCoeff());
      hmax = std::max(hmax, hv.cwiseAbs().maxCoeff());
    }
  return rmax / std::max(hmax, 1e-300);
}

// Orthogonal splitting of inflow data, h = h_plus + h_minus with h_plus in
// the A-symmetric space and h_minus in the -A*-antisymmetric one, orthogonal
// in L²_mu. Per inflow node, with C = C_A(alpha(p)) and g = h(alpha_a(p)):
//   h_plus  = (I + C*C)^{-1} (h + C* g)
//   h_minus = (I + C^{-1}C^{-*})^{-1} (h - C^{-1} g)
// (the two solves sum to h identically). Solves are partial-pivot LU; nodes
// whose reciprocal condition estimate falls below 1e-8 are counted and
// reported through the warning log.
inline std::pair<BoundaryField, BoundaryField> symmetry_decompose(const ScatteringTables& st,
                                                                  const BoundaryField& h) {
  const ScatteringData& sd = st.sd;
  const FanGrid& fan = sd.fan;
  detail::require_fan_match(fan, h.fan, "symmetry_decompose");
  detail::require_channels(sd, h.nc, "symmetry_decompose");
  BoundaryField hp(fan, h.nc), hm(fan, h.nc);
  const int nh = fan.half_count();
  std::vector<int> ill(num_threads(), 0);
  std::vector<std::pair<CVec, CVec>> scratch(num_threads());
  parallel_for(std::int64_t(fan.nbeta) * nh, [&](std::int64_t id) {
    int ib = int(id / nh), jt = int(id % nh);
    int ji = fan.inward_j(jt);
    size_t k = sd.idx(ib, jt);
    auto& [gv, hv] = scratch[worker_id()];
    inflow_sample_vec(h, sd.beta_out[k], sd.omega_tilde[k], gv);
    hv.resize(h.nc);
    for (int c = 0; c < h.nc; ++c) hv[c] = h.at(ib, ji, c);
    if (!sd.has_conn) {
      for (int c = 0; c < h.nc; ++c) {
        hp.at(ib, ji, c) = 0.5 * (hv[c] + gv[c]);
        hm.at(ib, ji, c) = 0.5 * (hv[c] - gv[c]);
      }
      return;
    }
    const CMat& C = sd.C_alpha[k];  // C_A at the chord exit point
    const CMat& Ci = sd.C[k];       // its inverse
    const CMat I = CMat::Identity(sd.n, sd.n);
    Eigen::PartialPivLU<CMat> lup(I + C.adjoint() * C);
    Eigen::PartialPivLU<CMat> lum(I + Ci * Ci.adjoint());
    if (lup.rcond() < 1e-8 || lum.rcond() < 1e-8) ++ill[worker_id()];
    CVec xp = lup.solve(hv + C.adjoint() * gv);
    CVec xm = lum.solve(hv - Ci * gv);
    for (int c = 0; c < h.nc; ++c) {
      hp.at(ib, ji, c) = xp[c];
      hm.at(ib, ji, c) = xm[c];
    }
  });
  int bad = 0;
  for (int b : ill) bad += b;
  if (bad > 0)
    gx_warn("symmetry_decompose: " + std::to_string(bad) +
            " scattering nodes with LU rcond < 1e-8");
  return {std::move(hp), std::move(hm)};
}

// Cosine damping of the fiber nodes within `width` spacings of a tangency
// angle (omega = ±pi/2). Composite pipelines apply it to the Hilbert-stage
// output: on compatible data the continuum value vanishes there (tau -> 0),
// so the taper only suppresses discretization ringing from the tangency kink.
inline void tangency_taper(BoundaryField& f, int width = 3) {
  const FanGrid& fan = f.fan;
  const double wlim = width * (two_pi / fan.nomega);
  for (int j = 0; j < fan.nomega; ++j) {
    double w = fan.omega(j);
    double d = std::min(std::abs(wrap_pm(w - pi / 2)), std::abs(wrap_pm(w + pi / 2)));
    if (d >= wlim) continue;
    double s = 0.5 * (1.0 - std::cos(pi * d / wlim));
    for (int ib = 0; ib < fan.nbeta; ++ib)
      for (int c = 0; c < f.nc; ++c) f.at(ib, j, c) *= s;
  }
}

// Range filters P_{A,±} = B_{A,-} H_± Q_{A,+}: extend, apply the fiberwise
// Hilbert transform over the full direction circle restricted to even/odd
// fiber harmonics, damp the tangency ring, fold back.
inline BoundaryField range_P(const ScatteringTables& st, const BoundaryField& w, int parity) {
  BoundaryField q = extend_Q(st, w, +1);
  BoundaryField hq = hilbert(q, parity > 0 ? HilbertParity::even : HilbertParity::odd);
  tangency_taper(hq);
  return fold_B(st, hq, -1);
}

// ------------------------------------------------------------- L²_mu pairing

// Inner product over the inflow boundary, conjugate-linear in the first
// argument: sum of <h1, h2> mu dSigma² with mu = cos(omega) and
// dSigma² = e^{lambda} R dbeta domega.
inline cplx pairing_mu(const IsothermalMetric& m, const BoundaryField& h1,
                       const BoundaryField& h2) {
  detail::require_fan_match(h1.fan, h2.fan, "pairing_mu");
  if (h1.nc != h2.nc) throw config_error("pairing_mu: channel count mismatch");
  const FanGrid& fan = h1.fan;
  const int nh = fan.half_count();
  const double cell = (two_pi / fan.nbeta) * (two_pi / fan.nomega) * fan.R;
  cplx acc(0);
  for (int ib = 0; ib < fan.nbeta; ++ib) {
    double b = fan.beta(ib);
    double el = std::exp(m.lambda(fan.R * std::cos(b), fan.R * std::sin(b)));
    for (int jt = 0; jt < nh; ++jt) {
      int j = fan.inward_j(jt);
      double mu = std::cos(fan.inward_omega_t(jt));
      cplx dot(0);
      for (int c = 0; c < h1.nc; ++c) dot += std::conj(h1.at(ib, j, c)) * h2.at(ib, j, c);
      acc += dot * (mu * el * cell);
    }
  }
  return acc;
}

inline double norm_mu(const IsothermalMetric& m, const BoundaryField& h) {
  return std::sqrt(std::max(0.0, pairing_mu(m, h, h).real()));
}

}  // namespace geoxray
