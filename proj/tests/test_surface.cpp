#include <catch2/catch_amalgamated.hpp>

#include "geoxray/geodesic.hpp"

using namespace geoxray;

namespace {

// Nested centered finite differences for commutators of frame fields.
// Each directional derivative uses the field evaluated at its own base point.
template <class U>
double dir_deriv(const IsothermalMetric& m, const U& u, const PhasePoint& q,
                 int which,  // 0 = X, 1 = Xperp, 2 = V
                 double h) {
  auto pick = [&](const PhasePoint& p) {
    FrameCoeffs fc = frame_coefficients(m, p);
    const auto& c = which == 0 ? fc.X : which == 1 ? fc.Xperp : fc.V;
    return c;
  };
  auto c = pick(q);
  PhasePoint qp{q.x + h * c[0], q.y + h * c[1], q.th + h * c[2]};
  PhasePoint qm{q.x - h * c[0], q.y - h * c[1], q.th - h * c[2]};
  return (u(qp) - u(qm)) / (2 * h);
}

template <class U>
double commutator_fd(const IsothermalMetric& m, const U& u, const PhasePoint& q, int a, int b,
                     double h) {
  auto du_b = [&](const PhasePoint& p) { return dir_deriv(m, u, p, b, h); };
  auto du_a = [&](const PhasePoint& p) { return dir_deriv(m, u, p, a, h); };
  return dir_deriv(m, du_b, q, a, h) - dir_deriv(m, du_a, q, b, h);
}

double test_u(const PhasePoint& q) {
  return std::sin(1.3 * q.x + 0.4) * std::cos(0.9 * q.y - 0.2) * std::sin(q.th) +
         0.3 * std::cos(2 * q.th + q.x);
}

// analytic gradient of test_u in (x, y, theta)
std::array<double, 3> test_u_grad(const PhasePoint& q) {
  double s1 = std::sin(1.3 * q.x + 0.4), c1 = std::cos(1.3 * q.x + 0.4);
  double s2 = std::sin(0.9 * q.y - 0.2), c2 = std::cos(0.9 * q.y - 0.2);
  return {1.3 * c1 * c2 * std::sin(q.th) - 0.3 * std::sin(2 * q.th + q.x),
          -0.9 * s1 * s2 * std::sin(q.th),
          s1 * c2 * std::cos(q.th) - 0.6 * std::sin(2 * q.th + q.x)};
}

double apply_field(const std::array<double, 3>& c, const std::array<double, 3>& g) {
  return c[0] * g[0] + c[1] * g[1] + c[2] * g[2];
}

}  // namespace

TEST_CASE("curvature of the three analytic factors", "[surface]") {
  auto flat = IsothermalMetric::euclidean();
  auto sph = IsothermalMetric::constant_curvature(+1.0, 0.5);
  auto hyp = IsothermalMetric::constant_curvature(-1.0, 0.8);
  CHECK(flat.curvature(0.2, -0.4) == 0.0);
  CHECK(sph.curvature(0.3, 0.1) == Catch::Approx(1.0).margin(1e-12));
  CHECK(hyp.curvature(0.0, 0.5) == Catch::Approx(-1.0).margin(1e-12));
  SplitMix64 rng(7);
  for (int i = 0; i < 20; ++i) {
    double r = 0.75 * std::sqrt(rng.uniform()), b = two_pi * rng.uniform();
    CHECK(hyp.curvature(r * std::cos(b), r * std::sin(b)) == Catch::Approx(-1.0).margin(1e-10));
    CHECK(sph.curvature(0.45 * r * std::cos(b), 0.29 * r * std::sin(b)) ==
          Catch::Approx(1.0).margin(1e-10));
  }
  CHECK_THROWS_AS(hyp.curvature(0.9, 0.0), GxError);
}

TEST_CASE("frame coefficients match the flat table", "[surface]") {
  auto flat = IsothermalMetric::euclidean();
  FrameCoeffs fc = frame_coefficients(flat, {0.0, 0.0, 0.0});
  CHECK(fc.X[0] == Catch::Approx(1.0));
  CHECK(fc.X[1] == Catch::Approx(0.0).margin(1e-15));
  CHECK(fc.X[2] == Catch::Approx(0.0).margin(1e-15));
  CHECK(fc.V[2] == Catch::Approx(1.0));
  CHECK(fc.Xperp[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(fc.Xperp[1] == Catch::Approx(-1.0));
  CHECK(fc.Xperp[2] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("structure equations hold at observed order >= 1.8", "[surface]") {
  auto m = IsothermalMetric::gaussian_bump(0.1, 0.35);
  SplitMix64 rng(11);
  std::vector<PhasePoint> pts;
  for (int i = 0; i < 12; ++i) {
    double r = 0.55 * std::sqrt(rng.uniform()), b = two_pi * rng.uniform();
    pts.push_back({r * std::cos(b), r * std::sin(b), two_pi * rng.uniform()});
  }
  auto residuals = [&](double h) {
    double r1 = 0, r2 = 0, r3 = 0;
    for (const auto& q : pts) {
      FrameCoeffs fc = frame_coefficients(m, q);
      auto g = test_u_grad(q);
      double kap = m.curvature(q.x, q.y);
      r1 = std::max(r1, std::abs(commutator_fd(m, test_u, q, 0, 2, h) - apply_field(fc.Xperp, g)));
      r2 = std::max(r2, std::abs(commutator_fd(m, test_u, q, 1, 2, h) + apply_field(fc.X, g)));
      r3 = std::max(r3, std::abs(commutator_fd(m, test_u, q, 0, 1, h) +
                                 kap * apply_field(fc.V, g)));
    }
    return std::array<double, 3>{r1, r2, r3};
  };
  auto ra = residuals(0.04), rb = residuals(0.02);
  for (int k = 0; k < 3; ++k) {
    double order = std::log2(ra[k] / rb[k]);
    INFO("commutator " << k << ": res(h)=" << ra[k] << " res(h/2)=" << rb[k]
                       << " order=" << order);
    CHECK(order >= 1.8);
  }
}

TEST_CASE("flat chords and Jacobi scalars", "[surface]") {
  auto flat = IsothermalMetric::euclidean();
  TraceOpts o;
  o.samples = true;
  auto tr = trace_geodesic(flat, {0, 0, 0}, o);
  CHECK(tr.tau == Catch::Approx(1.0).margin(1e-9));
  CHECK(tr.exit.x == Catch::Approx(1.0).margin(1e-9));
  CHECK(tr.exit.y == Catch::Approx(0.0).margin(1e-9));
  for (const auto& s : tr.samples) {
    CHECK(s.b2 == Catch::Approx(-s.t).margin(1e-10));
    CHECK(s.b1 == Catch::Approx(1.0).margin(1e-10));
  }
  for (double alpha : {0.0, 0.35, 1.1, -0.8}) {
    double tau = exit_time(flat, from_boundary(1.0, 0.7, alpha));
    CHECK(tau == Catch::Approx(2 * std::cos(alpha)).margin(1e-8));
  }
}

TEST_CASE("hyperbolic Jacobi field and chord length", "[surface]") {
  auto hyp = IsothermalMetric::constant_curvature(-1.0, 0.8);
  TraceOpts o;
  o.samples = true;
  o.rtol = 1e-12;
  o.atol = 1e-13;
  auto tr = trace_geodesic(hyp, {0, 0, 0.3}, o);
  // distance from the center to the rim of the 0.8-disk in the Poincare model
  CHECK(tr.tau == Catch::Approx(2 * std::atanh(0.8)).margin(1e-9));
  for (const auto& s : tr.samples) CHECK(s.b2 == Catch::Approx(-std::sinh(s.t)).margin(1e-8));
  // full diameter from the rim through the center
  double tau = exit_time(hyp, from_boundary(0.8, 0.0, 0.0), o);
  CHECK(tau == Catch::Approx(4 * std::atanh(0.8)).margin(1e-8));
}

TEST_CASE("Wronskian stays pinned along random traces", "[surface]") {
  auto m = IsothermalMetric::gaussian_bump(0.12, 0.3);
  SplitMix64 rng(23);
  TraceOpts o;
  o.samples = true;
  for (int i = 0; i < 8; ++i) {
    double r = 0.8 * std::sqrt(rng.uniform()), b = two_pi * rng.uniform();
    auto tr = trace_geodesic(m, {r * std::cos(b), r * std::sin(b), two_pi * rng.uniform()}, o);
    for (const auto& s : tr.samples)
      CHECK(std::abs(s.b1 * s.c2 - s.b2 * s.c1 - 1.0) <= 10 * o.rtol);
  }
}

TEST_CASE("Jacobi cocycle across a restart", "[surface]") {
  auto m = IsothermalMetric::gaussian_bump(0.12, 0.3);
  SplitMix64 rng(31);
  TraceOpts o;
  o.samples = true;
  for (int i = 0; i < 6; ++i) {
    double r = 0.6 * std::sqrt(rng.uniform()), b = two_pi * rng.uniform();
    auto tr = trace_geodesic(m, {r * std::cos(b), r * std::sin(b), two_pi * rng.uniform()}, o);
    const auto& s = tr.samples[tr.samples.size() / 3];
    if (s.t <= 0 || s.t >= tr.tau) continue;
    auto tr2 = trace_geodesic(m, {s.q.x, s.q.y, wrap_2pi(s.q.th)}, o);
    CHECK(tr2.tau == Catch::Approx(tr.tau - s.t).margin(1e-7));
    double predicted = tr.exit_state.b2 * s.b1 - tr.exit_state.b1 * s.b2;
    CHECK(tr2.exit_state.b2 == Catch::Approx(predicted).margin(1e-6));
  }
}

TEST_CASE("exit-time identity b2 Xp(tau) = b1 V(tau)", "[surface]") {
  auto m = IsothermalMetric::gaussian_bump(0.1, 0.35);
  SplitMix64 rng(41);
  const double h = 1e-4;
  for (int i = 0; i < 6; ++i) {
    double r = 0.5 * std::sqrt(rng.uniform()), b = two_pi * rng.uniform();
    PhasePoint q{r * std::cos(b), r * std::sin(b), two_pi * rng.uniform()};
    FrameCoeffs fc = frame_coefficients(m, q);
    auto shift = [&](const std::array<double, 3>& c, double eps) {
      return PhasePoint{q.x + eps * c[0], q.y + eps * c[1], q.th + eps * c[2]};
    };
    double xp_tau = (exit_time(m, shift(fc.Xperp, h)) - exit_time(m, shift(fc.Xperp, -h))) / (2 * h);
    double v_tau = (exit_time(m, shift(fc.V, h)) - exit_time(m, shift(fc.V, -h))) / (2 * h);
    auto tr = trace_geodesic(m, q);
    double resid = tr.exit_state.b2 * xp_tau - tr.exit_state.b1 * v_tau;
    CHECK(std::abs(resid) <= std::max(1e-4, 10 * h * h));
  }
}

TEST_CASE("simplicity constants on the three presets", "[surface]") {
  SECTION("euclidean") {
    auto rep = simplicity_constants(IsothermalMetric::euclidean());
    CHECK(rep.C1 == Catch::Approx(1.0).margin(1e-6));
    CHECK(rep.C2 == Catch::Approx(1.0).margin(1e-6));
    CHECK(rep.tau_inf == Catch::Approx(2.0).margin(1e-6));
    CHECK(rep.k_plus <= 1e-10);
    CHECK(rep.k_minus <= 1e-10);
    CHECK(rep.vol_M == Catch::Approx(pi).margin(1e-9));
    CHECK(rep.sup_dkappa <= 1e-12);
  }
  SECTION("hyperbolic 0.8") {
    auto rep = simplicity_constants(IsothermalMetric::constant_curvature(-1.0, 0.8));
    double tau_inf = 4 * std::atanh(0.8);
    CHECK(rep.tau_inf == Catch::Approx(tau_inf).epsilon(1e-5));
    CHECK(rep.tau_inf <= tau_inf + 1e-7);
    CHECK(rep.C1 == Catch::Approx(1.0).margin(5e-3));
    CHECK(rep.C2 == Catch::Approx(std::sinh(rep.tau_inf) / rep.tau_inf).epsilon(1e-5));
    CHECK(rep.k_minus == Catch::Approx(rep.tau_inf * rep.tau_inf / 2).epsilon(1e-6));
    CHECK(rep.k_plus <= 1e-10);
    // Lemma-style envelope: C2 <= exp(k_minus)
    CHECK(rep.C2 <= std::exp(rep.k_minus));
  }
  SECTION("sphere cap 0.3") {
    auto rep = simplicity_constants(IsothermalMetric::constant_curvature(+1.0, 0.3));
    double tau_inf = 4 * std::atan(0.3);
    CHECK(rep.tau_inf == Catch::Approx(tau_inf).epsilon(1e-5));
    CHECK(rep.k_plus == Catch::Approx(rep.tau_inf * rep.tau_inf / 2).epsilon(1e-6));
    CHECK(rep.k_plus < 1.0);
    CHECK(rep.C1 >= 1 - rep.k_plus - 1e-6);
    CHECK(rep.C1 == Catch::Approx(std::sin(rep.tau_inf) / rep.tau_inf).epsilon(1e-5));
    CHECK(rep.C2 == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("Santalo formula agreement", "[surface]") {
  auto flat = IsothermalMetric::euclidean();
  SECTION("constant integrand is exact") {
    auto [lhs, rhs] = santalo_integrate(flat, [](double, double, double) { return 1.0; });
    CHECK(lhs == Catch::Approx(2 * pi * pi).epsilon(1e-6));
    CHECK(rhs == Catch::Approx(2 * pi * pi).epsilon(1e-9));
  }
  SECTION("radial bump on three presets") {
    auto F = [](double x, double y, double) {
      double r2 = x * x + y * y;
      return std::exp(-3.0 * r2) * (1 + 0.5 * x);
    };
    for (auto m : {IsothermalMetric::euclidean(), IsothermalMetric::constant_curvature(-1.0, 0.8),
                   IsothermalMetric::constant_curvature(+1.0, 0.3)}) {
      auto [lhs, rhs] = santalo_integrate(m, F);
      INFO("R=" << m.radius());
      CHECK(std::abs(lhs - rhs) / std::abs(rhs) <= 0.005);
    }
  }
  SECTION("odd integrand integrates to zero") {
    auto F = [](double, double y, double th) { return (1 + 0.3 * y) * std::cos(th); };
    auto [lhs, rhs] = santalo_integrate(flat, F);
    CHECK(std::abs(rhs) <= 1e-12);
    CHECK(std::abs(lhs) <= 1e-4);
  }
}

TEST_CASE("boundary chart round trip", "[surface]") {
  SplitMix64 rng(5);
  for (int i = 0; i < 30; ++i) {
    double beta = two_pi * rng.uniform(), omega = two_pi * rng.uniform(), R = 0.3 + rng.uniform();
    PhasePoint q = from_boundary(R, beta, omega);
    auto bc = to_boundary(q);
    CHECK(std::abs(wrap_pm(bc.beta - beta)) <= 1e-12);
    CHECK(std::abs(wrap_pm(bc.omega - omega)) <= 1e-12);
  }
}
