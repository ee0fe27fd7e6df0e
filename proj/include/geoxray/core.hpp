// Shared numeric utilities: complex linear algebra aliases, deterministic RNG,
// power-of-two FFT, local cubic interpolation, Gauss-Lobatto panels, parallel map.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#define GEOXRAY_VERSION "0.1.0"

namespace geoxray {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// Error taxonomy; `code` doubles as the CLI process exit code.
struct GxError : std::runtime_error {
  int code;  // 2 = config/usage, 3 = numerical failure, 4 = i/o failure
  GxError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
};
inline GxError config_error(const std::string& w) { return GxError(2, w); }
inline GxError numeric_error(const std::string& w) { return GxError(3, w); }
inline GxError io_error(const std::string& w) { return GxError(4, w); }

inline double wrap_2pi(double a) {
  a = std::fmod(a, two_pi);
  return a < 0 ? a + two_pi : a;
}
// wrap to (-pi, pi]
inline double wrap_pm(double a) {
  a = std::fmod(a, two_pi);
  if (a <= -pi) a += two_pi;
  if (a > pi) a -= two_pi;
  return a;
}

// ------------------------------------------------------------------ threads

inline int& thread_override() {
  static int v = 0;  // 0 = not set
  return v;
}
inline void set_threads(int n) { thread_override() = n; }
inline int num_threads() {
  if (thread_override() > 0) return thread_override();
  if (const char* e = std::getenv("GEOXRAY_THREADS")) {
    int n = std::atoi(e);
    if (n > 0) return n;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Index of the calling worker inside a parallel_for body (0 otherwise);
// always < num_threads(), so it can index per-worker scratch pools.
inline int worker_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

// Order-independent parallel map: body(i) must write only slot i state.
// Exceptions escaping body(i) are captured (first one wins) and rethrown on
// the calling thread after the loop, so guards inside worker code stay usable.
template <class F>
void parallel_for(std::int64_t n, F&& body) {
#ifdef _OPENMP
  int nt = num_threads();
  std::exception_ptr eptr = nullptr;
#pragma omp parallel for schedule(static) num_threads(nt)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(gx_parallel_for_eptr)
      if (!eptr) eptr = std::current_exception();
    }
  }
  if (eptr) std::rethrow_exception(eptr);
#else
  for (std::int64_t i = 0; i < n; ++i) body(i);
#endif
}

// ------------------------------------------------------------------ warnings

// Non-fatal contract diagnostics (ill-conditioned scattering matrix, boundary
// decay violations, ...). Collected rather than thrown so batch runs finish;
// reports and tests drain the log with take_warnings().
namespace detail {
inline std::mutex& warn_mutex() {
  static std::mutex m;
  return m;
}
inline std::vector<std::string>& warn_log() {
  static std::vector<std::string> v;
  return v;
}
}  // namespace detail

inline void gx_warn(std::string msg) {
  std::lock_guard<std::mutex> lock(detail::warn_mutex());
  detail::warn_log().push_back(std::move(msg));
}

inline std::vector<std::string> take_warnings() {
  std::lock_guard<std::mutex> lock(detail::warn_mutex());
  std::vector<std::string> out;
  out.swap(detail::warn_log());
  return out;
}

// ---------------------------------------------------------------------- rng

// SplitMix64: tiny, seedable, platform-stable.
struct SplitMix64 {
  std::uint64_t s;
  explicit SplitMix64(std::uint64_t seed) : s(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }  // [0,1)
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  double normal() {  // Box-Muller, one value per call
    double u1 = std::max(uniform(), 0x1.0p-60), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }
  cplx cnormal() {
    double u1 = std::max(uniform(), 0x1.0p-60), u2 = uniform();
    double r = std::sqrt(-std::log(u1));
    return cplx(r * std::cos(two_pi * u2), r * std::sin(two_pi * u2));
  }
};

// -------------------------------------------------------------- smooth step

// C-infinity step: 0 for u<=0, 1 for u>=1, exp-based blend between.
inline double cinf_ramp(double u) { return u > 0 ? std::exp(-1.0 / u) : 0.0; }
inline double cinf_step(double u) {
  if (u <= 0) return 0.0;
  if (u >= 1) return 1.0;
  double a = cinf_ramp(u), b = cinf_ramp(1.0 - u);
  return a / (a + b);
}
inline double cinf_step_d(double u) {  // d/du of cinf_step
  if (u <= 0 || u >= 1) return 0.0;
  double a = cinf_ramp(u), b = cinf_ramp(1.0 - u);
  double ad = a / (u * u), bd = -b / ((1.0 - u) * (1.0 - u));
  double s = a + b;
  return (ad * s - a * (ad + bd)) / (s * s);
}

// ---------------------------------------------------------------------- fft

// In-place radix-2 Cooley-Tukey; n must be a power of two.
inline void fft_pow2(cplx* a, int n, bool inverse) {
  if (n < 1 || (n & (n - 1)) != 0) throw numeric_error("fft size must be a power of two");
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    double ang = (inverse ? two_pi : -two_pi) / len;
    cplx wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        cplx u = a[i + k], v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (int i = 0; i < n; ++i) a[i] /= double(n);
}

// Signed mode index for DFT bin k of an n-point transform.
inline int dft_mode(int k, int n) { return k <= n / 2 ? k : k - n; }

// ------------------------------------------------------------ interpolation

// Cubic Lagrange weights for nodes at offsets {-1,0,1,2}, s in [0,1]
// (or outside for one-sided extrapolation).
inline std::array<double, 4> cubic_weights(double s) {
  return {-s * (s - 1) * (s - 2) / 6.0, (s + 1) * (s - 1) * (s - 2) / 2.0,
          -(s + 1) * s * (s - 2) / 2.0, (s + 1) * s * (s - 1) / 6.0};
}

// 1-D periodic cubic on a uniform grid; x in grid-index units.
template <class T>
T interp1_periodic(const T* v, int n, int stride, double x) {
  double fl = std::floor(x);
  int i0 = int(fl);
  auto w = cubic_weights(x - fl);
  T acc = T(0);
  for (int k = -1; k <= 2; ++k) {
    int i = ((i0 + k) % n + n) % n;
    acc += w[k + 1] * v[i * stride];
  }
  return acc;
}

// 1-D non-periodic cubic with stencil shifted inward at the ends
// (degenerates to one-sided extrapolation outside [0, n-1]).
template <class T>
T interp1_clamped(const T* v, int n, int stride, double x) {
  if (n < 4) throw numeric_error("clamped cubic needs >= 4 nodes");
  int i0 = int(std::floor(x));
  i0 = std::clamp(i0, 1, n - 3);
  auto w = cubic_weights(x - i0);
  T acc = T(0);
  for (int k = -1; k <= 2; ++k) acc += w[k + 1] * v[(i0 + k) * stride];
  return acc;
}

// ------------------------------------------------------------- Gauss-Lobatto

// 5-point Gauss-Lobatto nodes/weights on [0,1]; exact through degree 7.
inline const std::array<double, 5>& lobatto5_nodes() {
  static const double r = std::sqrt(3.0 / 7.0);
  static const std::array<double, 5> n = {0.0, 0.5 * (1.0 - r), 0.5, 0.5 * (1.0 + r), 1.0};
  return n;
}
inline const std::array<double, 5>& lobatto5_weights() {
  static const std::array<double, 5> w = {1.0 / 20.0, 49.0 / 180.0, 16.0 / 45.0, 49.0 / 180.0,
                                          1.0 / 20.0};
  return w;
}

// Composite Gauss-Lobatto sample times on [0, tau]: `panels` panels sharing
// endpoints, 4*panels + 1 strictly increasing nodes.
inline std::vector<double> lobatto_times(double tau, int panels) {
  const auto& nd = lobatto5_nodes();
  std::vector<double> t;
  t.reserve(4 * panels + 1);
  double w = tau / panels;
  for (int p = 0; p < panels; ++p) {
    for (int k = (p == 0 ? 0 : 1); k < 5; ++k) t.push_back((p + nd[k]) * w);
  }
  t.back() = tau;  // guard rounding
  return t;
}

// Quadrature weight attached to composite-Lobatto node i (panel width w).
inline std::vector<double> lobatto_quad_weights(double tau, int panels) {
  const auto& wt = lobatto5_weights();
  std::vector<double> w(4 * panels + 1, 0.0);
  double pw = tau / panels;
  for (int p = 0; p < panels; ++p)
    for (int k = 0; k < 5; ++k) w[4 * p + k] += wt[k] * pw;
  return w;
}

inline int panels_for(double tau, int per_unit) {
  return std::max(1, int(std::ceil(tau * per_unit)));
}

// ------------------------------------------------------------------- grids

// Uniform square grid over [-R,R]^2, row-major (iy outer), disk mask r <= R.
struct Grid2 {
  int nx = 0;
  double R = 1.0;
  double h = 0.0;
  Grid2() = default;
  Grid2(int nx_, double R_) : nx(nx_), R(R_), h(2.0 * R_ / (nx_ - 1)) {}
  double x(int i) const { return -R + h * i; }
  std::int64_t nodes() const { return std::int64_t(nx) * nx; }
  bool inside(int ix, int iy) const {
    double a = x(ix), b = x(iy);
    return a * a + b * b <= R * R * (1.0 + 1e-14);
  }
};

// Fan-beam boundary grid: beta_i = 2*pi*i/nbeta (boundary angle),
// omega_j = 2*pi*(j+1/2)/nomega (direction angle measured from the inward
// normal; chart direction theta = beta + pi + omega). The half offset keeps
// every node off the tangential circle cos(omega) = 0. Inward (partial_+)
// nodes have cos(omega) > 0, outward cos(omega) < 0; mu = cos(omega).
struct FanGrid {
  int nbeta = 0, nomega = 0;
  double R = 1.0;
  FanGrid() = default;
  FanGrid(int nb, int nw, double R_) : nbeta(nb), nomega(nw), R(R_) {
    if (nw < 8 || (nw & (nw - 1)) != 0) throw config_error("fan omega count must be a power of two >= 8");
    if (nw % 4 != 0) throw config_error("fan omega count must be divisible by 4");
  }
  double beta(int i) const { return two_pi * i / nbeta; }
  double omega(int j) const { return two_pi * (j + 0.5) / nomega; }
  double mu(int j) const { return std::cos(omega(j)); }
  bool inward(int j) const { return mu(j) > 0; }
  double theta(int i, int j) const { return wrap_2pi(beta(i) + pi + omega(j)); }
  std::int64_t nodes() const { return std::int64_t(nbeta) * nomega; }
  // Recentred coordinate on the inward half: omega_t in (-pi/2, pi/2),
  // local index jt = 0 .. nomega/2 - 1, omega_t = -pi/2 + 2*pi*(jt+1/2)/nomega.
  int half_count() const { return nomega / 2; }
  int inward_j(int jt) const { return (jt + 3 * nomega / 4) % nomega; }
  double inward_omega_t(int jt) const { return -pi / 2 + two_pi * (jt + 0.5) / nomega; }
  // Same recentring for the outward half: omega = pi/2 + 2*pi*(jt+1/2)/nomega.
  int outward_j(int jt) const { return (jt + nomega / 4) % nomega; }
  double outward_omega_t(int jt) const { return -pi / 2 + two_pi * (jt + 0.5) / nomega; }
};

// --------------------------------------------------------------- summation

// Fixed-order reduction helpers (determinism: never reduce in parallel).
inline double l2_norm(const std::vector<cplx>& v) {
  double s = 0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

inline cplx dotc(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  cplx s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

}  // namespace geoxray
