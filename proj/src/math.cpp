#include "evp/math.hpp"

#include <cmath>

namespace evp {

double phi1(double x) {
  if (std::fabs(x) < 1e-4) {
    // 1 - x/2 + x^2/6 - x^3/24
    return 1.0 + x * (-0.5 + x * (1.0 / 6.0 - x / 24.0));
  }
  return -std::expm1(-x) / x;
}

double phi2(double x) {
  if (std::fabs(x) < 1e-3) {
    // 1/2 - x/6 + x^2/24 - x^3/120
    return 0.5 + x * (-1.0 / 6.0 + x * (1.0 / 24.0 - x / 120.0));
  }
  return (std::expm1(-x) + x) / (x * x);
}

// b = (L/tau_m) phi1(L d) e^(-L/tau_m) == (e^(-L/tau_m) - e^(-L/tau_s))/(tau_m d),
// d = 1/tau_s - 1/tau_m. The phi form is cancellation-safe for small |L d|;
// the difference form avoids overflow in phi1 for large |L d|.
static double transfer_b(double tau_own, double tau_src, double L) {
  const double d = 1.0 / tau_src - 1.0 / tau_own;
  const double x = L * d;
  if (std::fabs(x) <= 1.0)
    return (L / tau_own) * phi1(x) * std::exp(-L / tau_own);
  return (std::exp(-L / tau_own) - std::exp(-L / tau_src)) / (tau_own * d);
}

FlowCoef flow_coef(double tau_m, double tau_s, double L) {
  return {std::exp(-L / tau_m), std::exp(-L / tau_s),
          transfer_b(tau_m, tau_s, L)};
}

AdjFlowCoef adj_flow_coef(double tau_m, double tau_s, double L) {
  return {std::exp(-L / tau_m), std::exp(-L / tau_s),
          transfer_b(tau_s, tau_m, L)};
}

// psi2 = (L^2/tau_own) phi2(L d) e^(-L/tau_own)
//      = (e^(-L/tau_src) - (1 - L d) e^(-L/tau_own)) / (tau_own d^2)
static double psi2(double tau_own, double tau_src, double L) {
  const double d = 1.0 / tau_src - 1.0 / tau_own;
  const double x = L * d;
  if (std::fabs(x) <= 1.0)
    return (L * L / tau_own) * phi2(x) * std::exp(-L / tau_own);
  return (std::exp(-L / tau_src) - (1.0 - x) * std::exp(-L / tau_own)) /
         (tau_own * d * d);
}

TauSegCoef tau_seg_coef(double tau_m, double tau_s, double L) {
  TauSegCoef c;
  const double em = std::exp(-L / tau_m);
  const double es = std::exp(-L / tau_s);
  // int lv Vdot: lv anchored at b with decay tau_m, Vdot = (I - V)/tau_m.
  c.cv_v = -(L / tau_m) * em;
  c.cv_i = transfer_b(tau_m, tau_s, L) - psi2(tau_m, tau_s, L) / tau_m;
  // int li Idot: li anchored at b (decay tau_s, fed by lv), Idot = -I/tau_s.
  c.ci_li = -(L / tau_s) * es;
  c.ci_lv = -psi2(tau_s, tau_m, L) / tau_s;
  return c;
}

double first_crossing(double v0, double i0, double tau_m, double tau_s,
                      double L, double theta) {
  // V and Vdot along the flow from (v0, i0); tau_m Vdot = -V + I
  auto probe = [&](double s, double& v, double& vdot) {
    const FlowCoef f = flow_coef(tau_m, tau_s, s);
    v = f.am * v0 + f.b * i0;
    vdot = (f.as * i0 - v) / tau_m;
  };
  // Bracketed Newton: V(lo) < theta, first crossing in (lo, hi]. The Newton
  // candidate from the hi edge stays inside the first-crossing bracket (V has
  // at most one interior extremum); any step that leaves the bracket or stops
  // contracting falls back to bisection, so the worst case is plain bisection.
  double lo = 0.0, hi = L;
  double v_hi, vd_hi;
  probe(hi, v_hi, vd_hi);
  for (int it = 0; it < 70; ++it) {
    double s = (vd_hi > 0) ? hi - (v_hi - theta) / vd_hi
                           : 0.5 * (lo + hi);
    if (!(s > lo && s < hi)) s = 0.5 * (lo + hi);
    if (s == lo || s == hi) break;
    double v, vd;
    probe(s, v, vd);
    if (v >= theta) {
      hi = s;
      v_hi = v;
      vd_hi = vd;
    } else {
      lo = s;
      // Newton from the far side cannot contract the lo edge; bisect once to
      // keep the guaranteed-progress half of the loop.
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      probe(mid, v, vd);
      if (v >= theta) {
        hi = mid;
        v_hi = v;
        vd_hi = vd;
      } else {
        lo = mid;
      }
    }
  }
  return hi;
}

unsigned long long mix_seed(unsigned long long a, unsigned long long b,
                            unsigned long long c) {
  unsigned long long x = a + 0x9e3779b97f4a7c15ull * (b + 1) +
                         0xbf58476d1ce4e5b9ull * (c + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

}  // namespace evp
