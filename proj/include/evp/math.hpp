#pragma once

// Closed-form pieces for the leaky-integrator pair and its adjoint:
//   tau_m V' = -V + I      tau_s I' = -I            (forward time)
//   tau_m lv' = -lv        tau_s li' = -li + lv     (backward time)
// Everything here is exact up to roundoff; no step-size error anywhere.

namespace evp {

// phi1(x) = (1 - e^-x)/x, phi1(0) = 1
double phi1(double x);
// phi2(x) = (e^-x - 1 + x)/x^2, phi2(0) = 1/2
double phi2(double x);

// Flow over an interval of length L >= 0:
//   I(L) = as * I0
//   V(L) = am * V0 + b * I0
struct FlowCoef {
  double am, as, b;
};
FlowCoef flow_coef(double tau_m, double tau_s, double L);

// Adjoint flow over backward length L >= 0:
//   lv(L) = am * lv0
//   li(L) = as * li0 + b * lv0
struct AdjFlowCoef {
  double am, as, b;
};
AdjFlowCoef adj_flow_coef(double tau_m, double tau_s, double L);

// Exact segment integrals for the tau gradients over forward-time [a, b],
// L = b - a, with forward state (V_a, I_a) at a and adjoint state (Lv, Li)
// valid at the b edge (inside the segment):
//   int_a^b lv(t) Vdot(t) dt = Lv * (cv_v * V_a + cv_i * I_a)
//   int_a^b li(t) Idot(t) dt = I_a * (ci_li * Li + ci_lv * Lv)
struct TauSegCoef {
  double cv_v, cv_i, ci_li, ci_lv;
};
TauSegCoef tau_seg_coef(double tau_m, double tau_s, double L);

// First time sigma in (0, L] with V(sigma) == theta along the flow from
// (V0, I0), given V0 < theta and V(L) >= theta. The pair V(sigma) has at most
// one interior extremum, so bisection on the first-crossing bracket is exact.
double first_crossing(double v0, double i0, double tau_m, double tau_s,
                      double L, double theta);

// splitmix64: derive decorrelated sub-seeds deterministically.
unsigned long long mix_seed(unsigned long long a, unsigned long long b,
                            unsigned long long c = 0);

}  // namespace evp
