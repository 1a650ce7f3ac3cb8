#pragma once

#include <string>

#include "evp/adjoint.hpp"
#include "evp/losses.hpp"
#include "evp/types.hpp"

namespace evp {

enum class ParamBlock { WIh, WHh, WHo, TauMem, TauSyn };

struct Coord {
  ParamBlock block;
  int row = 0, col = 0;  // tau blocks: row = neuron, col unused
};

std::string coord_name(const Coord& c);

struct FdResult {
  double grad = 0;
  bool stable = true;  // stability signature unchanged under +/- epsilon
};

// Central difference of the full discrete loss along one coordinate.
// Stability compares the stability_signature of the perturbed runs against
// the base run; across a spike creation/deletion — or a spike/sample-grid
// reordering, where the discrete loss is kinked — the comparison is
// meaningless and the coordinate must be excluded, not failed.
FdResult finite_diff_grad(const NetworkParams& p, const Trial& trial,
                          const LossSpec& spec, double dt, double epsilon,
                          const Coord& coord);

struct GradCheckRow {
  std::string name;
  double analytic = 0, numeric = 0, abs_err = 0, rel_err = 0;
  bool stable = true;
};

struct GradCheckOptions {
  double eps_w = 1e-5;
  // The tau axis carries more curvature than the weight axes (a tau shift
  // moves every downstream spike), so the truncation error of the central
  // difference dominates well before the roundoff floor: 1e-4 ms keeps the
  // O(eps^2) term below 1e-5 relative while the loss-roundoff noise
  // (~1e-14 / 2 eps = 5e-11) stays far under the absolute floor below.
  double eps_tau = 1e-4;  // ms
  double tol = 1e-5;      // relative, over stable coordinates
  // effective denominator floor: coordinates this small are compared at the
  // absolute scale tol * denom_floor. The loss evaluates with ~1e-14 absolute
  // roundoff, so a central difference at eps = 1e-5 carries ~1e-9 gradient
  // noise; the floor keeps that an order of magnitude below the absolute
  // tolerance tol * denom_floor = 1e-8.
  double denom_floor = 1e-3;
  bool check_tau = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double max_rel = 0;  // over stable coordinates
  std::string worst;
  int n_stable = 0, n_unstable = 0;
  double tol = 0;
  enum Verdict { Pass = 0, Fail = 1, Inconclusive = 2 } verdict = Pass;
  std::string summary() const;
  std::string csv() const;
};

// Sweep every weight (and, when enabled, every tau) coordinate of a network
// small enough to brute-force, comparing the adjoint gradient against the
// central-difference oracle.
GradCheckReport grad_check(const NetworkParams& p, const Trial& trial,
                           const LossSpec& spec, double dt,
                           const GradCheckOptions& opts = {});

// Per-neuron crossing counts (hidden then output).
VectorXi spike_signature(const ForwardRecord& rec, const NetworkParams& p);

// Full stability signature for the FD oracle: crossing counts always, plus —
// for losses that sample the trajectory on the grid — the neuron and grid
// cell floor(t/dt) of every spike (a spike crossing a sample boundary kinks
// the discrete loss), plus, for the max-over-time loss, the argmax sample
// index per output and the number of hidden spikes before that instant (a
// spike crossing the one sampled instant kinks that loss too).
std::vector<long long> stability_signature(const ForwardRecord& rec,
                                           const NetworkParams& p,
                                           const LossSpec& spec, double dt);

}  // namespace evp
