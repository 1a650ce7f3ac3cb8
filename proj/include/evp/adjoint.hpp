#pragma once

#include "evp/losses.hpp"
#include "evp/types.hpp"

namespace evp {

struct GradientSet {
  MatrixXd dw_ih;  // n_hidden x n_in
  MatrixXd dw_hh;  // n_hidden x n_hidden (zero when not recurrent)
  MatrixXd dw_ho;  // n_out x n_hidden
  VectorXd dtau_mem, dtau_syn;  // per neuron; filled only when requested
  // diagnostic: per hidden neuron, sum over its delivered spikes of the
  // transported bracket (W^T (lambda_V - lambda_I))_l
  VectorXd transport_sum;
  long long clamped = 0;  // crossing-velocity floor hits

  static GradientSet zeros(const NetworkParams& p);
  void accumulate(const GradientSet& g, double w);  // this += w * g
  void scale(double w);
};

// Batch statistics for the firing-rate regulariser; k_reg == 0 disables it.
struct RegDrive {
  double k_reg = 0;
  int n_batch = 1;
  double nu = 0;
  VectorXd mean_counts;  // per hidden neuron, mean over the batch
};

struct BackwardOptions {
  bool want_tau = false;
  double clamp_floor = 1e-3;  // lower bound on |tau_mem * Vdot^-|
  RegDrive reg;
};

// Backward sweep over one recorded trial: flows the adjoint pair with the
// exact propagator between events, applies the spike jumps in reverse event
// order, injects the loss drive at the sample times, and samples the weight
// gradients -tau_syn_j * lambda_I_j at presynaptic spike times. Time-constant
// gradients integrate lambda_V * Vdot and lambda_I * Idot in closed form per
// smooth segment, reconstructing the forward state from replayed event
// anchors.
GradientSet run_backward_trial(const NetworkParams& p, const ForwardRecord& rec,
                               const LossDrive& drive, double dt,
                               const BackwardOptions& opts = {});

// One spike jump on the crossing neuron's lambda_V (unit-test surface):
// lv_minus = lv_plus + (theta*lv_plus + transported + dlp) / denom, where
// denom = tau_mem * Vdot^- is clamped to |denom| >= clamp_floor keeping sign.
double apply_spike_jump(double lv_plus, double transported, double dlp,
                        double theta, double denom, double clamp_floor,
                        long long* clamped = nullptr);

// Firing-rate regulariser jump at one recorded hidden spike of neuron l.
double regularisation_jump(double lv, double k_reg, int n_batch,
                           double mean_count, double nu);

}  // namespace evp
