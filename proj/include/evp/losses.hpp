#pragma once

#include "evp/types.hpp"

namespace evp {

struct LossResult {
  double value = 0;
  // first-spike loss with a silent labeled output and phantom spikes off
  bool no_gradient = false;
};

// Per-trial loss (unnormalized; the 1/N_batch factor is applied at batch level).
LossResult loss_value(const LossSpec& spec, const ForwardRecord& rec, int label);

// Backward drive for the output-neuron lambda_V. Voltage losses inject
// impulses at the sample times t_k (the adjoint of the forward quadrature);
// the max loss injects a point impulse at the argmax sample; the first-spike
// loss contributes dl_p/dt terms at output spike jumps instead.
struct LossDrive {
  LossKind kind = LossKind::Sum;
  int n_out = 0, label = -1;
  double duration = 0, dt = 1;
  double scale = 1;
  Weighting weighting = Weighting::Unit;
  VectorXd bracket;    // delta_label - softmax, constant in t
  VectorXi k_impulse;  // MaxOverTime: argmax sample per output
  VectorXd dlp_dt;     // TimeToFirstSpike: dl_p/dt at each first spike
  std::vector<double> first_spike;
  bool phantom = false;  // silent labeled output handled as a spike at t = T
  double phantom_dlp = 0;
  const MatrixXd* trace = nullptr;  // XEntIntegral: borrowed from the record

  double weight_at(double t) const;
  // lambda_V increment for the outputs at sample k (before the 1/tau_mem scale)
  void sample_impulse(int k, VectorXd& out) const;
  static LossDrive zero(int n_out);
};

LossDrive build_loss_drive(const LossSpec& spec, const ForwardRecord& rec,
                           int label);

// Predicted class; -1 means abstain (possible only for the first-spike loss).
int classify(const LossSpec& spec, const ForwardRecord& rec);

VectorXd softmax(const VectorXd& a);

// Convenience: forward + loss in one call.
struct ForwardWithLoss {
  ForwardRecord record;
  LossResult loss;
};
ForwardWithLoss run_forward_with_loss(const NetworkParams& p, const Trial& t,
                                      const LossSpec& spec, double dt,
                                      std::uint64_t seed,
                                      const DropoutSpec& dropout = {});

}  // namespace evp
