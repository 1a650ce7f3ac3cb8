#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace evp {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

// One event: an input-channel spike in a trial stream, or (channel re-used as
// neuron index) a delivered event inside a record.
struct SpikeEvent {
  int neuron = 0;
  double time = 0;  // ms
};

struct Trial {
  int id = 0;
  int label = 0;
  double duration = 0;  // ms; all event times lie in [0, duration)
  std::vector<SpikeEvent> events;  // sorted by (time, neuron)
};

struct Dataset {
  std::vector<Trial> trials;
  // trial id -> speaker tag (optional; used for leave-one-speaker-out folds)
  std::vector<std::pair<int, std::string>> speakers;
};

enum class OutputMode { NonSpiking, Spiking };

// Fixed architecture: input events -> one hidden LIF layer (optionally fully
// recurrent, zero diagonal) -> readout layer (leaky integrators, or spiking
// LIF for the first-spike loss). Neuron ids: hidden 0..H-1, outputs H..H+O-1.
struct NetworkParams {
  int n_in = 0, n_hidden = 0, n_out = 0;
  bool recurrent = false;
  OutputMode output_mode = OutputMode::NonSpiking;
  MatrixXd w_ih;     // n_hidden x n_in
  MatrixXd w_hh;     // n_hidden x n_hidden (zero diagonal); 0x0 when not recurrent
  MatrixXd w_ho;     // n_out x n_hidden
  VectorXd tau_mem;  // ms, per neuron (hidden then output)
  VectorXd tau_syn;  // ms, per neuron (hidden then output)
  double theta = 1.0;
  double v_reset = 0.0;
  int spike_cap = 4096;  // per neuron per trial
  int n_neurons() const { return n_hidden + n_out; }
};

struct NeuronState {
  double v = 0, i = 0;
};

enum class LossKind { Sum, SumExp, XEntIntegral, MaxOverTime, TimeToFirstSpike };

enum class Weighting { Unit, ExpDecay };  // w(t) = 1 or e^(-t/T)

struct LossSpec {
  LossKind kind = LossKind::Sum;
  // first-spike loss parameters
  double tau0 = 1.0;    // ms
  double tau1 = 100.0;  // ms
  double alpha = 5e-5;
  bool phantom_spikes = true;  // silent labeled output acts as spike at t = T
  // test hooks
  bool force_unit_weighting = false;  // SumExp collapses to Sum
  double drive_scale = 1.0;           // 0 disables the loss drive entirely

  Weighting weighting() const {
    return (kind == LossKind::SumExp && !force_unit_weighting)
               ? Weighting::ExpDecay
               : Weighting::Unit;
  }
  bool needs_trace() const { return kind == LossKind::XEntIntegral; }
  bool spiking_outputs() const { return kind == LossKind::TimeToFirstSpike; }
};

struct RecordedSpike {
  double time = 0;   // ms, exact crossing time
  int neuron = 0;    // hidden index, or output index for output spikes
  double vdot = 0;   // Vdot just before the reset, (I^- - theta)/tau_mem
  bool delivered = true;  // false when hidden dropout suppressed the outgoing jump
};

// Everything the backward pass and the losses need from one forward run.
// Sampling convention: the per-output trace/integrals sample V at step starts
// t_k = k*dt, k = 0..n_steps-1 (t_0 = 0 where V == 0 identically);
// integrals[j] = dt * sum_k w(t_k) * V_j(t_k).
struct ForwardRecord {
  double dt = 1, duration = 0;
  int n_steps = 0;
  std::vector<SpikeEvent> input_spikes;      // delivered (post-dropout), exact times
  std::vector<RecordedSpike> hidden_spikes;  // sorted (time, neuron)
  std::vector<RecordedSpike> output_spikes;  // spiking mode only
  VectorXi spike_counts;                     // per hidden neuron (all crossings)
  VectorXd integrals;                        // per output, weighted
  MatrixXd trace;                            // n_steps x n_out when retained
  std::vector<double> first_spike;           // per output, NaN when silent
  VectorXi k_max;                            // per output, argmax sample index (Max loss)
  VectorXd v_max;                            // per output, max sampled V (>= 0 via t_0)
  VectorXd v_end, i_end;                     // state at t = T, all neurons
  std::int64_t dropped_inputs = 0;
};

struct DropoutSpec {
  double p_in = 0, p_hid = 0;
};

inline bool is_nan(double x) { return std::isnan(x); }

}  // namespace evp
