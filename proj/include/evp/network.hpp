#pragma once

#include <array>
#include <random>

#include "evp/types.hpp"

namespace evp {

// Grid-stepped simulation of the hybrid LIF system. Between events the state
// advances by the exact closed-form propagator; current jumps are applied at
// their exact event times; threshold crossings are detected by the after-flow
// test (V >= theta) at segment ends and resolved to their exact in-step times,
// so the trajectory is dt-independent and the loss depends smoothly on the
// parameters wherever the spike raster is stable.
class ForwardEngine {
 public:
  ForwardEngine(const NetworkParams& p, double dt);

  // Advance over [t0, t0 + dt). Events must be sorted and lie in the window;
  // events at exactly t0 are applied before the flow. Fired spikes (hidden and,
  // in spiking mode, output) are appended to the buffers.
  void step(double t0, const SpikeEvent* ev, int n_ev);

  VectorXd& v() { return v_; }
  VectorXd& i() { return i_; }
  std::vector<RecordedSpike>& hidden_spikes() { return hidden_spikes_; }
  std::vector<RecordedSpike>& output_spikes() { return output_spikes_; }
  VectorXi& counts() { return counts_; }
  void set_hidden_dropout(double p, std::mt19937_64* rng) {
    p_hid_ = p;
    rng_ = rng;
  }

 private:
  void advance(double len);
  const NetworkParams& p_;
  double dt_;
  int n_;
  VectorXd v_, i_;
  std::vector<int> cls_;                          // neuron -> tau class
  std::vector<std::pair<double, double>> taus_;   // class -> (tau_m, tau_s)
  std::vector<std::array<double, 3>> coef_dt_;    // class coefs for len == dt
  std::vector<RecordedSpike> hidden_spikes_, output_spikes_;
  VectorXi counts_;  // crossings per neuron (hidden + output)
  double p_hid_ = 0;
  std::mt19937_64* rng_ = nullptr;
  // scratch
  VectorXd v_pre_, i_pre_;
  std::vector<std::pair<double, int>> cand_;
};

// One-step surface over explicit state (unit-test convenience around the
// engine). Appends fired spikes, enforces the per-neuron cap.
void step_forward(const NetworkParams& p, VectorXd& v, VectorXd& i, double t0,
                  double dt, const SpikeEvent* ev, int n_ev,
                  std::vector<RecordedSpike>& fired, VectorXi& counts);

// Full trial: seeded dropout, per-step sampling of the output trace /
// weighted integrals / running max, spike recording. Identical arguments give
// a bit-identical record.
ForwardRecord run_forward_trial(const NetworkParams& p, const Trial& trial,
                                const LossSpec& spec, double dt,
                                std::uint64_t seed,
                                const DropoutSpec& dropout = {});

// Grid size for a trial duration; throws unless dt divides the duration to
// within rounding.
int n_steps_for(double duration, double dt);

// Latency encoding of one grey-level image: pixel x at channel c becomes one
// event at t = (255 - x)/255 * (T - 4 ms) + 2 ms.
Trial encode_latency(const unsigned char* pixels, int n_pixels, int label,
                     double t_trial);

void validate_params(const NetworkParams& p);

}  // namespace evp
