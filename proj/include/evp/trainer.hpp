#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "evp/adjoint.hpp"
#include "evp/augment.hpp"
#include "evp/losses.hpp"
#include "evp/types.hpp"

namespace evp {

struct ArchSpec {
  int n_in = 0, n_hidden = 0, n_out = 0;
  bool recurrent = false;
};

struct InitSpec {
  double mu_ih = 0, sigma_ih = 0;
  double mu_hh = 0, sigma_hh = 0;
  double mu_ho = 0, sigma_ho = 0;
  double tau_mem_bar = 20, tau_syn_bar = 5;  // ms
  bool heterogeneous_tau = false;  // hidden tau ~ Gamma(3, bar/3), clipped
};

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct EaseInConfig {
  bool enabled = false;
  double start_frac = 1e-3, factor = 1.05;  // per mini-batch
};

struct ScheduleConfig {
  bool enabled = false;
  double fast_keep = 0.8, slow_keep = 0.85;  // EWMA retention
  int min_epochs = 50;                       // between halvings
};

struct RegConfig {
  double k_reg = 0;
  double nu_hidden = 14;  // target spikes per trial
};

struct TrainConfig {
  ArchSpec arch;
  InitSpec init;
  LossSpec loss;
  AugmentConfig augment;
  AdamConfig adam;
  EaseInConfig ease_in;
  ScheduleConfig schedule;
  RegConfig reg;
  DropoutSpec dropout;
  double eta = 1e-3;
  int n_batch = 32;
  int epochs = 10;
  bool learn_tau = false;
  double dt = 1;  // ms
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = all hardware threads
  bool boost_enabled = true;
  double boost_dg = 0.002;  // silent-neuron increment
  double tau_mem_floor = 3, tau_syn_floor = 1;  // ms, clip when learning tau
  bool early_stop = true;  // keep the best train-accuracy epoch (ties: earlier)
  double theta = 1.0;
  int spike_cap = 4096;
  std::string out_dir;  // empty: no files written
};

struct OptimizerState {
  GradientSet m, v;  // Adam moments, shapes match the gradient
  long long step = 0;
  double eta_target = 0;
  int ramp_steps = 0;  // mini-batches seen while easing in
  int halvings = 0;
  double eta_last = 0;  // rate used by the most recent batch
};

struct ScheduleState {
  double m_fast = 0, m_slow = 0;
  int epochs_since_change = 0;
  int halvings = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0, train_acc = 0;
  std::optional<double> val_acc;
  double hidden_rate = 0;  // mean spikes per hidden neuron per trial
  long long clamped = 0, boosted = 0, no_grad = 0;
  double eta = 0;
  int halvings = 0;
};

struct TrainResult {
  NetworkParams best;          // early-stopped weights
  NetworkParams final_params;  // last-epoch weights
  int best_epoch = 0;
  std::vector<EpochMetrics> metrics;
  std::string metrics_csv;  // exact bytes of the metrics stream
};

NetworkParams init_params(const ArchSpec& arch, const InitSpec& init,
                          std::uint64_t seed, double theta = 1.0,
                          int spike_cap = 4096,
                          bool spiking_outputs = false);

// Bias-corrected Adam over all weight blocks (and tau when learn_tau), then
// tau clipping. Non-finite gradients fault naming the offending block.
void adam_step(OptimizerState& opt, const GradientSet& g, NetworkParams& p,
               const AdamConfig& cfg, double eta, bool learn_tau,
               double tau_mem_floor, double tau_syn_floor);

// Geometric ease-in: eta(step) = min(target, target*start_frac*factor^step).
double ease_in_eta(double eta_target, double start_frac, double factor,
                   int step);

// EWMA schedule update with accuracy x; returns true when the rate halves.
bool schedule_step(ScheduleState& s, double x, const ScheduleConfig& cfg);

// +dg on all incoming weights (input and recurrent, diagonal excluded) of
// every hidden neuron with zero spikes in epoch_totals; returns the number of
// weights incremented.
long long silent_neuron_boost(NetworkParams& p, const VectorXi& epoch_totals,
                              double dg);

struct EvalResult {
  double accuracy = 0, mean_loss = 0;
  int n = 0, abstained = 0;
};

// Augmentations off; the delay line (when enabled in `aug`) still applies —
// it is an input representation, not noise.
EvalResult evaluate(const NetworkParams& p, const LossSpec& loss,
                    const Dataset& ds, double dt, const AugmentConfig& aug,
                    int threads = 0);

TrainResult train(const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& cfg);

struct FoldResult {
  std::string speaker;
  EvalResult val;
  int best_epoch = 0;
  double train_acc = 0;
};
std::vector<FoldResult> cross_validate(const Dataset& ds,
                                       const TrainConfig& cfg);

// Versioned text checkpoint of params + optimizer + epoch; exact round-trip.
std::string format_checkpoint(const NetworkParams& p,
                              const OptimizerState& opt, int epoch);
struct Checkpoint {
  NetworkParams params;
  OptimizerState opt;
  int epoch = 0;
};
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const NetworkParams& p, const OptimizerState& opt,
                     int epoch, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace evp
