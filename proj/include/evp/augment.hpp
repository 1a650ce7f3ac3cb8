#pragma once

#include <random>

#include "evp/types.hpp"

namespace evp {

struct AugmentConfig {
  bool jitter_enabled = false;
  double sigma_u = 0;  // ID-jitter std, channels
  bool dilate_enabled = false;
  double k_scale_min = 1, k_scale_max = 1;
  bool shift_enabled = false;
  double f_shift = 0;  // max global channel shift
  bool blend_enabled = false;
  double p_blend = 0.5;
  int n_blend_extra = -1;  // -1: same count as the source dataset
  // delay line (an input representation, applied at train and eval alike)
  bool delay_enabled = false;
  int n_delay = 10;
  double t_delay = 30;  // ms
};

void validate_augment(const AugmentConfig& a);

// Every operation is pure given (input, rng state): label preserved, events
// re-sorted, out-of-range events dropped.

// one global channel offset k ~ round(Uniform[-f_shift, f_shift])
Trial augment_shift(const Trial& t, double f_shift, int n_in,
                    std::mt19937_64& rng);

// per-event channel offset round(Normal(0, sigma_u))
Trial augment_id_jitter(const Trial& t, double sigma_u, int n_in,
                        std::mt19937_64& rng);

// all times scaled by one k ~ Uniform[k_min, k_max], rescaling from t = 0;
// events at or beyond the duration are dropped
Trial augment_dilate(const Trial& t, double k_min, double k_max,
                     std::mt19937_64& rng);

// align both trials to the midpoint of their spike-time centres of mass,
// then keep each spike of a with probability p1 and of b with p2
Trial augment_blend(const Trial& a, const Trial& b, double p1, double p2,
                    std::mt19937_64& rng);

// event (c, t) -> copies (c + n*n_in, t + n*t_delay), n = 0..n_delay-1;
// copies at or beyond the duration are dropped
Trial build_delay_line(const Trial& t, int n_delay, double t_delay, int n_in);

// full train-time pipeline for one trial: jitter -> dilate -> shift -> delay
// (blending is a dataset-level step; see trainer)
Trial augment_trial(const Trial& t, const AugmentConfig& a, int n_in_raw,
                    std::mt19937_64& rng);

double spike_time_com(const Trial& t);  // centre of mass; 0 for empty trials

}  // namespace evp
