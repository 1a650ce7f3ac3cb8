#pragma once

#include <cstdint>

#include "evp/types.hpp"

namespace evp {

// Procedural grey-level "digit" images, 28x28: each class is a fixed set of
// Gaussian blobs; samples add centre jitter, intensity scaling, and pixel
// noise. Deterministic in (digit, seed).
void synth_digit_image(int digit, std::uint64_t seed,
                       unsigned char out[28 * 28]);

// Latency-encoded corpus of such digits, labels round-robin 0..n_classes-1.
Dataset synth_digits(int n_trials, int n_classes, double t_trial,
                     std::uint64_t seed);

// Spike-pattern classification task with long leading/trailing silences:
// each class is a fixed event prototype inside [t_active_start,
// t_active_end); samples drop/jitter prototype events and add noise events.
Dataset synth_spike_task(int n_classes, int trials_per_class, int n_in,
                         double duration, double t_active_start,
                         double t_active_end, std::uint64_t seed);

}  // namespace evp
