#include "evp/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evp {

namespace {

void sort_events(Trial& t) {
  std::sort(t.events.begin(), t.events.end(), [](auto& a, auto& b) {
    return a.time != b.time ? a.time < b.time : a.neuron < b.neuron;
  });
}

}  // namespace

void validate_augment(const AugmentConfig& a) {
  if (a.sigma_u < 0) throw std::runtime_error("augment: sigma_u must be >= 0");
  if (a.k_scale_min > a.k_scale_max || a.k_scale_min <= 0)
    throw std::runtime_error("augment: need 0 < k_scale_min <= k_scale_max");
  if (a.f_shift < 0) throw std::runtime_error("augment: f_shift must be >= 0");
  if (a.p_blend < 0 || a.p_blend > 1)
    throw std::runtime_error("augment: p_blend must be in [0, 1]");
  if (a.n_delay < 1) throw std::runtime_error("augment: n_delay must be >= 1");
  if (a.t_delay < 0) throw std::runtime_error("augment: t_delay must be >= 0");
}

double spike_time_com(const Trial& t) {
  if (t.events.empty()) return 0;
  double s = 0;
  for (const auto& e : t.events) s += e.time;
  return s / (double)t.events.size();
}

Trial augment_shift(const Trial& t, double f_shift, int n_in,
                    std::mt19937_64& rng) {
  const double u =
      std::uniform_real_distribution<double>(-f_shift, f_shift)(rng);
  const int k = (int)std::llround(u);
  Trial out = t;
  out.events.clear();
  for (const auto& e : t.events) {
    const int c = e.neuron + k;
    if (c >= 0 && c < n_in) out.events.push_back({c, e.time});
  }
  sort_events(out);
  return out;
}

Trial augment_id_jitter(const Trial& t, double sigma_u, int n_in,
                        std::mt19937_64& rng) {
  if (sigma_u <= 0) return t;
  Trial out = t;
  out.events.clear();
  std::normal_distribution<double> dist(0.0, sigma_u);
  for (const auto& e : t.events) {
    const int c = e.neuron + (int)std::llround(dist(rng));
    if (c >= 0 && c < n_in) out.events.push_back({c, e.time});
  }
  sort_events(out);
  return out;
}

Trial augment_dilate(const Trial& t, double k_min, double k_max,
                     std::mt19937_64& rng) {
  const double k = std::uniform_real_distribution<double>(k_min, k_max)(rng);
  Trial out = t;
  out.events.clear();
  for (const auto& e : t.events) {
    const double tt = e.time * k;
    if (tt < t.duration) out.events.push_back({e.neuron, tt});
  }
  sort_events(out);
  return out;
}

Trial augment_blend(const Trial& a, const Trial& b, double p1, double p2,
                    std::mt19937_64& rng) {
  if (a.label != b.label)
    throw std::runtime_error("augment: blend requires equal labels");
  Trial out;
  out.id = a.id;
  out.label = a.label;
  out.duration = std::max(a.duration, b.duration);
  const double com_a = spike_time_com(a), com_b = spike_time_com(b);
  const double mid = 0.5 * (com_a + com_b);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  auto take = [&](const Trial& src, double shift, double p) {
    for (const auto& e : src.events) {
      const double tt = e.time + shift;
      if (coin(rng) < p && tt >= 0 && tt < out.duration)
        out.events.push_back({e.neuron, tt});
    }
  };
  take(a, mid - com_a, p1);
  take(b, mid - com_b, p2);
  sort_events(out);
  return out;
}

Trial build_delay_line(const Trial& t, int n_delay, double t_delay, int n_in) {
  Trial out = t;
  out.events.clear();
  for (const auto& e : t.events) {
    if (e.neuron < 0 || e.neuron >= n_in)
      throw std::runtime_error("augment: delay-line channel out of range");
    for (int n = 0; n < n_delay; ++n) {
      const double tt = e.time + n * t_delay;
      if (tt < t.duration)
        out.events.push_back({e.neuron + n * n_in, tt});
    }
  }
  sort_events(out);
  return out;
}

Trial augment_trial(const Trial& t, const AugmentConfig& a, int n_in_raw,
                    std::mt19937_64& rng) {
  Trial cur = t;
  if (a.jitter_enabled) cur = augment_id_jitter(cur, a.sigma_u, n_in_raw, rng);
  if (a.dilate_enabled)
    cur = augment_dilate(cur, a.k_scale_min, a.k_scale_max, rng);
  if (a.shift_enabled) cur = augment_shift(cur, a.f_shift, n_in_raw, rng);
  if (a.delay_enabled)
    cur = build_delay_line(cur, a.n_delay, a.t_delay, n_in_raw);
  return cur;
}

}  // namespace evp
