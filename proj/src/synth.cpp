#include "evp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "evp/math.hpp"
#include "evp/network.hpp"

namespace evp {

namespace {

constexpr int kSide = 28;

struct Blob {
  double cx, cy, r;
};

// class prototype: three blobs at class-seeded positions
std::vector<Blob> digit_blobs(int digit) {
  std::mt19937_64 rng(mix_seed(0xd161u, (unsigned)digit));
  std::uniform_real_distribution<double> pos(5.0, kSide - 5.0);
  std::uniform_real_distribution<double> rad(1.8, 3.2);
  std::vector<Blob> b(3);
  for (auto& bl : b) bl = {pos(rng), pos(rng), rad(rng)};
  return b;
}

}  // namespace

void synth_digit_image(int digit, std::uint64_t seed,
                       unsigned char out[kSide * kSide]) {
  const auto blobs = digit_blobs(digit);
  std::mt19937_64 rng(mix_seed(0x696d67u, (unsigned)digit, seed));
  std::uniform_real_distribution<double> jit(-1.0, 1.0);
  std::uniform_real_distribution<double> gain(0.8, 1.0);
  std::normal_distribution<double> noise(0.0, 10.0);
  const double g = gain(rng);
  std::vector<std::pair<double, double>> c;
  for (const auto& b : blobs) c.emplace_back(b.cx + jit(rng), b.cy + jit(rng));
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      double v = 0;
      for (std::size_t k = 0; k < blobs.size(); ++k) {
        const double dx = x - c[k].first, dy = y - c[k].second;
        const double r2 = blobs[k].r * blobs[k].r;
        v += 255.0 * std::exp(-(dx * dx + dy * dy) / (2 * r2));
      }
      v = v * g + noise(rng);
      out[y * kSide + x] =
          (unsigned char)std::clamp((int)std::lround(v), 0, 255);
    }
}

Dataset synth_digits(int n_trials, int n_classes, double t_trial,
                     std::uint64_t seed) {
  if (n_classes < 2 || n_classes > 10)
    throw std::runtime_error("synth: digit classes must be in [2, 10]");
  Dataset ds;
  unsigned char img[kSide * kSide];
  for (int i = 0; i < n_trials; ++i) {
    const int label = i % n_classes;
    synth_digit_image(label, mix_seed(seed, 0x7472u, (unsigned)i), img);
    Trial t = encode_latency(img, kSide * kSide, label, t_trial);
    t.id = i;
    ds.trials.push_back(std::move(t));
  }
  return ds;
}

Dataset synth_spike_task(int n_classes, int trials_per_class, int n_in,
                         double duration, double t_active_start,
                         double t_active_end, std::uint64_t seed) {
  if (!(0 <= t_active_start && t_active_start < t_active_end &&
        t_active_end <= duration))
    throw std::runtime_error("synth: bad active window");
  // class prototypes
  const int n_proto = 30;
  std::vector<std::vector<SpikeEvent>> proto(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    std::mt19937_64 rng(mix_seed(seed, 0x70726fu, (unsigned)c));
    std::uniform_int_distribution<int> ch(0, n_in - 1);
    std::uniform_real_distribution<double> tm(t_active_start, t_active_end);
    for (int k = 0; k < n_proto; ++k)
      proto[c].push_back({ch(rng), tm(rng)});
  }
  Dataset ds;
  int id = 0;
  for (int c = 0; c < n_classes; ++c)
    for (int i = 0; i < trials_per_class; ++i) {
      std::mt19937_64 rng(mix_seed(seed, 0x747269u + (unsigned)c, (unsigned)i));
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      std::normal_distribution<double> tjit(0.0, 4.0);
      std::uniform_int_distribution<int> cjit(-1, 1);
      std::uniform_int_distribution<int> ch(0, n_in - 1);
      std::uniform_real_distribution<double> tm(t_active_start, t_active_end);
      Trial t;
      t.id = id++;
      t.label = c;
      t.duration = duration;
      for (const auto& e : proto[c]) {
        if (coin(rng) >= 0.9) continue;
        double tt =
            std::clamp(e.time + tjit(rng), t_active_start, t_active_end - 1.0);
        int cc = std::clamp(e.neuron + cjit(rng), 0, n_in - 1);
        t.events.push_back({cc, tt});
      }
      for (int k = 0; k < 3; ++k) t.events.push_back({ch(rng), tm(rng)});
      std::sort(t.events.begin(), t.events.end(), [](auto& a, auto& b) {
        return a.time != b.time ? a.time < b.time : a.neuron < b.neuron;
      });
      ds.trials.push_back(std::move(t));
    }
  return ds;
}

}  // namespace evp
