#include "evp/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "evp/math.hpp"

namespace evp {

void validate_params(const NetworkParams& p) {
  const int n = p.n_neurons();
  if (p.n_in <= 0 || p.n_hidden <= 0 || p.n_out <= 0)
    throw std::runtime_error("network: all layer sizes must be positive");
  if (p.w_ih.rows() != p.n_hidden || p.w_ih.cols() != p.n_in)
    throw std::runtime_error("network: w_ih shape mismatch");
  if (p.recurrent && (p.w_hh.rows() != p.n_hidden || p.w_hh.cols() != p.n_hidden))
    throw std::runtime_error("network: w_hh shape mismatch");
  if (p.w_ho.rows() != p.n_out || p.w_ho.cols() != p.n_hidden)
    throw std::runtime_error("network: w_ho shape mismatch");
  if (p.tau_mem.size() != n || p.tau_syn.size() != n)
    throw std::runtime_error("network: tau vectors must have one entry per neuron");
  if ((p.tau_mem.array() <= 0).any() || (p.tau_syn.array() <= 0).any())
    throw std::runtime_error("network: time constants must be positive");
}

ForwardEngine::ForwardEngine(const NetworkParams& p, double dt)
    : p_(p), dt_(dt), n_(p.n_neurons()) {
  validate_params(p);
  if (dt <= 0) throw std::runtime_error("network: dt must be positive");
  v_ = VectorXd::Zero(n_);
  i_ = VectorXd::Zero(n_);
  counts_ = VectorXi::Zero(n_);
  cls_.resize(n_);
  for (int j = 0; j < n_; ++j) {
    const std::pair<double, double> t{p.tau_mem[j], p.tau_syn[j]};
    int c = -1;
    for (int k = 0; k < (int)taus_.size(); ++k)
      if (taus_[k] == t) {
        c = k;
        break;
      }
    if (c < 0) {
      c = (int)taus_.size();
      taus_.push_back(t);
    }
    cls_[j] = c;
  }
  for (auto& [tm, ts] : taus_) {
    const FlowCoef f = flow_coef(tm, ts, dt_);
    coef_dt_.push_back({f.am, f.as, f.b});
  }
}

void ForwardEngine::advance(double len) {
  if (len <= 0) return;
  static thread_local std::vector<std::array<double, 3>> coef;
  const std::vector<std::array<double, 3>>* c = &coef_dt_;
  if (len != dt_) {
    coef.clear();
    for (auto& [tm, ts] : taus_) {
      const FlowCoef f = flow_coef(tm, ts, len);
      coef.push_back({f.am, f.as, f.b});
    }
    c = &coef;
  }
  for (int j = 0; j < n_; ++j) {
    const auto& k = (*c)[cls_[j]];
    v_[j] = k[0] * v_[j] + k[2] * i_[j];
    i_[j] *= k[1];
  }
}

void ForwardEngine::step(double t0, const SpikeEvent* ev, int n_ev) {
  const double bnd = t0 + dt_;
  const int h = p_.n_hidden;
  const bool spiking_out = p_.output_mode == OutputMode::Spiking;
  const int n_spiking = spiking_out ? n_ : h;
  double s = t0;
  int ec = 0;
  for (;;) {
    while (ec < n_ev && ev[ec].time <= s) {
      const int ch = ev[ec].neuron;
      if (ch < 0 || ch >= p_.n_in)
        throw std::runtime_error("network: input channel out of range");
      i_.head(h) += p_.w_ih.col(ch);
      ++ec;
    }
    if (s >= bnd) break;
    const double stop = (ec < n_ev) ? std::min(bnd, ev[ec].time) : bnd;
    const double len = stop - s;
    v_pre_ = v_;
    i_pre_ = i_;
    advance(len);
    cand_.clear();
    double sg_best = len;
    for (int j = 0; j < n_spiking; ++j)
      if (v_[j] >= p_.theta) {
        // One probe at the running earliest crossing: if j is still below
        // threshold there, its first crossing is strictly later and cannot
        // win or tie, so the root-find is skipped. Exact ties evaluate to
        // v >= theta here and keep the full path.
        if (!cand_.empty()) {
          const FlowCoef f =
              flow_coef(p_.tau_mem[j], p_.tau_syn[j], sg_best);
          if (f.am * v_pre_[j] + f.b * i_pre_[j] < p_.theta) continue;
        }
        const double sg = first_crossing(v_pre_[j], i_pre_[j], p_.tau_mem[j],
                                         p_.tau_syn[j], len, p_.theta);
        cand_.emplace_back(sg, j);
        sg_best = std::min(sg_best, sg);
      }
    if (cand_.empty()) {
      s = stop;
      continue;
    }
    double sg_min = cand_[0].first;
    for (auto& c : cand_) sg_min = std::min(sg_min, c.first);
    v_ = v_pre_;
    i_ = i_pre_;
    advance(sg_min);
    const double t_star = s + sg_min;
    // vdot for every simultaneous crossing uses the pre-jump current
    static thread_local std::vector<std::pair<int, double>> fired;
    fired.clear();
    for (auto& [sg, j] : cand_)
      if (sg == sg_min)
        fired.emplace_back(j, (i_[j] - p_.theta) / p_.tau_mem[j]);
    for (auto& [j, vdot] : fired) {
      if (++counts_[j] > p_.spike_cap)
        throw std::runtime_error("network: spike cap exceeded by neuron " +
                                 std::to_string(j));
      bool delivered = true;
      if (j < h && p_hid_ > 0 && rng_) {
        delivered =
            std::uniform_real_distribution<double>(0.0, 1.0)(*rng_) >= p_hid_;
      }
      v_[j] = p_.v_reset;
      if (j < h) {
        hidden_spikes_.push_back({t_star, j, vdot, delivered});
        if (delivered) {
          if (p_.recurrent) i_.head(h) += p_.w_hh.col(j);
          i_.tail(p_.n_out) += p_.w_ho.col(j);
        }
      } else {
        output_spikes_.push_back({t_star, j - h, vdot, true});
      }
    }
    s = t_star;
  }
}

void step_forward(const NetworkParams& p, VectorXd& v, VectorXd& i, double t0,
                  double dt, const SpikeEvent* ev, int n_ev,
                  std::vector<RecordedSpike>& fired, VectorXi& counts) {
  ForwardEngine e(p, dt);
  e.v() = v;
  e.i() = i;
  if (counts.size() == p.n_neurons()) e.counts() = counts;
  e.step(t0, ev, n_ev);
  v = e.v();
  i = e.i();
  counts = e.counts();
  for (auto& s : e.hidden_spikes()) fired.push_back(s);
  for (auto& s : e.output_spikes()) fired.push_back(s);
}

int n_steps_for(double duration, double dt) {
  if (dt <= 0) throw std::runtime_error("network: dt must be positive");
  const double k = duration / dt;
  const long long n = std::llround(k);
  if (n < 1 || std::fabs(n * dt - duration) > 1e-6 * std::max(dt, duration))
    throw std::runtime_error("network: dt must divide the trial duration");
  return (int)n;
}

ForwardRecord run_forward_trial(const NetworkParams& p, const Trial& trial,
                                const LossSpec& spec, double dt,
                                std::uint64_t seed,
                                const DropoutSpec& dropout) {
  validate_params(p);
  if (spec.spiking_outputs() != (p.output_mode == OutputMode::Spiking))
    throw std::runtime_error(
        "network: loss kind and output mode disagree (spiking outputs are for "
        "the first-spike loss only)");
  ForwardRecord rec;
  rec.dt = dt;
  rec.duration = trial.duration;
  rec.n_steps = n_steps_for(trial.duration, dt);
  const int h = p.n_hidden, o = p.n_out;

  std::mt19937_64 rng(mix_seed(seed, 0x666f7277));
  rec.input_spikes.reserve(trial.events.size());
  double prev = -1;
  for (const auto& e : trial.events) {
    if (e.time < 0 || e.time >= trial.duration)
      throw std::runtime_error("network: event time outside [0, duration)");
    if (e.time < prev)
      throw std::runtime_error("network: trial events not sorted");
    prev = e.time;
    if (dropout.p_in > 0 &&
        std::uniform_real_distribution<double>(0.0, 1.0)(rng) < dropout.p_in) {
      ++rec.dropped_inputs;
      continue;
    }
    rec.input_spikes.push_back(e);
  }

  ForwardEngine eng(p, dt);
  if (dropout.p_hid > 0) eng.set_hidden_dropout(dropout.p_hid, &rng);

  const Weighting w = spec.weighting();
  rec.integrals = VectorXd::Zero(o);
  if (spec.needs_trace()) rec.trace = MatrixXd::Zero(rec.n_steps, o);
  rec.k_max = VectorXi::Zero(o);
  rec.v_max = VectorXd::Zero(o);  // sample at t_0 is identically 0

  std::size_t ec = 0;
  for (int k = 0; k < rec.n_steps; ++k) {
    const double tk = k * dt;
    // sample at the step start
    if (k > 0) {
      const double wk =
          (w == Weighting::ExpDecay) ? std::exp(-tk / trial.duration) : 1.0;
      for (int j = 0; j < o; ++j) {
        const double vj = eng.v()[h + j];
        rec.integrals[j] += dt * wk * vj;
        if (spec.needs_trace()) rec.trace(k, j) = vj;
        if (vj > rec.v_max[j]) {
          rec.v_max[j] = vj;
          rec.k_max[j] = k;
        }
      }
    }
    std::size_t e0 = ec;
    while (ec < rec.input_spikes.size() &&
           rec.input_spikes[ec].time < tk + dt)
      ++ec;
    eng.step(tk, rec.input_spikes.data() + e0, (int)(ec - e0));
    if (!eng.v().allFinite() || !eng.i().allFinite())
      throw std::runtime_error("network: non-finite state at step " +
                               std::to_string(k));
  }

  rec.hidden_spikes = std::move(eng.hidden_spikes());
  rec.output_spikes = std::move(eng.output_spikes());
  rec.spike_counts = VectorXi::Zero(h);
  for (auto& s : rec.hidden_spikes) ++rec.spike_counts[s.neuron];
  rec.first_spike.assign(o, std::numeric_limits<double>::quiet_NaN());
  for (auto& s : rec.output_spikes)
    if (is_nan(rec.first_spike[s.neuron])) rec.first_spike[s.neuron] = s.time;
  rec.v_end = eng.v();
  rec.i_end = eng.i();
  return rec;
}

Trial encode_latency(const unsigned char* pixels, int n_pixels, int label,
                     double t_trial) {
  if (t_trial <= 4.0)
    throw std::runtime_error("encode_latency: trial window must exceed 4 ms");
  Trial t;
  t.label = label;
  t.duration = t_trial;
  t.events.reserve(n_pixels);
  for (int c = 0; c < n_pixels; ++c) {
    const double x = pixels[c];
    t.events.push_back({c, (255.0 - x) / 255.0 * (t_trial - 4.0) + 2.0});
  }
  std::sort(t.events.begin(), t.events.end(), [](auto& a, auto& b) {
    return a.time != b.time ? a.time < b.time : a.neuron < b.neuron;
  });
  return t;
}

}  // namespace evp
