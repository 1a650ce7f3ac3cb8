#include "evp/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "evp/math.hpp"
#include "evp/network.hpp"

namespace evp {

GradientSet GradientSet::zeros(const NetworkParams& p) {
  GradientSet g;
  g.dw_ih = MatrixXd::Zero(p.n_hidden, p.n_in);
  g.dw_hh = MatrixXd::Zero(p.n_hidden, p.n_hidden);
  g.dw_ho = MatrixXd::Zero(p.n_out, p.n_hidden);
  g.dtau_mem = VectorXd::Zero(p.n_neurons());
  g.dtau_syn = VectorXd::Zero(p.n_neurons());
  g.transport_sum = VectorXd::Zero(p.n_hidden);
  return g;
}

void GradientSet::accumulate(const GradientSet& g, double w) {
  dw_ih += w * g.dw_ih;
  dw_hh += w * g.dw_hh;
  dw_ho += w * g.dw_ho;
  dtau_mem += w * g.dtau_mem;
  dtau_syn += w * g.dtau_syn;
  transport_sum += w * g.transport_sum;
  clamped += g.clamped;
}

void GradientSet::scale(double w) {
  dw_ih *= w;
  dw_hh *= w;
  dw_ho *= w;
  dtau_mem *= w;
  dtau_syn *= w;
  transport_sum *= w;
}

double apply_spike_jump(double lv_plus, double transported, double dlp,
                        double theta, double denom, double clamp_floor,
                        long long* clamped) {
  double d = denom;
  if (std::fabs(d) < clamp_floor) {
    d = (d < 0) ? -clamp_floor : clamp_floor;
    if (clamped) ++*clamped;
  }
  return lv_plus + (theta * lv_plus + transported + dlp) / d;
}

double regularisation_jump(double lv, double k_reg, int n_batch,
                           double mean_count, double nu) {
  return lv - k_reg / n_batch * (mean_count - nu);
}

namespace {

// tau classes: neurons sharing (tau_mem, tau_syn) share flow coefficients
struct TauClasses {
  std::vector<int> cls;                          // neuron -> class
  std::vector<std::pair<double, double>> taus;   // class -> (tau_m, tau_s)
};

TauClasses make_classes(const NetworkParams& p) {
  TauClasses tc;
  const int n = p.n_neurons();
  tc.cls.resize(n);
  for (int j = 0; j < n; ++j) {
    const std::pair<double, double> t{p.tau_mem[j], p.tau_syn[j]};
    int c = -1;
    for (int k = 0; k < (int)tc.taus.size(); ++k)
      if (tc.taus[k] == t) {
        c = k;
        break;
      }
    if (c < 0) {
      c = (int)tc.taus.size();
      tc.taus.push_back(t);
    }
    tc.cls[j] = c;
  }
  return tc;
}

// forward state snapshot just after all events at time t
struct Anchor {
  double t;
  VectorXd v, i;
};

// Re-run the recorded trial forward, applying only the recorded events (no
// crossing detection), and snapshot the state after each distinct event time.
std::vector<Anchor> replay_anchors(const NetworkParams& p,
                                   const ForwardRecord& rec,
                                   const TauClasses& tc) {
  const int n = p.n_neurons(), h = p.n_hidden;
  std::vector<Anchor> out;
  VectorXd v = VectorXd::Zero(n), i = VectorXd::Zero(n);
  double t = 0;
  out.push_back({0.0, v, i});

  std::size_t hi = 0, oi = 0, ii = 0;
  auto flow_to = [&](double tg) {
    const double L = tg - t;
    if (L <= 0) return;
    for (int c = 0; c < (int)tc.taus.size(); ++c) {
      const FlowCoef f = flow_coef(tc.taus[c].first, tc.taus[c].second, L);
      for (int j = 0; j < n; ++j)
        if (tc.cls[j] == c) {
          v[j] = f.am * v[j] + f.b * i[j];
          i[j] *= f.as;
        }
    }
    t = tg;
  };

  const auto& hs = rec.hidden_spikes;
  const auto& os = rec.output_spikes;
  const auto& in = rec.input_spikes;
  while (hi < hs.size() || oi < os.size() || ii < in.size()) {
    double tg = std::numeric_limits<double>::infinity();
    if (hi < hs.size()) tg = std::min(tg, hs[hi].time);
    if (oi < os.size()) tg = std::min(tg, os[oi].time);
    if (ii < in.size()) tg = std::min(tg, in[ii].time);
    flow_to(tg);
    // forward order at one time: spikes (ascending neuron id), then inputs
    for (;;) {
      const bool hh = hi < hs.size() && hs[hi].time == tg;
      const bool oo = oi < os.size() && os[oi].time == tg;
      if (!hh && !oo) break;
      const int jh = hh ? hs[hi].neuron : p.n_neurons();
      const int jo = oo ? h + os[oi].neuron : p.n_neurons();
      if (jh < jo) {
        v[jh] = p.v_reset;
        if (hs[hi].delivered) {
          if (p.recurrent) i.head(h) += p.w_hh.col(jh);
          i.tail(p.n_out) += p.w_ho.col(jh);
        }
        ++hi;
      } else {
        v[jo] = p.v_reset;
        ++oi;
      }
    }
    while (ii < in.size() && in[ii].time == tg) {
      i.head(h) += p.w_ih.col(in[ii].neuron);
      ++ii;
    }
    if (!out.empty() && out.back().t == tg) {
      out.back().v = v;
      out.back().i = i;
    } else {
      out.push_back({tg, v, i});
    }
  }
  return out;
}

}  // namespace

GradientSet run_backward_trial(const NetworkParams& p, const ForwardRecord& rec,
                               const LossDrive& drive, double dt,
                               const BackwardOptions& opts) {
  validate_params(p);
  if (dt != rec.dt)
    throw std::runtime_error("adjoint: dt does not match the record");
  if (drive.n_out != p.n_out)
    throw std::runtime_error("adjoint: drive/params output size mismatch");
  const int n = p.n_neurons(), h = p.n_hidden, o = p.n_out;
  const bool reg_on = opts.reg.k_reg != 0;
  if (reg_on && opts.reg.mean_counts.size() != h)
    throw std::runtime_error("adjoint: regulariser stats size mismatch");

  GradientSet g = GradientSet::zeros(p);
  VectorXd lv = VectorXd::Zero(n), li = VectorXd::Zero(n);
  const TauClasses tc = make_classes(p);
  const int nc = (int)tc.taus.size();

  // per-class coefficient caches for the common segment length dt
  std::vector<AdjFlowCoef> adj_dt(nc);
  std::vector<TauSegCoef> seg_dt(nc);
  for (int c = 0; c < nc; ++c) {
    adj_dt[c] = adj_flow_coef(tc.taus[c].first, tc.taus[c].second, dt);
    if (opts.want_tau)
      seg_dt[c] = tau_seg_coef(tc.taus[c].first, tc.taus[c].second, dt);
  }
  std::vector<AdjFlowCoef> adj_tmp(nc);
  std::vector<TauSegCoef> seg_tmp(nc);

  std::vector<Anchor> anchors;
  std::size_t ai = 0;
  VectorXd va, ia;  // forward state at the segment's early edge
  if (opts.want_tau) {
    anchors = replay_anchors(p, rec, tc);
    ai = anchors.size() - 1;
    va.resize(n);
    ia.resize(n);
  }

  // phantom first-spike term: a fictitious crossing at t = T
  if (drive.phantom && drive.scale != 0) {
    const int nn = h + drive.label;
    const double denom = rec.i_end[nn] - rec.v_end[nn];  // tau_m * Vdot(T)
    lv[nn] = apply_spike_jump(lv[nn], 0.0, drive.scale * drive.phantom_dlp,
                              0.0, denom, opts.clamp_floor, &g.clamped);
  }

  const auto& hs = rec.hidden_spikes;
  const auto& os = rec.output_spikes;
  const auto& in = rec.input_spikes;
  std::size_t hi = hs.size(), oi = os.size(), ii = in.size();
  int k_cur = rec.n_steps - 1;  // the t_0 sample precedes every event at t = 0
  const bool drive_on = drive.scale != 0;
  VectorXd imp(o);

  double t_cur = rec.duration;
  for (;;) {
    // next (latest) backward event time
    double tn = -1.0;
    double t_in = ii > 0 ? in[ii - 1].time : -1.0;
    double t_sm = k_cur >= 1 ? k_cur * dt : -1.0;
    double t_hs = hi > 0 ? hs[hi - 1].time : -1.0;
    double t_os = oi > 0 ? os[oi - 1].time : -1.0;
    tn = std::max(std::max(t_in, t_sm), std::max(t_hs, t_os));
    if (tn < 0) break;

    const double L = t_cur - tn;
    if (L > 0) {
      if (opts.want_tau) {
        // forward state at the early edge, flowed from the latest anchor
        while (ai > 0 && anchors[ai].t > tn) --ai;
        const Anchor& a = anchors[ai];
        const double la = tn - a.t;
        for (int c = 0; c < nc; ++c) {
          const FlowCoef f =
              flow_coef(tc.taus[c].first, tc.taus[c].second, la);
          const TauSegCoef* s;
          if (L == dt) {
            s = &seg_dt[(std::size_t)c];
          } else {
            seg_tmp[c] = tau_seg_coef(tc.taus[c].first, tc.taus[c].second, L);
            s = &seg_tmp[(std::size_t)c];
          }
          for (int j = 0; j < n; ++j) {
            if (tc.cls[j] != c) continue;
            const double vj = f.am * a.v[j] + f.b * a.i[j];
            const double ij = f.as * a.i[j];
            g.dtau_mem[j] += lv[j] * (s->cv_v * vj + s->cv_i * ij);
            g.dtau_syn[j] += ij * (s->ci_li * li[j] + s->ci_lv * lv[j]);
          }
        }
      }
      const std::vector<AdjFlowCoef>* ac = &adj_dt;
      if (L != dt) {
        for (int c = 0; c < nc; ++c)
          adj_tmp[c] = adj_flow_coef(tc.taus[c].first, tc.taus[c].second, L);
        ac = &adj_tmp;
      }
      for (int j = 0; j < n; ++j) {
        const AdjFlowCoef& f = (*ac)[tc.cls[j]];
        li[j] = f.as * li[j] + f.b * lv[j];
        lv[j] *= f.am;
      }
    }
    t_cur = tn;

    // reverse of the forward order at one time: inputs, sample, spikes
    while (ii > 0 && in[ii - 1].time == t_cur) {
      const int c = in[ii - 1].neuron;
      for (int j = 0; j < h; ++j)
        g.dw_ih(j, c) -= p.tau_syn[j] * li[j];
      --ii;
    }
    if (k_cur >= 1 && t_sm == t_cur) {
      if (drive_on) {
        drive.sample_impulse(k_cur, imp);
        for (int j = 0; j < o; ++j) lv[h + j] += imp[j] / p.tau_mem[h + j];
      }
      --k_cur;
    }
    for (;;) {  // spikes at t_cur, descending combined neuron id
      const bool bh = hi > 0 && hs[hi - 1].time == t_cur;
      const bool bo = oi > 0 && os[oi - 1].time == t_cur;
      if (!bh && !bo) break;
      const int jh = bh ? hs[hi - 1].neuron : -1;
      const int jo = bo ? h + os[oi - 1].neuron : -1;
      if (jo > jh) {
        // output spike: self term plus the first-spike loss derivative
        const RecordedSpike& s = os[oi - 1];
        double dlp = 0;
        if (drive_on && drive.kind == LossKind::TimeToFirstSpike &&
            s.time == drive.first_spike[s.neuron])
          dlp = drive.scale * drive.dlp_dt[s.neuron];
        lv[jo] = apply_spike_jump(lv[jo], 0.0, dlp, p.theta,
                                  p.tau_mem[jo] * s.vdot, opts.clamp_floor,
                                  &g.clamped);
        --oi;
      } else {
        const RecordedSpike& s = hs[hi - 1];
        const int l = jh;
        double tr = 0;
        if (s.delivered) {
          if (p.recurrent)
            for (int j = 0; j < h; ++j)
              tr += p.w_hh(j, l) * (lv[j] - li[j]);
          for (int j = 0; j < o; ++j)
            tr += p.w_ho(j, l) * (lv[h + j] - li[h + j]);
          // gradient samples (lambda_I is continuous across the jump)
          if (p.recurrent)
            for (int j = 0; j < h; ++j)
              g.dw_hh(j, l) -= p.tau_syn[j] * li[j];
          for (int j = 0; j < o; ++j)
            g.dw_ho(j, l) -= p.tau_syn[h + j] * li[h + j];
          g.transport_sum[l] += tr;
        }
        lv[l] = apply_spike_jump(lv[l], tr, 0.0, p.theta,
                                 p.tau_mem[l] * s.vdot, opts.clamp_floor,
                                 &g.clamped);
        if (reg_on)
          lv[l] = regularisation_jump(lv[l], opts.reg.k_reg, opts.reg.n_batch,
                                      opts.reg.mean_counts[l], opts.reg.nu);
        --hi;
      }
    }
    if (!lv.allFinite() || !li.allFinite())
      throw std::runtime_error("adjoint: non-finite adjoint state at t = " +
                               std::to_string(t_cur));
  }
  return g;
}

}  // namespace evp
