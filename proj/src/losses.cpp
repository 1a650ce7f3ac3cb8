#include "evp/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "evp/network.hpp"

namespace evp {

namespace {

double log_sum_exp(const VectorXd& a) {
  const double m = a.maxCoeff();
  double s = 0;
  for (int j = 0; j < a.size(); ++j) s += std::exp(a[j] - m);
  return m + std::log(s);
}

int argmax_lowest(const VectorXd& a) {
  int best = 0;
  for (int j = 1; j < a.size(); ++j)
    if (a[j] > a[best]) best = j;
  return best;
}

void check_label(int label, int n_out) {
  if (label < 0 || label >= n_out)
    throw std::runtime_error("loss: label out of range");
}

}  // namespace

VectorXd softmax(const VectorXd& a) {
  VectorXd p(a.size());
  const double m = a.maxCoeff();
  double s = 0;
  for (int j = 0; j < a.size(); ++j) s += (p[j] = std::exp(a[j] - m));
  return p / s;
}

LossResult loss_value(const LossSpec& spec, const ForwardRecord& rec,
                      int label) {
  LossResult r;
  const int o = (int)rec.integrals.size();
  switch (spec.kind) {
    case LossKind::Sum:
    case LossKind::SumExp: {
      check_label(label, o);
      r.value = log_sum_exp(rec.integrals) - rec.integrals[label];
      return r;
    }
    case LossKind::XEntIntegral: {
      check_label(label, (int)rec.trace.cols());
      double acc = 0;
      for (int k = 0; k < rec.n_steps; ++k) {
        const VectorXd row = rec.trace.row(k).transpose();
        acc += log_sum_exp(row) - row[label];
      }
      r.value = rec.dt * acc;
      return r;
    }
    case LossKind::MaxOverTime: {
      check_label(label, (int)rec.v_max.size());
      r.value = log_sum_exp(rec.v_max) - rec.v_max[label];
      return r;
    }
    case LossKind::TimeToFirstSpike: {
      check_label(label, (int)rec.first_spike.size());
      double tl = rec.first_spike[label];
      const bool silent = is_nan(tl);
      if (silent) {
        tl = rec.duration;
        if (!spec.phantom_spikes) r.no_gradient = true;
      }
      // collect participating first-spike times
      std::vector<double> ts;
      for (int j = 0; j < (int)rec.first_spike.size(); ++j) {
        if (j == (int)label && silent) continue;
        if (!is_nan(rec.first_spike[j])) ts.push_back(rec.first_spike[j]);
      }
      if (silent && spec.phantom_spikes) ts.push_back(tl);
      if (ts.empty()) {
        r.value = std::numeric_limits<double>::infinity();
        return r;
      }
      double m = ts[0];
      for (double t : ts) m = std::min(m, t);  // largest exponent
      double s = 0;
      for (double t : ts) s += std::exp(-(t - m) / spec.tau0);
      r.value = tl / spec.tau0 - m / spec.tau0 + std::log(s) +
                spec.alpha * std::expm1(tl / spec.tau1);
      return r;
    }
  }
  throw std::runtime_error("loss: unknown kind");
}

double LossDrive::weight_at(double t) const {
  return weighting == Weighting::ExpDecay ? std::exp(-t / duration) : 1.0;
}

void LossDrive::sample_impulse(int k, VectorXd& out) const {
  out.setZero(n_out);
  if (scale == 0) return;
  switch (kind) {
    case LossKind::Sum:
    case LossKind::SumExp:
      out = (scale * dt * weight_at(k * dt)) * bracket;
      return;
    case LossKind::XEntIntegral: {
      const VectorXd row = trace->row(k).transpose();
      out = -softmax(row);
      out[label] += 1.0;
      out *= scale * dt;
      return;
    }
    case LossKind::MaxOverTime:
      for (int j = 0; j < n_out; ++j)
        if (k_impulse[j] == k) out[j] += scale * bracket[j];
      return;
    case LossKind::TimeToFirstSpike:
      return;  // drive enters through the output spike jumps
  }
}

LossDrive LossDrive::zero(int n_out) {
  LossDrive d;
  d.n_out = n_out;
  d.scale = 0;
  d.bracket = VectorXd::Zero(n_out);
  return d;
}

LossDrive build_loss_drive(const LossSpec& spec, const ForwardRecord& rec,
                           int label) {
  LossDrive d;
  d.kind = spec.kind;
  d.n_out = (int)rec.integrals.size();
  if (d.n_out == 0) d.n_out = (int)rec.first_spike.size();
  d.label = label;
  d.duration = rec.duration;
  d.dt = rec.dt;
  d.scale = spec.drive_scale;
  d.weighting = spec.weighting();
  check_label(label, d.n_out);
  switch (spec.kind) {
    case LossKind::Sum:
    case LossKind::SumExp:
      d.bracket = -softmax(rec.integrals);
      d.bracket[label] += 1.0;
      break;
    case LossKind::XEntIntegral:
      d.trace = &rec.trace;
      break;
    case LossKind::MaxOverTime:
      d.bracket = -softmax(rec.v_max);
      d.bracket[label] += 1.0;
      d.k_impulse = rec.k_max;
      break;
    case LossKind::TimeToFirstSpike: {
      d.first_spike = rec.first_spike;
      double tl = rec.first_spike[label];
      const bool silent = is_nan(tl);
      if (silent) {
        if (!spec.phantom_spikes) break;  // reported via loss_value
        d.phantom = true;
        tl = rec.duration;
      }
      // softmax over -t/tau0; the set is every spiking output, plus the
      // phantom time when the labeled output stayed silent
      std::vector<int> idx;
      double m = -tl / spec.tau0;
      for (int j = 0; j < d.n_out; ++j)
        if (!is_nan(rec.first_spike[j])) {
          idx.push_back(j);
          m = std::max(m, -rec.first_spike[j] / spec.tau0);
        }
      double s = d.phantom ? std::exp(-tl / spec.tau0 - m) : 0.0;
      for (int j : idx) s += std::exp(-rec.first_spike[j] / spec.tau0 - m);
      const double alpha_term =
          spec.alpha / spec.tau1 * std::exp(tl / spec.tau1);
      d.dlp_dt.setZero(d.n_out);
      for (int j : idx) {
        const double pj = std::exp(-rec.first_spike[j] / spec.tau0 - m) / s;
        d.dlp_dt[j] = ((j == label ? 1.0 : 0.0) - pj) / spec.tau0;
      }
      if (d.phantom) {
        const double pl = std::exp(-tl / spec.tau0 - m) / s;
        d.phantom_dlp = (1.0 - pl) / spec.tau0 + alpha_term;
      } else {
        d.dlp_dt[label] += alpha_term;
      }
      break;
    }
  }
  return d;
}

int classify(const LossSpec& spec, const ForwardRecord& rec) {
  switch (spec.kind) {
    case LossKind::Sum:
    case LossKind::SumExp:
      return argmax_lowest(rec.integrals);
    case LossKind::XEntIntegral: {
      VectorXd acc = VectorXd::Zero(rec.trace.cols());
      for (int k = 0; k < rec.n_steps; ++k)
        acc += softmax(rec.trace.row(k).transpose());
      return argmax_lowest(acc);
    }
    case LossKind::MaxOverTime:
      return argmax_lowest(rec.v_max);
    case LossKind::TimeToFirstSpike: {
      int best = -1;
      for (int j = 0; j < (int)rec.first_spike.size(); ++j) {
        if (is_nan(rec.first_spike[j])) continue;
        if (best < 0 || rec.first_spike[j] < rec.first_spike[best]) best = j;
      }
      return best;
    }
  }
  throw std::runtime_error("loss: unknown kind");
}

ForwardWithLoss run_forward_with_loss(const NetworkParams& p, const Trial& t,
                                      const LossSpec& spec, double dt,
                                      std::uint64_t seed,
                                      const DropoutSpec& dropout) {
  ForwardWithLoss fw;
  fw.record = run_forward_trial(p, t, spec, dt, seed, dropout);
  fw.loss = loss_value(spec, fw.record, t.label);
  return fw;
}

}  // namespace evp
