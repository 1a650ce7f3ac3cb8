#include "evp/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "evp/dataset.hpp"
#include "evp/math.hpp"
#include "evp/network.hpp"

namespace evp {

namespace {

int resolve_threads(int t) {
  if (t > 0) return t;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? (int)hw : 1;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::min(resolve_threads(threads), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

void append_num(std::string& out, double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, r.ptr);
}

double draw_gauss(std::mt19937_64& rng, double mu, double sigma) {
  if (sigma <= 0) return mu;
  return std::normal_distribution<double>(mu, sigma)(rng);
}

}  // namespace

NetworkParams init_params(const ArchSpec& arch, const InitSpec& init,
                          std::uint64_t seed, double theta, int spike_cap,
                          bool spiking_outputs) {
  if (init.tau_mem_bar <= 0 || init.tau_syn_bar <= 0)
    throw std::runtime_error("trainer: tau bars must be positive");
  NetworkParams p;
  p.n_in = arch.n_in;
  p.n_hidden = arch.n_hidden;
  p.n_out = arch.n_out;
  p.recurrent = arch.recurrent;
  p.output_mode =
      spiking_outputs ? OutputMode::Spiking : OutputMode::NonSpiking;
  p.theta = theta;
  p.spike_cap = spike_cap;
  const int h = arch.n_hidden, o = arch.n_out, n = h + o;

  std::mt19937_64 rng(mix_seed(seed, 0x696e6974));
  p.w_ih.resize(h, arch.n_in);
  for (int c = 0; c < arch.n_in; ++c)
    for (int r = 0; r < h; ++r)
      p.w_ih(r, c) = draw_gauss(rng, init.mu_ih, init.sigma_ih);
  if (arch.recurrent) {
    p.w_hh.resize(h, h);
    for (int c = 0; c < h; ++c)
      for (int r = 0; r < h; ++r)
        p.w_hh(r, c) = draw_gauss(rng, init.mu_hh, init.sigma_hh);
    p.w_hh.diagonal().setZero();  // no self-synapses
  } else {
    p.w_hh.resize(0, 0);
  }
  p.w_ho.resize(o, h);
  for (int c = 0; c < h; ++c)
    for (int r = 0; r < o; ++r)
      p.w_ho(r, c) = draw_gauss(rng, init.mu_ho, init.sigma_ho);

  p.tau_mem = VectorXd::Constant(n, init.tau_mem_bar);
  p.tau_syn = VectorXd::Constant(n, init.tau_syn_bar);
  if (init.heterogeneous_tau) {
    // hidden-layer timescales ~ Gamma(3, bar/3) (mean = bar), clipped
    std::gamma_distribution<double> gm(3.0, init.tau_mem_bar / 3.0);
    std::gamma_distribution<double> gs(3.0, init.tau_syn_bar / 3.0);
    for (int j = 0; j < h; ++j)
      p.tau_mem[j] = std::clamp(gm(rng), 3.0, 3.0 * init.tau_mem_bar);
    for (int j = 0; j < h; ++j)
      p.tau_syn[j] = std::clamp(gs(rng), 1.0, 3.0 * init.tau_syn_bar);
  }
  validate_params(p);
  return p;
}

namespace {

template <class M>
void adam_block(M& theta, M& m, M& v, const M& g, const AdamConfig& c,
                double eta, double bc1, double bc2, const char* name) {
  if (!g.allFinite())
    throw std::runtime_error(std::string("trainer: non-finite gradient in ") +
                             name);
  m = c.beta1 * m + (1 - c.beta1) * g;
  v = c.beta2 * v + (1 - c.beta2) * g.cwiseProduct(g);
  theta.array() -=
      eta * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
}

}  // namespace

void adam_step(OptimizerState& opt, const GradientSet& g, NetworkParams& p,
               const AdamConfig& cfg, double eta, bool learn_tau,
               double tau_mem_floor, double tau_syn_floor) {
  ++opt.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, (double)opt.step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, (double)opt.step);
  adam_block(p.w_ih, opt.m.dw_ih, opt.v.dw_ih, g.dw_ih, cfg, eta, bc1, bc2,
             "w_ih");
  if (p.recurrent) {
    adam_block(p.w_hh, opt.m.dw_hh, opt.v.dw_hh, g.dw_hh, cfg, eta, bc1, bc2,
               "w_hh");
    p.w_hh.diagonal().setZero();
  }
  adam_block(p.w_ho, opt.m.dw_ho, opt.v.dw_ho, g.dw_ho, cfg, eta, bc1, bc2,
             "w_ho");
  if (learn_tau) {
    adam_block(p.tau_mem, opt.m.dtau_mem, opt.v.dtau_mem, g.dtau_mem, cfg, eta,
               bc1, bc2, "tau_mem");
    adam_block(p.tau_syn, opt.m.dtau_syn, opt.v.dtau_syn, g.dtau_syn, cfg, eta,
               bc1, bc2, "tau_syn");
    p.tau_mem = p.tau_mem.cwiseMax(tau_mem_floor);
    p.tau_syn = p.tau_syn.cwiseMax(tau_syn_floor);
  }
  opt.eta_last = eta;
}

double ease_in_eta(double eta_target, double start_frac, double factor,
                   int step) {
  return std::min(eta_target,
                  eta_target * start_frac * std::pow(factor, (double)step));
}

bool schedule_step(ScheduleState& s, double x, const ScheduleConfig& cfg) {
  s.m_fast = cfg.fast_keep * s.m_fast + (1 - cfg.fast_keep) * x;
  s.m_slow = cfg.slow_keep * s.m_slow + (1 - cfg.slow_keep) * x;
  ++s.epochs_since_change;
  if (s.m_fast < s.m_slow && s.epochs_since_change >= cfg.min_epochs) {
    s.epochs_since_change = 0;
    ++s.halvings;
    return true;
  }
  return false;
}

long long silent_neuron_boost(NetworkParams& p, const VectorXi& epoch_totals,
                              double dg) {
  long long boosted = 0;
  for (int l = 0; l < p.n_hidden; ++l) {
    if (epoch_totals[l] != 0) continue;
    p.w_ih.row(l).array() += dg;
    boosted += p.n_in;
    if (p.recurrent) {
      for (int c = 0; c < p.n_hidden; ++c)
        if (c != l) {
          p.w_hh(l, c) += dg;
          ++boosted;
        }
    }
  }
  return boosted;
}

EvalResult evaluate(const NetworkParams& p, const LossSpec& loss,
                    const Dataset& ds, double dt, const AugmentConfig& aug,
                    int threads) {
  EvalResult r;
  const int n = (int)ds.trials.size();
  r.n = n;
  if (n == 0) return r;
  const int n_in_raw =
      aug.delay_enabled ? p.n_in / std::max(1, aug.n_delay) : p.n_in;
  std::vector<int> preds(n);
  std::vector<double> losses(n);
  parallel_for(n, threads, [&](int i) {
    const Trial* t = &ds.trials[i];
    Trial expanded;
    if (aug.delay_enabled) {
      expanded = build_delay_line(*t, aug.n_delay, aug.t_delay, n_in_raw);
      t = &expanded;
    }
    const ForwardRecord rec = run_forward_trial(p, *t, loss, dt, 0);
    preds[i] = classify(loss, rec);
    losses[i] = loss_value(loss, rec, t->label).value;
  });
  int correct = 0, n_loss = 0;
  double loss_sum = 0;
  for (int i = 0; i < n; ++i) {
    if (preds[i] < 0) ++r.abstained;
    if (preds[i] == ds.trials[i].label) ++correct;
    if (std::isfinite(losses[i])) {
      loss_sum += losses[i];
      ++n_loss;
    }
  }
  r.accuracy = (double)correct / n;
  r.mean_loss = n_loss ? loss_sum / n_loss : 0;
  return r;
}

namespace {

struct TrialRef {
  int a = 0, b = -1;  // b >= 0: blend of trials a and b
};

std::string metrics_header() {
  return "epoch,train_loss,train_acc,val_acc,hidden_rate,clamped,boosted,"
         "no_grad,eta,halvings\n";
}

void append_metrics_row(std::string& csv, const EpochMetrics& m) {
  csv += std::to_string(m.epoch);
  csv += ',';
  append_num(csv, m.train_loss);
  csv += ',';
  append_num(csv, m.train_acc);
  csv += ',';
  if (m.val_acc) append_num(csv, *m.val_acc);
  csv += ',';
  append_num(csv, m.hidden_rate);
  csv += ',' + std::to_string(m.clamped);
  csv += ',' + std::to_string(m.boosted);
  csv += ',' + std::to_string(m.no_grad);
  csv += ',';
  append_num(csv, m.eta);
  csv += ',' + std::to_string(m.halvings);
  csv += '\n';
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& cfg) {
  if (train_set.trials.empty())
    throw std::runtime_error("trainer: empty training set");
  validate_augment(cfg.augment);
  if (cfg.n_batch < 1) throw std::runtime_error("trainer: n_batch must be >= 1");
  const int n_in_raw = cfg.augment.delay_enabled
                           ? cfg.arch.n_in / std::max(1, cfg.augment.n_delay)
                           : cfg.arch.n_in;
  if (cfg.augment.delay_enabled &&
      n_in_raw * cfg.augment.n_delay != cfg.arch.n_in)
    throw std::runtime_error(
        "trainer: n_in must be n_delay * raw channel count");
  for (const auto& t : train_set.trials)
    if (t.label < 0 || t.label >= cfg.arch.n_out)
      throw std::runtime_error("trainer: class index out of range in trial " +
                               std::to_string(t.id));

  NetworkParams params =
      init_params(cfg.arch, cfg.init, cfg.seed, cfg.theta, cfg.spike_cap,
                  cfg.loss.spiking_outputs());
  OptimizerState opt;
  opt.m = GradientSet::zeros(params);
  opt.v = GradientSet::zeros(params);
  opt.eta_target = cfg.eta;
  ScheduleState sched;

  // label -> trial indices, for blend pairing
  std::unordered_map<int, std::vector<int>> by_label;
  for (int i = 0; i < (int)train_set.trials.size(); ++i)
    by_label[train_set.trials[i].label].push_back(i);

  TrainResult res;
  res.metrics_csv = metrics_header();
  double best_acc = -1;
  std::string timing_csv = "epoch,wall_ms\n";

  const int n_orig = (int)train_set.trials.size();
  const int n_extra =
      cfg.augment.blend_enabled
          ? (cfg.augment.n_blend_extra < 0 ? n_orig : cfg.augment.n_blend_extra)
          : 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto wall0 = std::chrono::steady_clock::now();
    // epoch item list: originals plus freshly-paired blends, then shuffled
    std::vector<TrialRef> items;
    items.reserve(n_orig + n_extra);
    for (int i = 0; i < n_orig; ++i) items.push_back({i, -1});
    std::mt19937_64 erng(mix_seed(cfg.seed, 0xb1e4d, (unsigned)epoch));
    for (int k = 0; k < n_extra; ++k) {
      const int a =
          std::uniform_int_distribution<int>(0, n_orig - 1)(erng);
      const auto& pool = by_label[train_set.trials[a].label];
      const int b = pool[std::uniform_int_distribution<int>(
          0, (int)pool.size() - 1)(erng)];
      items.push_back({a, b});
    }
    std::mt19937_64 srng(mix_seed(cfg.seed, 0x5c0ff1e, (unsigned)epoch));
    std::shuffle(items.begin(), items.end(), srng);

    const int n_items = (int)items.size();
    double loss_sum = 0;
    long long n_loss = 0, correct = 0, no_grad = 0, clamped = 0;
    long long spike_total_all = 0;
    VectorXi epoch_totals = VectorXi::Zero(cfg.arch.n_hidden);

    std::vector<ForwardRecord> recs(cfg.n_batch);
    std::vector<int> labels(cfg.n_batch);
    std::vector<char> usable(cfg.n_batch);
    std::vector<double> lvals(cfg.n_batch);
    std::vector<int> preds(cfg.n_batch);
    std::vector<GradientSet> grads(cfg.n_batch);

    for (int b0 = 0; b0 < n_items; b0 += cfg.n_batch) {
      const int B = std::min(cfg.n_batch, n_items - b0);
      parallel_for(B, cfg.threads, [&](int i) {
        const TrialRef ref = items[b0 + i];
        std::mt19937_64 rng(
            mix_seed(cfg.seed, 0xa6000000ull + (unsigned)epoch,
                     (unsigned)(b0 + i)));
        Trial t = ref.b < 0 ? train_set.trials[ref.a]
                            : augment_blend(train_set.trials[ref.a],
                                            train_set.trials[ref.b],
                                            cfg.augment.p_blend,
                                            cfg.augment.p_blend, rng);
        t = augment_trial(t, cfg.augment, n_in_raw, rng);
        const std::uint64_t fseed =
            mix_seed(cfg.seed, 0xf0000000ull + (unsigned)epoch,
                     (unsigned)(b0 + i));
        recs[i] = run_forward_trial(params, t, cfg.loss, cfg.dt, fseed,
                                    cfg.dropout);
        labels[i] = t.label;
        const LossResult lr = loss_value(cfg.loss, recs[i], t.label);
        lvals[i] = lr.value;
        usable[i] = !lr.no_gradient;
        preds[i] = classify(cfg.loss, recs[i]);
      });

      VectorXd mean_counts = VectorXd::Zero(cfg.arch.n_hidden);
      for (int i = 0; i < B; ++i)
        mean_counts += recs[i].spike_counts.cast<double>();
      mean_counts /= (double)B;

      BackwardOptions bo;
      bo.want_tau = cfg.learn_tau;
      if (cfg.reg.k_reg != 0) {
        bo.reg.k_reg = cfg.reg.k_reg;
        bo.reg.n_batch = B;
        bo.reg.nu = cfg.reg.nu_hidden;
        bo.reg.mean_counts = mean_counts;
      }
      parallel_for(B, cfg.threads, [&](int i) {
        if (!usable[i]) {
          grads[i] = GradientSet::zeros(params);
          return;
        }
        const LossDrive drive =
            build_loss_drive(cfg.loss, recs[i], labels[i]);
        grads[i] = run_backward_trial(params, recs[i], drive, cfg.dt, bo);
      });

      GradientSet G = GradientSet::zeros(params);
      for (int i = 0; i < B; ++i) G.accumulate(grads[i], 1.0 / B);
      if (params.recurrent) G.dw_hh.diagonal().setZero();

      double eta_b = cfg.eta * std::pow(0.5, (double)opt.halvings);
      if (cfg.ease_in.enabled) {
        const double ramp =
            ease_in_eta(cfg.eta, cfg.ease_in.start_frac, cfg.ease_in.factor,
                        opt.ramp_steps);
        if (ramp < cfg.eta) {
          eta_b = ramp;  // schedule halvings cannot trigger during the ramp
          ++opt.ramp_steps;
        }
      }
      adam_step(opt, G, params, cfg.adam, eta_b, cfg.learn_tau,
                cfg.tau_mem_floor, cfg.tau_syn_floor);

      for (int i = 0; i < B; ++i) {
        if (std::isfinite(lvals[i])) {
          loss_sum += lvals[i];
          ++n_loss;
        }
        if (!usable[i]) ++no_grad;
        if (preds[i] == labels[i]) ++correct;
        clamped += grads[i].clamped;
        epoch_totals += recs[i].spike_counts;
        spike_total_all += recs[i].spike_counts.sum();
      }
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = n_loss ? loss_sum / (double)n_loss : 0;
    em.train_acc = (double)correct / n_items;
    em.hidden_rate =
        (double)spike_total_all / ((double)n_items * cfg.arch.n_hidden);
    em.clamped = clamped;
    em.no_grad = no_grad;

    if (cfg.boost_enabled)
      em.boosted = silent_neuron_boost(params, epoch_totals, cfg.boost_dg);

    if (val_set)
      em.val_acc =
          evaluate(params, cfg.loss, *val_set, cfg.dt, cfg.augment,
                   cfg.threads)
              .accuracy;

    const bool ramp_done =
        !cfg.ease_in.enabled ||
        ease_in_eta(cfg.eta, cfg.ease_in.start_frac, cfg.ease_in.factor,
                    opt.ramp_steps) >= cfg.eta;
    // schedule listens to validation accuracy when available, else training
    if (cfg.schedule.enabled && ramp_done &&
        schedule_step(sched, em.val_acc.value_or(em.train_acc), cfg.schedule))
      ++opt.halvings;

    em.eta = opt.eta_last;
    em.halvings = opt.halvings;
    res.metrics.push_back(em);
    append_metrics_row(res.metrics_csv, em);

    if (em.train_acc > best_acc) {
      best_acc = em.train_acc;
      res.best = params;
      res.best_epoch = epoch;
    }

    const auto wall1 = std::chrono::steady_clock::now();
    timing_csv += std::to_string(epoch) + ',' +
                  std::to_string(std::chrono::duration_cast<
                                     std::chrono::milliseconds>(wall1 - wall0)
                                     .count()) +
                  '\n';
  }

  res.final_params = params;
  if (!cfg.early_stop) {
    res.best = params;
    res.best_epoch = cfg.epochs - 1;
  }

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream(cfg.out_dir + "/metrics.csv", std::ios::binary)
        << res.metrics_csv;
    std::ofstream(cfg.out_dir + "/timing.csv", std::ios::binary) << timing_csv;
    save_checkpoint(res.best, opt, res.best_epoch,
                    cfg.out_dir + "/checkpoint_best.txt");
    save_checkpoint(res.final_params, opt, cfg.epochs - 1,
                    cfg.out_dir + "/checkpoint_final.txt");
  }
  return res;
}

std::vector<FoldResult> cross_validate(const Dataset& ds,
                                       const TrainConfig& cfg) {
  const auto speakers = list_speakers(ds);
  if (speakers.empty())
    throw std::runtime_error("trainer: dataset has no speaker tags");
  std::vector<FoldResult> folds;
  for (const auto& sp : speakers) {
    auto [tr, va] = split_loso(ds, sp);
    TrainConfig fc = cfg;
    if (!cfg.out_dir.empty()) fc.out_dir = cfg.out_dir + "/fold_" + sp;
    const TrainResult r = train(tr, &va, fc);
    FoldResult f;
    f.speaker = sp;
    f.val = evaluate(r.best, cfg.loss, va, cfg.dt, cfg.augment, cfg.threads);
    f.best_epoch = r.best_epoch;
    f.train_acc = r.metrics.empty() ? 0 : r.metrics.back().train_acc;
    folds.push_back(std::move(f));
  }
  return folds;
}

namespace {

void emit_matrix(std::string& out, const char* name, const MatrixXd& m) {
  out += name;
  out += ' ' + std::to_string(m.rows()) + ' ' + std::to_string(m.cols());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      out += ' ';
      append_num(out, m(r, c));
    }
  out += '\n';
}

void emit_vector(std::string& out, const char* name, const VectorXd& v) {
  out += name;
  out += ' ' + std::to_string(v.size());
  for (int i = 0; i < v.size(); ++i) {
    out += ' ';
    append_num(out, v[i]);
  }
  out += '\n';
}

struct TokenReader {
  std::istringstream is;
  explicit TokenReader(const std::string& s) : is(s) {}
  std::string word() {
    std::string w;
    if (!(is >> w)) throw std::runtime_error("checkpoint: truncated file");
    return w;
  }
  void expect(const char* w) {
    const std::string got = word();
    if (got != w)
      throw std::runtime_error("checkpoint: expected '" + std::string(w) +
                               "', got '" + got + "'");
  }
  long long integer() {
    const std::string w = word();
    long long v = 0;
    const auto r = std::from_chars(w.data(), w.data() + w.size(), v);
    if (r.ec != std::errc{} || r.ptr != w.data() + w.size())
      throw std::runtime_error("checkpoint: bad integer '" + w + "'");
    return v;
  }
  double number() {
    const std::string w = word();
    double v = 0;
    const auto r = std::from_chars(w.data(), w.data() + w.size(), v);
    if (r.ec != std::errc{} || r.ptr != w.data() + w.size())
      throw std::runtime_error("checkpoint: bad number '" + w + "'");
    return v;
  }
  MatrixXd matrix(const char* name) {
    expect(name);
    const int rows = (int)integer(), cols = (int)integer();
    MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = number();
    return m;
  }
  VectorXd vector(const char* name) {
    expect(name);
    const int n = (int)integer();
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = number();
    return v;
  }
};

}  // namespace

std::string format_checkpoint(const NetworkParams& p,
                              const OptimizerState& opt, int epoch) {
  std::string out = "evpckpt 1\n";
  out += "epoch " + std::to_string(epoch) + '\n';
  out += "arch " + std::to_string(p.n_in) + ' ' + std::to_string(p.n_hidden) +
         ' ' + std::to_string(p.n_out) + ' ' +
         std::to_string(p.recurrent ? 1 : 0) + ' ' +
         std::to_string(p.output_mode == OutputMode::Spiking ? 1 : 0) + '\n';
  out += "hyper ";
  append_num(out, p.theta);
  out += ' ';
  append_num(out, p.v_reset);
  out += ' ' + std::to_string(p.spike_cap) + '\n';
  emit_vector(out, "tau_mem", p.tau_mem);
  emit_vector(out, "tau_syn", p.tau_syn);
  emit_matrix(out, "w_ih", p.w_ih);
  emit_matrix(out, "w_hh", p.w_hh);
  emit_matrix(out, "w_ho", p.w_ho);
  out += "opt " + std::to_string(opt.step) + ' ';
  append_num(out, opt.eta_target);
  out += ' ' + std::to_string(opt.ramp_steps) + ' ' +
         std::to_string(opt.halvings) + ' ';
  append_num(out, opt.eta_last);
  out += '\n';
  emit_matrix(out, "m_ih", opt.m.dw_ih);
  emit_matrix(out, "m_hh", opt.m.dw_hh);
  emit_matrix(out, "m_ho", opt.m.dw_ho);
  emit_vector(out, "m_tm", opt.m.dtau_mem);
  emit_vector(out, "m_ts", opt.m.dtau_syn);
  emit_matrix(out, "v_ih", opt.v.dw_ih);
  emit_matrix(out, "v_hh", opt.v.dw_hh);
  emit_matrix(out, "v_ho", opt.v.dw_ho);
  emit_vector(out, "v_tm", opt.v.dtau_mem);
  emit_vector(out, "v_ts", opt.v.dtau_syn);
  return out;
}

Checkpoint parse_checkpoint(const std::string& text) {
  TokenReader r(text);
  r.expect("evpckpt");
  if (r.integer() != 1)
    throw std::runtime_error("checkpoint: unsupported version");
  Checkpoint ck;
  r.expect("epoch");
  ck.epoch = (int)r.integer();
  r.expect("arch");
  ck.params.n_in = (int)r.integer();
  ck.params.n_hidden = (int)r.integer();
  ck.params.n_out = (int)r.integer();
  ck.params.recurrent = r.integer() != 0;
  ck.params.output_mode =
      r.integer() != 0 ? OutputMode::Spiking : OutputMode::NonSpiking;
  r.expect("hyper");
  ck.params.theta = r.number();
  ck.params.v_reset = r.number();
  ck.params.spike_cap = (int)r.integer();
  ck.params.tau_mem = r.vector("tau_mem");
  ck.params.tau_syn = r.vector("tau_syn");
  ck.params.w_ih = r.matrix("w_ih");
  ck.params.w_hh = r.matrix("w_hh");
  ck.params.w_ho = r.matrix("w_ho");
  r.expect("opt");
  ck.opt.step = r.integer();
  ck.opt.eta_target = r.number();
  ck.opt.ramp_steps = (int)r.integer();
  ck.opt.halvings = (int)r.integer();
  ck.opt.eta_last = r.number();
  ck.opt.m.dw_ih = r.matrix("m_ih");
  ck.opt.m.dw_hh = r.matrix("m_hh");
  ck.opt.m.dw_ho = r.matrix("m_ho");
  ck.opt.m.dtau_mem = r.vector("m_tm");
  ck.opt.m.dtau_syn = r.vector("m_ts");
  ck.opt.v.dw_ih = r.matrix("v_ih");
  ck.opt.v.dw_hh = r.matrix("v_hh");
  ck.opt.v.dw_ho = r.matrix("v_ho");
  ck.opt.v.dtau_mem = r.vector("v_tm");
  ck.opt.v.dtau_syn = r.vector("v_ts");
  validate_params(ck.params);
  return ck;
}

void save_checkpoint(const NetworkParams& p, const OptimizerState& opt,
                     int epoch, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  const std::string s = format_checkpoint(p, opt, epoch);
  f.write(s.data(), (std::streamsize)s.size());
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace evp
