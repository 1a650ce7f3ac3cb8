#include <cmath>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "evp/trainer.hpp"

using namespace evp;

namespace {

// two channels, two classes: the class is whichever channel spikes first
Dataset toy_dataset(int n_trials) {
  Dataset ds;
  for (int k = 0; k < n_trials; ++k) {
    Trial t;
    t.id = k;
    t.label = k % 2;
    t.duration = 20;
    const int lead = t.label, lag = 1 - t.label;
    const double base = 1.0 + 0.25 * (k % 4);
    t.events = {{lead, base}, {lead, base + 1.5}, {lag, base + 9.0}};
    std::sort(t.events.begin(), t.events.end(), [](auto& a, auto& b) {
      return a.time != b.time ? a.time < b.time : a.neuron < b.neuron;
    });
    ds.trials.push_back(t);
  }
  return ds;
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.arch = {2, 4, 2, true};
  cfg.init.mu_ih = 4.0;
  cfg.init.sigma_ih = 1.0;
  cfg.init.sigma_hh = 0.1;
  cfg.init.mu_ho = 0.5;
  cfg.init.sigma_ho = 0.1;
  cfg.eta = 0.02;
  cfg.n_batch = 4;
  cfg.epochs = 3;
  cfg.dt = 1.0;
  cfg.seed = 11;
  cfg.threads = 2;
  cfg.boost_enabled = false;
  return cfg;
}

}  // namespace

TEST_CASE("deterministic init: zero sigmas give the means exactly") {
  ArchSpec arch{3, 4, 2, true};
  InitSpec init;
  init.mu_ih = 0.25;
  init.mu_hh = -0.5;
  init.mu_ho = 1.5;
  init.tau_mem_bar = 20;
  init.tau_syn_bar = 5;
  const NetworkParams p = init_params(arch, init, 42);
  CHECK((p.w_ih.array() == 0.25).all());
  CHECK(p.w_ho.minCoeff() == 1.5);
  CHECK(p.w_ho.maxCoeff() == 1.5);
  CHECK(p.w_hh.diagonal().cwiseAbs().maxCoeff() == 0.0);  // no self-synapses
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (r != c) CHECK(p.w_hh(r, c) == -0.5);
  CHECK((p.tau_mem.array() == 20.0).all());
  CHECK((p.tau_syn.array() == 5.0).all());
  // same seed, same net; different seed with sigma > 0 differs
  InitSpec noisy = init;
  noisy.sigma_ih = 0.1;
  const NetworkParams a = init_params(arch, noisy, 1);
  const NetworkParams b = init_params(arch, noisy, 1);
  const NetworkParams c = init_params(arch, noisy, 2);
  CHECK((a.w_ih - b.w_ih).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.w_ih - c.w_ih).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("heterogeneous timescales: gamma-distributed, clipped, hidden only") {
  ArchSpec arch{1, 10000, 3, false};
  InitSpec init;
  init.tau_mem_bar = 20;
  init.tau_syn_bar = 5;
  init.heterogeneous_tau = true;
  const NetworkParams p = init_params(arch, init, 9);
  // outputs keep the bar exactly
  for (int j = 10000; j < 10003; ++j) {
    CHECK(p.tau_mem[j] == 20.0);
    CHECK(p.tau_syn[j] == 5.0);
  }
  // hidden draws stay inside the clip window and spread around the mean
  CHECK(p.tau_mem.head(10000).minCoeff() >= 3.0);
  CHECK(p.tau_mem.head(10000).maxCoeff() <= 60.0);
  CHECK(p.tau_syn.head(10000).minCoeff() >= 1.0);
  CHECK(p.tau_syn.head(10000).maxCoeff() <= 15.0);
  // Gamma(3, bar/3) has mean bar and sd bar/sqrt(3); the sample mean of 1e4
  // draws sits within 5 standard errors (~0.58 for bar = 20)
  CHECK(std::fabs(p.tau_mem.head(10000).mean() - 20.0) <= 0.6);
  CHECK(p.tau_mem.head(10000).maxCoeff() >
        p.tau_mem.head(10000).minCoeff() + 1.0);
}

TEST_CASE("adam:zero gradient is a no-op on the weights") {
  const NetworkParams p0 =
      init_params({2, 3, 2, true}, toy_config().init, 5);
  NetworkParams p = p0;
  OptimizerState opt;
  opt.m = GradientSet::zeros(p);
  opt.v = GradientSet::zeros(p);
  adam_step(opt, GradientSet::zeros(p), p, {}, 0.01, false, 3, 1);
  CHECK(opt.step == 1);
  CHECK((p.w_ih - p0.w_ih).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.w_ho - p0.w_ho).cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.tau_mem == p0.tau_mem);
}

TEST_CASE("adam: the first bias-corrected step is a signed eta move") {
  NetworkParams p = init_params({2, 3, 2, false}, toy_config().init, 5);
  const NetworkParams p0 = p;
  OptimizerState opt;
  opt.m = GradientSet::zeros(p);
  opt.v = GradientSet::zeros(p);
  GradientSet g = GradientSet::zeros(p);
  g.dw_ih(0, 0) = 0.5;
  g.dw_ih(1, 1) = -2.0;
  adam_step(opt, g, p, {}, 1e-3, false, 3, 1);
  // m-hat = g, v-hat = g^2 on step one, so the move is eta * sign(g)
  CHECK(p.w_ih(0, 0) ==
        doctest::Approx(p0.w_ih(0, 0) - 1e-3).epsilon(1e-6));
  CHECK(p.w_ih(1, 1) ==
        doctest::Approx(p0.w_ih(1, 1) + 1e-3).epsilon(1e-6));
  CHECK(p.w_ih(2, 0) == p0.w_ih(2, 0));  // untouched coordinates hold still
  CHECK(opt.eta_last == 1e-3);
}

TEST_CASE("adam: tau updates clip at their floors and obey learn_tau") {
  NetworkParams p = init_params({2, 3, 2, false}, toy_config().init, 5);
  p.tau_mem.setConstant(3.0005);
  p.tau_syn.setConstant(1.0005);
  OptimizerState opt;
  opt.m = GradientSet::zeros(p);
  opt.v = GradientSet::zeros(p);
  GradientSet g = GradientSet::zeros(p);
  g.dtau_mem.setConstant(1.0);  // push every tau downhill
  g.dtau_syn.setConstant(1.0);

  NetworkParams frozen = p;
  OptimizerState opt2 = opt;
  adam_step(opt2, g, frozen, {}, 0.01, false, 3, 1);
  CHECK(frozen.tau_mem == p.tau_mem);  // learn_tau off: taus never move

  adam_step(opt, g, p, {}, 0.01, true, 3, 1);
  CHECK((p.tau_mem.array() == 3.0).all());  // 3.0005 - ~0.01 clips to 3
  CHECK((p.tau_syn.array() == 1.0).all());
}

TEST_CASE("adam: non-finite gradients fault naming the block") {
  NetworkParams p = init_params({2, 3, 2, false}, toy_config().init, 5);
  OptimizerState opt;
  opt.m = GradientSet::zeros(p);
  opt.v = GradientSet::zeros(p);
  GradientSet g = GradientSet::zeros(p);
  g.dw_ho(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(opt, g, p, {}, 1e-3, false, 3, 1);
    FAIL("expected the non-finite fault");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("w_ho") != std::string::npos);
  }
}

TEST_CASE("ease-in ramp: geometric climb, capped at the target") {
  // eta(k) = min(target, target * 1e-3 * 1.05^k): 1.05^141 < 1000 <= 1.05^142
  CHECK(ease_in_eta(1.0, 1e-3, 1.05, 0) == doctest::Approx(1e-3));
  CHECK(ease_in_eta(1.0, 1e-3, 1.05, 141) < 1.0);
  CHECK(ease_in_eta(1.0, 1e-3, 1.05, 142) == 1.0);
  for (int k = 0; k <= 200; ++k) {
    CHECK(ease_in_eta(0.002, 1e-3, 1.05, k) <= 0.002);
    if (k)
      CHECK(ease_in_eta(0.002, 1e-3, 1.05, k) >=
            ease_in_eta(0.002, 1e-3, 1.05, k - 1));
  }
}

TEST_CASE("schedule: plateaus never halve, drops halve after the holdoff") {
  ScheduleConfig cfg;
  cfg.enabled = true;
  cfg.min_epochs = 5;

  SUBCASE("constant accuracy never triggers") {
    ScheduleState s;
    int halvings = 0;
    for (int e = 0; e < 200; ++e)
      halvings += schedule_step(s, 0.8, cfg) ? 1 : 0;
    CHECK(halvings == 0);
  }

  SUBCASE("a decline trips it, and retriggers honour the holdoff") {
    ScheduleState s;
    for (int e = 0; e < 10; ++e)
      CHECK(!schedule_step(s, 0.9, cfg));  // rising averages never halve
    std::vector<int> at;
    for (int e = 0; e < 30; ++e)
      if (schedule_step(s, 0.1, cfg)) at.push_back(e);
    REQUIRE(at.size() >= 2);  // a sustained decline keeps halving
    for (size_t k = 1; k < at.size(); ++k)
      CHECK(at[k] - at[k - 1] >= cfg.min_epochs);  // counter reset between
  }
}

TEST_CASE("silent-neuron boost touches exactly the incoming weights") {
  ArchSpec arch{700, 256, 10, true};
  InitSpec init;
  const NetworkParams p0 = init_params(arch, init, 1);
  NetworkParams p = p0;
  VectorXi totals = VectorXi::Constant(256, 5);
  totals[17] = 0;  // one silent neuron
  const long long touched = silent_neuron_boost(p, totals, 0.002);
  // 700 input weights + 255 recurrent (diagonal excluded)
  CHECK(touched == 955);
  CHECK((p.w_ih.row(17).array() - p0.w_ih.row(17).array()).minCoeff() ==
        doctest::Approx(0.002).epsilon(1e-12));
  CHECK(p.w_hh(17, 17) == 0.0);
  CHECK((p.w_ih.row(16) - p0.w_ih.row(16)).cwiseAbs().maxCoeff() == 0.0);
  // boosting again accumulates
  silent_neuron_boost(p, totals, 0.002);
  CHECK(p.w_ih(17, 0) == doctest::Approx(p0.w_ih(17, 0) + 0.004).epsilon(1e-12));
  // nothing silent, nothing touched
  CHECK(silent_neuron_boost(p, VectorXi::Constant(256, 1), 0.002) == 0);
}

TEST_CASE("checkpoints round-trip exactly") {
  NetworkParams p = init_params({3, 5, 4, true}, toy_config().init, 33);
  p.tau_mem[2] = 17.25;
  p.theta = 1.0;
  OptimizerState opt;
  opt.m = GradientSet::zeros(p);
  opt.v = GradientSet::zeros(p);
  opt.m.dw_ih(1, 2) = -0.034271;
  opt.v.dw_ho(0, 0) = 1.5e-9;
  opt.step = 1234;
  opt.eta_target = 0.005;
  opt.ramp_steps = 97;
  opt.halvings = 2;
  opt.eta_last = 0.0025;

  const std::string text = format_checkpoint(p, opt, 41);
  const Checkpoint ck = parse_checkpoint(text);
  CHECK(ck.epoch == 41);
  CHECK(ck.params.n_in == 3);
  CHECK(ck.params.recurrent);
  CHECK((ck.params.w_ih - p.w_ih).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ck.params.w_hh - p.w_hh).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ck.params.w_ho - p.w_ho).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ck.params.tau_mem == p.tau_mem);
  CHECK(ck.params.tau_syn == p.tau_syn);
  CHECK(ck.opt.step == 1234);
  CHECK(ck.opt.eta_target == 0.005);
  CHECK(ck.opt.ramp_steps == 97);
  CHECK(ck.opt.halvings == 2);
  CHECK(ck.opt.eta_last == 0.0025);
  CHECK((ck.opt.m.dw_ih - opt.m.dw_ih).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ck.opt.v.dw_ho - opt.v.dw_ho).cwiseAbs().maxCoeff() == 0.0);
  // a second pass through the formatter is byte-stable
  CHECK(format_checkpoint(ck.params, ck.opt, ck.epoch) == text);
  // corrupted header refuses to parse
  CHECK_THROWS_AS(parse_checkpoint("evpckpt 999\n"), std::runtime_error);
}

TEST_CASE("training runs are deterministic and structurally sound") {
  const Dataset ds = toy_dataset(16);
  TrainConfig cfg = toy_config();
  const TrainResult a = train(ds, nullptr, cfg);
  const TrainResult b = train(ds, nullptr, cfg);
  CHECK(a.metrics_csv == b.metrics_csv);  // bytes, not approximately
  REQUIRE(a.metrics.size() == 3);
  for (const auto& m : a.metrics) {
    CHECK(m.train_acc >= 0.0);
    CHECK(m.train_acc <= 1.0);
    CHECK(std::isfinite(m.train_loss));
    CHECK(m.eta > 0.0);
  }
  // early stopping keeps the best epoch (0-based), first among ties
  REQUIRE(a.best_epoch >= 0);
  REQUIRE(a.best_epoch < 3);
  const double best_acc = a.metrics[a.best_epoch].train_acc;
  for (int e = 0; e < a.best_epoch; ++e)
    CHECK(a.metrics[e].train_acc < best_acc);
  for (const auto& m : a.metrics) CHECK(m.train_acc <= best_acc);

  // a different seed changes the stream
  TrainConfig other = cfg;
  other.seed = 12;
  CHECK(train(ds, nullptr, other).metrics_csv != a.metrics_csv);
}

TEST_CASE("validation metrics appear when a validation set is given") {
  const Dataset ds = toy_dataset(16);
  const Dataset val = toy_dataset(8);
  TrainConfig cfg = toy_config();
  cfg.epochs = 2;
  const TrainResult r = train(ds, &val, cfg);
  for (const auto& m : r.metrics) {
    REQUIRE(m.val_acc.has_value());
    CHECK(*m.val_acc >= 0.0);
    CHECK(*m.val_acc <= 1.0);
  }
  const EvalResult ev = evaluate(r.best, cfg.loss, val, cfg.dt, cfg.augment,
                                 cfg.threads);
  CHECK(ev.n == 8);
  CHECK(ev.accuracy >= 0.0);
  CHECK(ev.accuracy <= 1.0);
  CHECK(std::isfinite(ev.mean_loss));
}

TEST_CASE("the ease-in ramp holds the first epochs below the target rate") {
  const Dataset ds = toy_dataset(16);
  TrainConfig cfg = toy_config();
  cfg.ease_in.enabled = true;
  cfg.epochs = 2;
  const TrainResult r = train(ds, nullptr, cfg);
  // 16 trials / batch 4 = 4 steps per epoch; the ramp is far from done
  CHECK(r.metrics[0].eta < cfg.eta);
  CHECK(r.metrics[1].eta > r.metrics[0].eta);
}

TEST_CASE("train validates its configuration") {
  TrainConfig cfg = toy_config();
  CHECK_THROWS_AS(train(Dataset{}, nullptr, cfg), std::runtime_error);
  Dataset bad = toy_dataset(4);
  bad.trials[2].label = 9;  // out of range for n_out = 2
  CHECK_THROWS_AS(train(bad, nullptr, cfg), std::runtime_error);
  Dataset ds = toy_dataset(8);
  TrainConfig nb = toy_config();
  nb.n_batch = 0;
  CHECK_THROWS_AS(train(ds, nullptr, nb), std::runtime_error);
}
