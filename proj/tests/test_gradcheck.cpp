#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "evp/gradcheck.hpp"
#include "evp/network.hpp"

using namespace evp;

namespace {

NetworkParams make_net(int n_in, int n_hidden, int n_out, bool recurrent) {
  NetworkParams p;
  p.n_in = n_in;
  p.n_hidden = n_hidden;
  p.n_out = n_out;
  p.recurrent = recurrent;
  p.w_ih = MatrixXd::Zero(n_hidden, n_in);
  if (recurrent) p.w_hh = MatrixXd::Zero(n_hidden, n_hidden);
  p.w_ho = MatrixXd::Zero(n_out, n_hidden);
  p.tau_mem = VectorXd::Constant(n_hidden + n_out, 20.0);
  p.tau_syn = VectorXd::Constant(n_hidden + n_out, 5.0);
  return p;
}

// two hidden neurons firing once each, both outputs driven
NetworkParams spiking_net() {
  NetworkParams p = make_net(2, 2, 2, true);
  p.w_ih << 8.0, 0.5, 0.5, 7.5;
  p.w_hh << 0.0, 0.4, 0.6, 0.0;
  p.w_ho << 1.0, 0.3, 0.2, 0.9;
  return p;
}

Trial two_spike_trial() {
  Trial t;
  t.label = 0;
  t.duration = 30;
  t.events = {{0, 1.0}, {1, 2.0}};
  return t;
}

}  // namespace

TEST_CASE("coordinate names") {
  CHECK(coord_name({ParamBlock::WIh, 0, 1}) == "w_ih[0,1]");
  CHECK(coord_name({ParamBlock::WHh, 3, 3}) == "w_hh[3,3]");
  CHECK(coord_name({ParamBlock::WHo, 2, 0}) == "w_ho[2,0]");
  CHECK(coord_name({ParamBlock::TauMem, 2, 0}) == "tau_mem[2]");
  CHECK(coord_name({ParamBlock::TauSyn, 0, 0}) == "tau_syn[0]");
}

TEST_CASE("a silent network passes with identically zero gradients") {
  NetworkParams p = make_net(2, 2, 2, false);  // all weights zero
  const GradCheckReport rep = grad_check(p, two_spike_trial(), {}, 0.5);
  CHECK(rep.verdict == GradCheckReport::Pass);
  CHECK(rep.max_rel == 0.0);
  CHECK(rep.n_unstable == 0);
  for (const auto& row : rep.rows) {
    CHECK(row.analytic == 0.0);
    CHECK(row.numeric == 0.0);
  }
}

TEST_CASE("full sweep passes on a spiking recurrent net") {
  GradCheckOptions opts;
  opts.check_tau = true;
  opts.tol = 1e-5;
  const GradCheckReport rep =
      grad_check(spiking_net(), two_spike_trial(), {}, 0.1, opts);
  CHECK(rep.verdict == GradCheckReport::Pass);
  CHECK(rep.n_stable > 0);
  CHECK(rep.rows.size() == 4 + 4 + 4 + 8);  // w_ih, w_hh, w_ho, tau pairs
  CHECK(rep.summary().find("PASS") == 0);
}

TEST_CASE("the max loss passes at its looser tolerance") {
  LossSpec spec;
  spec.kind = LossKind::MaxOverTime;
  GradCheckOptions opts;
  opts.tol = 1e-3;
  const GradCheckReport rep =
      grad_check(spiking_net(), two_spike_trial(), spec, 0.1, opts);
  CHECK(rep.verdict == GradCheckReport::Pass);
}

TEST_CASE("the first-spike loss passes with spiking outputs") {
  NetworkParams p = spiking_net();
  p.output_mode = OutputMode::Spiking;
  p.w_ho << 7.0, 1.0, 1.0, 7.5;  // outputs must actually cross
  LossSpec spec;
  spec.kind = LossKind::TimeToFirstSpike;
  spec.tau0 = 1.0;
  spec.tau1 = 100.0;
  spec.alpha = 5e-5;
  GradCheckOptions opts;
  opts.check_tau = true;
  const GradCheckReport rep =
      grad_check(p, two_spike_trial(), spec, 0.1, opts);
  CHECK(rep.verdict == GradCheckReport::Pass);
}

TEST_CASE("finite differences converge at second order on a stable coord") {
  const NetworkParams p = spiking_net();
  const Trial t = two_spike_trial();
  const Coord c{ParamBlock::WIh, 0, 0};
  const ForwardRecord rec = run_forward_trial(p, t, {}, 0.1, 0);
  const LossDrive drive = build_loss_drive({}, rec, t.label);
  const GradientSet g = run_backward_trial(p, rec, drive, 0.1);
  const double a = g.dw_ih(0, 0);

  const FdResult f1 = finite_diff_grad(p, t, {}, 0.1, 2e-2, c);
  const FdResult f2 = finite_diff_grad(p, t, {}, 0.1, 1e-2, c);
  REQUIRE(f1.stable);
  REQUIRE(f2.stable);
  const double e1 = std::fabs(f1.grad - a), e2 = std::fabs(f2.grad - a);
  REQUIRE(e1 > 1e-9);  // truncation must dominate the roundoff floor
  CHECK(e2 <= 0.35 * e1);  // halving eps quarters the truncation error
}

TEST_CASE("perturbations that create a spike are flagged unstable") {
  // unit PSP peak is ~0.15749, so the firing threshold weight is ~6.3496:
  // +0.01 around 6.345 creates the spike, -0.01 keeps it subthreshold
  NetworkParams p = make_net(1, 1, 2, false);
  p.w_ih(0, 0) = 6.345;
  p.w_ho << 1.0, 0.2;
  Trial t;
  t.label = 0;
  t.duration = 30;
  t.events = {{0, 1.0}};
  const FdResult fd =
      finite_diff_grad(p, t, {}, 0.5, 1e-2, {ParamBlock::WIh, 0, 0});
  CHECK(!fd.stable);
  const FdResult fine =
      finite_diff_grad(p, t, {}, 0.5, 1e-5, {ParamBlock::WIh, 0, 0});
  CHECK(fine.stable);

  GradCheckOptions opts;
  opts.eps_w = 1e-2;
  const GradCheckReport rep = grad_check(p, t, {}, 0.5, opts);
  CHECK(rep.n_unstable >= 1);
  bool flagged = false;
  for (const auto& row : rep.rows)
    if (row.name == "w_ih[0,0]") flagged = !row.stable;
  CHECK(flagged);
}

TEST_CASE("when every coordinate is unstable the verdict is inconclusive") {
  // spiking outputs and a step large enough to create/delete spikes along
  // every coordinate
  NetworkParams p = make_net(1, 1, 1, false);
  p.w_ih(0, 0) = 8.0;
  p.w_ho(0, 0) = 7.0;
  p.output_mode = OutputMode::Spiking;
  LossSpec spec;
  spec.kind = LossKind::TimeToFirstSpike;
  Trial t;
  t.label = 0;
  t.duration = 30;
  t.events = {{0, 1.0}};
  GradCheckOptions opts;
  opts.eps_w = 5.0;
  const GradCheckReport rep = grad_check(p, t, spec, 0.5, opts);
  CHECK(rep.verdict == GradCheckReport::Inconclusive);
  CHECK(rep.n_stable == 0);
  CHECK(rep.summary().find("INCONCLUSIVE") == 0);
}

TEST_CASE("sample-grid reorderings are excluded for sampled losses only") {
  // tau perturbations slide spike times across sample boundaries; the
  // signature must catch that for integral losses and ignore it for the
  // first-spike loss, which reads no samples
  const NetworkParams p = spiking_net();
  const Trial t = two_spike_trial();
  const ForwardRecord rec = run_forward_trial(p, t, {}, 0.5, 0);
  REQUIRE(!rec.hidden_spikes.empty());

  LossSpec sum;
  const auto s0 = stability_signature(rec, p, sum, 0.5);
  LossSpec tt;
  tt.kind = LossKind::TimeToFirstSpike;
  const auto s1 = stability_signature(rec, p, tt, 0.5);
  CHECK(s0.size() ==
        s1.size() + 2 * (rec.hidden_spikes.size() + rec.output_spikes.size()));
  // counts prefix is shared
  for (size_t k = 0; k < s1.size(); ++k) CHECK(s0[k] == s1[k]);

  LossSpec mx;
  mx.kind = LossKind::MaxOverTime;
  const ForwardRecord rmx = run_forward_trial(p, t, mx, 0.5, 0);
  const auto s2 = stability_signature(rmx, p, mx, 0.5);
  // counts + (argmax cell, spikes before it) per output
  CHECK(s2.size() == s1.size() + 4);
  CHECK(s2[s1.size()] == rmx.k_max[0]);
  long long before0 = 0;
  for (const auto& s : rmx.hidden_spikes)
    if (s.time < rmx.k_max[0] * 0.5) ++before0;
  CHECK(s2[s1.size() + 1] == before0);
  CHECK(s2[s1.size() + 2] == rmx.k_max[1]);
}

TEST_CASE("the csv report carries one row per coordinate") {
  const GradCheckReport rep =
      grad_check(spiking_net(), two_spike_trial(), {}, 0.5);
  const std::string csv = rep.csv();
  CHECK(csv.find("coord,analytic,numeric,abs_err,rel_err,stable") == 0);
  size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == rep.rows.size() + 1);
}

TEST_CASE("epsilon must be positive") {
  CHECK_THROWS_AS(finite_diff_grad(spiking_net(), two_spike_trial(), {}, 0.5,
                                   0.0, {ParamBlock::WIh, 0, 0}),
                  std::runtime_error);
}
