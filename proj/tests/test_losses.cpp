#include <cmath>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "evp/losses.hpp"

using namespace evp;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

// hand-built record: only the fields a given loss reads need to be real
ForwardRecord make_rec(int n_out, double duration = 20, double dt = 1) {
  ForwardRecord r;
  r.dt = dt;
  r.duration = duration;
  r.n_steps = (int)std::llround(duration / dt);
  r.integrals = VectorXd::Zero(n_out);
  r.v_max = VectorXd::Zero(n_out);
  r.k_max = VectorXi::Zero(n_out);
  r.first_spike.assign(n_out, kNaN);
  return r;
}

}  // namespace

TEST_CASE("voltage-integral cross entropy on two outputs") {
  ForwardRecord rec = make_rec(2);
  rec.integrals << 2.0, 0.0;
  LossSpec spec;  // Sum
  // -log(e^2/(e^2+e^0)) = log(1+e^-2)
  CHECK(loss_value(spec, rec, 0).value ==
        doctest::Approx(0.1269280110429726).epsilon(1e-14));
  CHECK(loss_value(spec, rec, 1).value ==
        doctest::Approx(2.1269280110429727).epsilon(1e-14));
  CHECK(classify(spec, rec) == 0);
}

TEST_CASE("uniform integrals give log(n_out) for every label") {
  ForwardRecord rec = make_rec(20);
  LossSpec spec;
  for (int label : {0, 7, 19})
    CHECK(loss_value(spec, rec, label).value ==
          doctest::Approx(2.995732273553991).epsilon(1e-14));
}

TEST_CASE("the loss is invariant under a common shift of the integrals") {
  ForwardRecord rec = make_rec(4);
  rec.integrals << 0.3, -1.2, 2.7, 0.9;
  LossSpec spec;
  const double base = loss_value(spec, rec, 2).value;
  for (double c : {1.0, -5.0, 300.0}) {
    ForwardRecord shifted = rec;
    shifted.integrals.array() += c;
    CHECK(std::fabs(loss_value(spec, shifted, 2).value - base) <= 1e-10);
  }
}

TEST_CASE("softmax bracket: uniform case and zero sum") {
  ForwardRecord rec = make_rec(20);
  LossSpec spec;
  const LossDrive d = build_loss_drive(spec, rec, 3);
  CHECK(d.bracket[3] == doctest::Approx(0.95).epsilon(1e-14));
  for (int j = 0; j < 20; ++j)
    if (j != 3) CHECK(d.bracket[j] == doctest::Approx(-0.05).epsilon(1e-14));
  CHECK(std::fabs(d.bracket.sum()) <= 1e-14);

  ForwardRecord rnd = make_rec(5);
  rnd.integrals << 1.7, -0.4, 0.0, 3.1, -2.2;
  const LossDrive d2 = build_loss_drive(spec, rnd, 1);
  CHECK(std::fabs(d2.bracket.sum()) <= 1e-14);
}

TEST_CASE("softmax is shift-robust at extreme arguments") {
  VectorXd a(3);
  a << 1000.0, 1001.0, 999.0;
  const VectorXd p = softmax(a);
  CHECK(std::isfinite(p.sum()));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p[1] > p[0]);
  CHECK(p[0] > p[2]);
}

TEST_CASE("exponential weighting endpoints") {
  ForwardRecord rec = make_rec(2, 100, 1);
  LossSpec spec;
  spec.kind = LossKind::SumExp;
  const LossDrive d = build_loss_drive(spec, rec, 0);
  CHECK(d.weight_at(0.0) == 1.0);
  CHECK(d.weight_at(100.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  LossSpec unit;
  const LossDrive du = build_loss_drive(unit, rec, 0);
  CHECK(du.weight_at(50.0) == 1.0);
}

TEST_CASE("sample impulses carry the quadrature factors") {
  ForwardRecord rec = make_rec(2, 10, 0.5);
  rec.integrals << 1.0, -1.0;
  VectorXd out;

  SUBCASE("integral losses scale by dt and the weight") {
    LossSpec spec;
    spec.kind = LossKind::SumExp;
    const LossDrive d = build_loss_drive(spec, rec, 0);
    d.sample_impulse(4, out);  // t = 2
    const VectorXd ref = (0.5 * std::exp(-2.0 / 10.0)) * d.bracket;
    CHECK((out - ref).cwiseAbs().maxCoeff() <= 1e-15);
  }

  SUBCASE("the max loss fires a point impulse at the argmax sample only") {
    LossSpec spec;
    spec.kind = LossKind::MaxOverTime;
    rec.v_max << 0.4, 0.1;
    rec.k_max << 7, 2;
    const LossDrive d = build_loss_drive(spec, rec, 0);
    d.sample_impulse(3, out);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
    d.sample_impulse(7, out);  // no dt factor: a point mass, not quadrature
    CHECK(out[0] == doctest::Approx(d.bracket[0]).epsilon(1e-14));
    CHECK(out[1] == 0.0);
    d.sample_impulse(2, out);
    CHECK(out[1] == doctest::Approx(d.bracket[1]).epsilon(1e-14));
  }

  SUBCASE("drive_scale = 0 silences everything") {
    LossSpec spec;
    spec.drive_scale = 0;
    const LossDrive d = build_loss_drive(spec, rec, 0);
    d.sample_impulse(4, out);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
    const LossDrive z = LossDrive::zero(2);
    z.sample_impulse(0, out);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("per-sample cross entropy matches a brute-force recomputation") {
  ForwardRecord rec = make_rec(3, 2.5, 0.5);
  rec.n_steps = 5;
  rec.trace.resize(5, 3);
  rec.trace << 0.0, 0.0, 0.0, 0.2, -0.1, 0.4, 1.3, 0.8, -0.2, 0.7, 0.7, 0.7,
      -2.0, 1.0, 0.0;
  LossSpec spec;
  spec.kind = LossKind::XEntIntegral;

  double ref = 0;
  for (int k = 0; k < 5; ++k) {
    double m = rec.trace.row(k).maxCoeff(), s = 0;
    for (int j = 0; j < 3; ++j) s += std::exp(rec.trace(k, j) - m);
    ref += 0.5 * (m + std::log(s) - rec.trace(k, 1));
  }
  CHECK(loss_value(spec, rec, 1).value == doctest::Approx(ref).epsilon(1e-14));

  // drive at sample k is (delta_label - softmax(row_k)) * scale * dt
  const LossDrive d = build_loss_drive(spec, rec, 1);
  VectorXd out;
  d.sample_impulse(2, out);
  double m = rec.trace.row(2).maxCoeff(), s = 0;
  for (int j = 0; j < 3; ++j) s += std::exp(rec.trace(2, j) - m);
  for (int j = 0; j < 3; ++j) {
    const double soft = std::exp(rec.trace(2, j) - m) / s;
    CHECK(out[j] ==
          doctest::Approx(0.5 * ((j == 1 ? 1.0 : 0.0) - soft)).epsilon(1e-13));
  }
  CHECK(std::fabs(out.sum()) <= 1e-15);
}

TEST_CASE("first-spike loss against frozen hand values") {
  // two outputs, spikes at 3 ms and 7 ms, tau0 = 1, tau1 = 100, alpha = 5e-5
  ForwardRecord rec = make_rec(2);
  rec.first_spike = {3.0, 7.0};
  LossSpec spec;
  spec.kind = LossKind::TimeToFirstSpike;
  spec.tau0 = 1.0;
  spec.tau1 = 100.0;
  spec.alpha = 5e-5;

  SUBCASE("both spiking") {
    CHECK(loss_value(spec, rec, 0).value ==
          doctest::Approx(0.018151450644507454).epsilon(1e-12));
    CHECK(loss_value(spec, rec, 1).value ==
          doctest::Approx(4.018153553326872).epsilon(1e-12));
    CHECK(!loss_value(spec, rec, 0).no_gradient);
    CHECK(classify(spec, rec) == 0);

    const LossDrive d = build_loss_drive(spec, rec, 0);
    CHECK(d.dlp_dt[0] ==
          doctest::Approx(0.017986725189358524).epsilon(1e-12));
    CHECK(d.dlp_dt[1] ==
          doctest::Approx(-0.017986209962091555).epsilon(1e-12));
    CHECK(!d.phantom);
  }

  SUBCASE("silent label with phantom spikes acts as a spike at T") {
    rec.first_spike = {kNaN, 7.0};
    const LossResult r = loss_value(spec, rec, 0);
    CHECK(r.value == doctest::Approx(13.00001333046476).epsilon(1e-12));
    CHECK(!r.no_gradient);
    const LossDrive d = build_loss_drive(spec, rec, 0);
    CHECK(d.phantom);
    CHECK(d.phantom_dlp > 0);
    CHECK(d.dlp_dt[0] == 0.0);  // the label term moved to the phantom
  }

  SUBCASE("silent label without phantom spikes reports no gradient") {
    rec.first_spike = {kNaN, 7.0};
    spec.phantom_spikes = false;
    const LossResult r = loss_value(spec, rec, 0);
    CHECK(r.value == doctest::Approx(13.000011070137909).epsilon(1e-12));
    CHECK(r.no_gradient);
  }

  SUBCASE("a fully silent trial with phantoms off has no finite loss") {
    rec.first_spike = {kNaN, kNaN};
    spec.phantom_spikes = false;
    CHECK(std::isinf(loss_value(spec, rec, 0).value));
    CHECK(classify(spec, rec) == -1);  // abstain
  }
}

TEST_CASE("classification rules per loss") {
  LossSpec sum;
  ForwardRecord rec = make_rec(3);
  rec.integrals << 1.0, 3.0, 3.0;
  CHECK(classify(sum, rec) == 1);  // ties break to the lowest index

  LossSpec mx;
  mx.kind = LossKind::MaxOverTime;
  rec.v_max << 0.2, 0.9, 0.3;
  CHECK(classify(mx, rec) == 1);

  LossSpec tt;
  tt.kind = LossKind::TimeToFirstSpike;
  rec.first_spike = {5.0, 2.0, kNaN};
  CHECK(classify(tt, rec) == 1);  // earliest spike wins
}

TEST_CASE("label out of range faults") {
  ForwardRecord rec = make_rec(3);
  LossSpec spec;
  CHECK_THROWS_AS(loss_value(spec, rec, 3), std::runtime_error);
  CHECK_THROWS_AS(loss_value(spec, rec, -1), std::runtime_error);
  CHECK_THROWS_AS(build_loss_drive(spec, rec, 5), std::runtime_error);
}

TEST_CASE("forcing unit weighting collapses the weighted loss onto the plain "
          "sum") {
  NetworkParams p;
  p.n_in = 1;
  p.n_hidden = 1;
  p.n_out = 2;
  p.w_ih = MatrixXd::Constant(1, 1, 8.0);
  p.w_ho = MatrixXd::Zero(2, 1);
  p.w_ho << 1.0, 0.4;
  p.tau_mem = VectorXd::Constant(3, 20.0);
  p.tau_syn = VectorXd::Constant(3, 5.0);
  Trial t;
  t.duration = 30;
  t.events = {{0, 1.0}};
  LossSpec sum;
  LossSpec forced;
  forced.kind = LossKind::SumExp;
  forced.force_unit_weighting = true;
  const ForwardWithLoss a = run_forward_with_loss(p, t, sum, 1.0, 0);
  const ForwardWithLoss b = run_forward_with_loss(p, t, forced, 1.0, 0);
  CHECK((a.record.integrals - b.record.integrals).cwiseAbs().maxCoeff() <=
        1e-12);
  CHECK(std::fabs(a.loss.value - b.loss.value) <= 1e-12);
}
