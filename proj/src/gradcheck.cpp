#include "evp/gradcheck.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "evp/network.hpp"

namespace evp {

std::string coord_name(const Coord& c) {
  std::ostringstream os;
  switch (c.block) {
    case ParamBlock::WIh: os << "w_ih[" << c.row << "," << c.col << "]"; break;
    case ParamBlock::WHh: os << "w_hh[" << c.row << "," << c.col << "]"; break;
    case ParamBlock::WHo: os << "w_ho[" << c.row << "," << c.col << "]"; break;
    case ParamBlock::TauMem: os << "tau_mem[" << c.row << "]"; break;
    case ParamBlock::TauSyn: os << "tau_syn[" << c.row << "]"; break;
  }
  return os.str();
}

VectorXi spike_signature(const ForwardRecord& rec, const NetworkParams& p) {
  VectorXi sig = VectorXi::Zero(p.n_neurons());
  sig.head(p.n_hidden) = rec.spike_counts;
  for (const auto& s : rec.output_spikes) ++sig[p.n_hidden + s.neuron];
  return sig;
}

std::vector<long long> stability_signature(const ForwardRecord& rec,
                                           const NetworkParams& p,
                                           const LossSpec& spec, double dt) {
  std::vector<long long> sig;
  const VectorXi counts = spike_signature(rec, p);
  for (int j = 0; j < counts.size(); ++j) sig.push_back(counts[j]);
  // Losses that read the sample grid are kinked wherever a spike crosses a
  // sample boundary (the sample sees the PSP onset on one side only), so the
  // identity and grid cell of every spike joins the signature: a perturbation
  // that reorders a spike against a sample is excluded like a created or
  // deleted spike, not failed.
  const bool sampled = spec.kind == LossKind::Sum ||
                       spec.kind == LossKind::SumExp ||
                       spec.kind == LossKind::XEntIntegral;
  if (sampled) {
    for (const auto& s : rec.hidden_spikes) {
      sig.push_back(s.neuron);
      sig.push_back((long long)std::floor(s.time / dt));
    }
    for (const auto& s : rec.output_spikes) {
      sig.push_back(p.n_hidden + s.neuron);
      sig.push_back((long long)std::floor(s.time / dt));
    }
  }
  // The max-over-time loss reads exactly one sample per output, so it is
  // kinked only when the argmax moves or when a hidden spike crosses one of
  // the sampled instants: per output, pin the argmax cell and the number of
  // hidden spikes to its left.
  if (spec.kind == LossKind::MaxOverTime)
    for (int j = 0; j < p.n_out; ++j) {
      sig.push_back(rec.k_max[j]);
      const double t_max = rec.k_max[j] * dt;
      long long before = 0;
      for (const auto& s : rec.hidden_spikes)
        if (s.time < t_max) ++before;
      sig.push_back(before);
    }
  return sig;
}

namespace {

NetworkParams perturbed(const NetworkParams& p, const Coord& c, double delta) {
  NetworkParams q = p;
  switch (c.block) {
    case ParamBlock::WIh: q.w_ih(c.row, c.col) += delta; break;
    case ParamBlock::WHh: q.w_hh(c.row, c.col) += delta; break;
    case ParamBlock::WHo: q.w_ho(c.row, c.col) += delta; break;
    case ParamBlock::TauMem: q.tau_mem[c.row] += delta; break;
    case ParamBlock::TauSyn: q.tau_syn[c.row] += delta; break;
  }
  return q;
}

}  // namespace

FdResult finite_diff_grad(const NetworkParams& p, const Trial& trial,
                          const LossSpec& spec, double dt, double epsilon,
                          const Coord& coord) {
  if (epsilon <= 0) throw std::runtime_error("gradcheck: epsilon must be > 0");
  const ForwardRecord base = run_forward_trial(p, trial, spec, dt, 0);
  const auto sig0 = stability_signature(base, p, spec, dt);

  const NetworkParams pp = perturbed(p, coord, epsilon);
  const NetworkParams pm = perturbed(p, coord, -epsilon);
  const ForwardWithLoss fp = run_forward_with_loss(pp, trial, spec, dt, 0);
  const ForwardWithLoss fm = run_forward_with_loss(pm, trial, spec, dt, 0);

  FdResult r;
  r.grad = (fp.loss.value - fm.loss.value) / (2 * epsilon);
  r.stable = stability_signature(fp.record, pp, spec, dt) == sig0 &&
             stability_signature(fm.record, pm, spec, dt) == sig0;
  return r;
}

GradCheckReport grad_check(const NetworkParams& p, const Trial& trial,
                           const LossSpec& spec, double dt,
                           const GradCheckOptions& opts) {
  const ForwardRecord rec = run_forward_trial(p, trial, spec, dt, 0);
  const LossDrive drive = build_loss_drive(spec, rec, trial.label);
  BackwardOptions bo;
  bo.want_tau = opts.check_tau;
  const GradientSet g = run_backward_trial(p, rec, drive, dt, bo);

  std::vector<std::pair<Coord, double>> coords;  // coordinate, analytic value
  for (int r = 0; r < p.n_hidden; ++r)
    for (int c = 0; c < p.n_in; ++c)
      coords.push_back({{ParamBlock::WIh, r, c}, g.dw_ih(r, c)});
  if (p.recurrent)
    for (int r = 0; r < p.n_hidden; ++r)
      for (int c = 0; c < p.n_hidden; ++c)
        coords.push_back({{ParamBlock::WHh, r, c}, g.dw_hh(r, c)});
  for (int r = 0; r < p.n_out; ++r)
    for (int c = 0; c < p.n_hidden; ++c)
      coords.push_back({{ParamBlock::WHo, r, c}, g.dw_ho(r, c)});
  if (opts.check_tau)
    for (int j = 0; j < p.n_neurons(); ++j) {
      coords.push_back({{ParamBlock::TauMem, j, 0}, g.dtau_mem[j]});
      coords.push_back({{ParamBlock::TauSyn, j, 0}, g.dtau_syn[j]});
    }

  GradCheckReport rep;
  rep.tol = opts.tol;
  for (const auto& [c, a] : coords) {
    const bool is_tau =
        c.block == ParamBlock::TauMem || c.block == ParamBlock::TauSyn;
    const FdResult fd = finite_diff_grad(p, trial, spec, dt,
                                         is_tau ? opts.eps_tau : opts.eps_w, c);
    GradCheckRow row;
    row.name = coord_name(c);
    row.analytic = a;
    row.numeric = fd.grad;
    row.abs_err = std::fabs(a - fd.grad);
    const double den =
        std::max(std::max(std::fabs(a), std::fabs(fd.grad)), opts.denom_floor);
    row.rel_err = row.abs_err / den;
    row.stable = fd.stable;
    if (row.stable) {
      ++rep.n_stable;
      if (row.rel_err > rep.max_rel) {
        rep.max_rel = row.rel_err;
        rep.worst = row.name;
      }
    } else {
      ++rep.n_unstable;
    }
    rep.rows.push_back(std::move(row));
  }
  if (rep.n_stable == 0)
    rep.verdict = GradCheckReport::Inconclusive;
  else
    rep.verdict = rep.max_rel <= opts.tol ? GradCheckReport::Pass
                                          : GradCheckReport::Fail;
  return rep;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  const char* v = verdict == Pass        ? "PASS"
                  : verdict == Fail      ? "FAIL"
                                         : "INCONCLUSIVE";
  os << v << ": " << n_stable << " stable / " << n_unstable
     << " unstable coordinates, max rel err " << max_rel << " (tol " << tol
     << ")";
  if (!worst.empty()) os << ", worst " << worst;
  return os.str();
}

std::string GradCheckReport::csv() const {
  std::ostringstream os;
  os << "coord,analytic,numeric,abs_err,rel_err,stable\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.name << ',' << r.analytic << ',' << r.numeric << ',' << r.abs_err
       << ',' << r.rel_err << ',' << (r.stable ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace evp
