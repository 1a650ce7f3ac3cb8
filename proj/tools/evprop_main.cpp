// evprop — train / evaluate / inspect event-driven spiking networks.
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evp/adjoint.hpp"
#include "evp/config.hpp"
#include "evp/dataset.hpp"
#include "evp/gradcheck.hpp"
#include "evp/losses.hpp"
#include "evp/network.hpp"
#include "evp/synth.hpp"
#include "evp/trainer.hpp"

namespace {

using namespace evp;

struct CommonOpts {
  std::string config, profile, out;
  std::string data_train, data_val, data_test;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<int> threads;
  bool plots = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "config file (key = value sections)");
  cmd->add_option("--profile", o.profile, "named parameter profile");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--dt", o.dt, "simulation timestep (ms)");
  cmd->add_option("--threads", o.threads, "worker threads (default: cores)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--data-train", o.data_train, "training dataset file");
  cmd->add_option("--data-val", o.data_val, "validation dataset file");
  cmd->add_option("--data-test", o.data_test, "test dataset file");
  cmd->add_flag("--plots", o.plots, "write SVG learning-curve plots");
}

RunConfig resolve(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.profile.empty()) apply_profile(cfg, o.profile);
  if (!o.config.empty()) load_config(o.config, cfg);
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.dt) cfg.train.dt = *o.dt;
  if (o.threads) cfg.train.threads = *o.threads;
  if (!o.out.empty()) cfg.train.out_dir = o.out;
  if (!o.data_train.empty()) cfg.train_path = o.data_train;
  if (!o.data_val.empty()) cfg.val_path = o.data_val;
  if (!o.data_test.empty()) cfg.test_path = o.data_test;
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(text.data(), (std::streamsize)text.size());
}

// resolved config + seed + version stamp next to every run's outputs
void stamp_out_dir(const RunConfig& cfg) {
  if (cfg.train.out_dir.empty()) return;
  std::filesystem::create_directories(cfg.train.out_dir);
  write_text(cfg.train.out_dir + "/config.ini", format_config(cfg));
}

Dataset load_cropped(const std::string& path, double crop_t) {
  Dataset ds = load_dataset(path);
  if (crop_t <= 0) return ds;
  for (auto& t : ds.trials) {
    if (t.duration <= crop_t) continue;
    t.duration = crop_t;
    std::vector<SpikeEvent> kept;
    for (const auto& e : t.events)
      if (e.time < crop_t) kept.push_back(e);
    t.events = std::move(kept);
  }
  return ds;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const int n = (int)x.size();
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return 0;
  return sxy / std::sqrt(sxx * syy);
}

std::string svg_curves(const std::vector<EpochMetrics>& ms) {
  const int W = 640, H = 400, L = 50, B = 40;
  std::ostringstream s;
  s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
    << H << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  s << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - 10 << "' y2='"
    << H - B << "' stroke='black'/>\n";
  s << "<line x1='" << L << "' y1='10' x2='" << L << "' y2='" << H - B
    << "' stroke='black'/>\n";
  const int n = (int)ms.size();
  auto px = [&](int i) {
    return L + (n <= 1 ? 0.0 : (W - 10.0 - L) * i / (n - 1));
  };
  auto py = [&](double acc) { return H - B - (H - B - 10.0) * acc; };
  auto line = [&](const char* color, bool val) {
    std::ostringstream pts;
    for (int i = 0; i < n; ++i) {
      const auto& m = ms[i];
      if (val && !m.val_acc) continue;
      pts << px(i) << ',' << py(val ? *m.val_acc : m.train_acc) << ' ';
    }
    s << "<polyline fill='none' stroke='" << color << "' points='"
      << pts.str() << "'/>\n";
  };
  line("steelblue", false);
  line("firebrick", true);
  s << "<text x='" << L + 10 << "' y='20' fill='steelblue'>train</text>\n";
  s << "<text x='" << L + 70 << "' y='20' fill='firebrick'>val</text>\n";
  s << "<text x='" << (W / 2) << "' y='" << H - 10
    << "' text-anchor='middle'>epoch</text>\n</svg>\n";
  return s.str();
}

int cmd_train(const CommonOpts& o) {
  RunConfig cfg = resolve(o);
  validate_config(cfg);
  if (cfg.train_path.empty())
    throw std::runtime_error("train: no training dataset (data.train)");
  stamp_out_dir(cfg);
  const Dataset tr = load_cropped(cfg.train_path, cfg.crop_t);
  Dataset va;
  const bool has_val = !cfg.val_path.empty();
  if (has_val) va = load_cropped(cfg.val_path, cfg.crop_t);
  const TrainResult r = train(tr, has_val ? &va : nullptr, cfg.train);
  const auto& last = r.metrics.back();
  std::cout << "trained " << cfg.train.epochs << " epochs; best epoch "
            << r.best_epoch << ", train acc "
            << r.metrics[r.best_epoch].train_acc << "\n";
  if (last.val_acc) std::cout << "final val acc " << *last.val_acc << "\n";
  if (!cfg.test_path.empty()) {
    const Dataset te = load_cropped(cfg.test_path, cfg.crop_t);
    const EvalResult ev = evaluate(r.best, cfg.train.loss, te, cfg.train.dt,
                                   cfg.train.augment, cfg.train.threads);
    std::cout << "test acc " << ev.accuracy << " (" << ev.n << " trials, "
              << ev.abstained << " abstained)\n";
    if (!cfg.train.out_dir.empty())
      write_text(cfg.train.out_dir + "/test_eval.txt",
                 "accuracy " + std::to_string(ev.accuracy) + "\nmean_loss " +
                     std::to_string(ev.mean_loss) + "\nn " +
                     std::to_string(ev.n) + "\nabstained " +
                     std::to_string(ev.abstained) + "\n");
  }
  if (o.plots && !cfg.train.out_dir.empty())
    write_text(cfg.train.out_dir + "/learning_curves.svg",
               svg_curves(r.metrics));
  return 0;
}

int cmd_xval(const CommonOpts& o, const std::string& folds) {
  if (folds != "loso")
    throw std::runtime_error("xval: only --folds loso is supported");
  RunConfig cfg = resolve(o);
  validate_config(cfg);
  if (cfg.train_path.empty())
    throw std::runtime_error("xval: no dataset (data.train)");
  stamp_out_dir(cfg);
  const Dataset ds = load_cropped(cfg.train_path, cfg.crop_t);
  const auto folds_r = cross_validate(ds, cfg.train);
  std::string summary = "speaker,val_acc,val_n,best_epoch,train_acc\n";
  double mean = 0, m2 = 0;
  for (const auto& f : folds_r) {
    summary += f.speaker + ',' + std::to_string(f.val.accuracy) + ',' +
               std::to_string(f.val.n) + ',' + std::to_string(f.best_epoch) +
               ',' + std::to_string(f.train_acc) + '\n';
    mean += f.val.accuracy;
  }
  mean /= (double)folds_r.size();
  for (const auto& f : folds_r)
    m2 += (f.val.accuracy - mean) * (f.val.accuracy - mean);
  const double sd =
      folds_r.size() > 1 ? std::sqrt(m2 / ((double)folds_r.size() - 1)) : 0;
  summary += "mean," + std::to_string(mean) + ",,,\n";
  summary += "sd," + std::to_string(sd) + ",,,\n";
  std::cout << summary;
  if (!cfg.train.out_dir.empty())
    write_text(cfg.train.out_dir + "/xval_summary.csv", summary);
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt_path,
             const std::string& data_path) {
  RunConfig cfg = resolve(o);
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const Dataset ds = load_cropped(data_path, cfg.crop_t);
  const EvalResult ev = evaluate(ck.params, cfg.train.loss, ds, cfg.train.dt,
                                 cfg.train.augment, cfg.train.threads);
  std::cout << "accuracy " << ev.accuracy << "\nmean_loss " << ev.mean_loss
            << "\nn " << ev.n << "\nabstained " << ev.abstained << "\n";
  return 0;
}

// small deterministic nets for gradient verification
void gradcheck_profile(const std::string& name, std::uint64_t seed, double dt,
                       NetworkParams& p, Trial& trial, LossSpec& loss) {
  const auto dash = name.find('-');
  if (dash == std::string::npos)
    throw std::runtime_error(
        "gradcheck: profile must be chain-<loss> or rec-<loss>");
  const std::string arch = name.substr(0, dash);
  const std::string lk = name.substr(dash + 1);
  if (arch != "chain" && arch != "rec")
    throw std::runtime_error("gradcheck: unknown architecture '" + arch + "'");
  loss = LossSpec{};
  if (lk == "sum") loss.kind = LossKind::Sum;
  else if (lk == "sum_exp") loss.kind = LossKind::SumExp;
  else if (lk == "xent" || lk == "x_entropy") loss.kind = LossKind::XEntIntegral;
  else if (lk == "max") loss.kind = LossKind::MaxOverTime;
  else if (lk == "time") loss.kind = LossKind::TimeToFirstSpike;
  else throw std::runtime_error("gradcheck: unknown loss '" + lk + "'");

  // moderate readout weights keep the softmax away from saturation, where
  // every gradient is exponentially small and a difference oracle sees noise
  ArchSpec a{2, 3, 2, arch == "rec"};
  InitSpec ini;
  ini.mu_ih = 3.5;
  ini.sigma_ih = 0.7;
  ini.mu_hh = 0.3;
  ini.sigma_hh = 0.3;
  const bool spiking = loss.kind == LossKind::TimeToFirstSpike;
  ini.mu_ho = spiking ? 6.0 : 0.3;
  ini.sigma_ho = spiking ? 1.0 : 0.15;
  ini.tau_mem_bar = 20;
  ini.tau_syn_bar = 5;
  p = init_params(a, ini, seed, 1.0, 4096, spiking);
  trial.id = 0;
  trial.label = 0;
  trial.duration = 30;
  trial.events = {{0, 1.0}, {1, 2.0}, {0, 3.0}, {1, 5.5}, {0, 11.0}, {1, 17.0}};
  (void)dt;
}

int cmd_gradcheck(const CommonOpts& o, const std::string& profile, bool tau,
                  double tol, double eps_w, double eps_tau) {
  const std::uint64_t seed = o.seed.value_or(42);
  const double dt = o.dt.value_or(0.1);
  NetworkParams p;
  Trial trial;
  LossSpec loss;
  gradcheck_profile(profile, seed, dt, p, trial, loss);
  GradCheckOptions gopt;
  gopt.check_tau = tau;
  gopt.tol = tol;
  gopt.eps_w = eps_w;
  gopt.eps_tau = eps_tau;
  const GradCheckReport rep = grad_check(p, trial, loss, dt, gopt);
  std::cout << rep.summary();
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    write_text(o.out + "/gradcheck.csv", rep.csv());
    write_text(o.out + "/gradcheck_summary.txt", rep.summary());
  }
  return (int)rep.verdict;
}

std::uint32_t be32(std::istream& f, const char* what) {
  unsigned char b[4];
  f.read((char*)b, 4);
  if (!f) throw std::runtime_error(std::string("encode: truncated ") + what);
  return ((std::uint32_t)b[0] << 24) | ((std::uint32_t)b[1] << 16) |
         ((std::uint32_t)b[2] << 8) | (std::uint32_t)b[3];
}

int cmd_encode_mnist(const std::string& images_path,
                     const std::string& labels_path, const std::string& out,
                     int limit, double duration) {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) throw std::runtime_error("encode: cannot open " + images_path);
  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) throw std::runtime_error("encode: cannot open " + labels_path);
  if (be32(fi, "image magic") != 2051)
    throw std::runtime_error("encode: bad image-file magic");
  if (be32(fl, "label magic") != 2049)
    throw std::runtime_error("encode: bad label-file magic");
  int n = (int)be32(fi, "count");
  const int nl = (int)be32(fl, "count");
  if (n != nl) throw std::runtime_error("encode: image/label count mismatch");
  const int rows = (int)be32(fi, "rows"), cols = (int)be32(fi, "cols");
  if (limit > 0) n = std::min(n, limit);
  Dataset ds;
  std::vector<unsigned char> px(rows * cols);
  for (int i = 0; i < n; ++i) {
    fi.read((char*)px.data(), (std::streamsize)px.size());
    char lb = 0;
    fl.read(&lb, 1);
    if (!fi || !fl) throw std::runtime_error("encode: truncated data");
    Trial t = encode_latency(px.data(), rows * cols, (int)lb, duration);
    t.id = i;
    ds.trials.push_back(std::move(t));
  }
  save_dataset(ds, out);
  std::cout << "wrote " << n << " trials (" << rows * cols << " channels) to "
            << out << "\n";
  return 0;
}

int cmd_synth(const std::string& kind, int n, int classes, double duration,
              std::uint64_t seed, const std::string& out, int n_in,
              double active_start, double active_end) {
  Dataset ds;
  if (kind == "digits") {
    ds = synth_digits(n, classes, duration, seed);
  } else if (kind == "patterns") {
    ds = synth_spike_task(classes, std::max(1, n / std::max(1, classes)), n_in,
                          duration, active_start, active_end, seed);
  } else {
    throw std::runtime_error("synth: kind must be digits or patterns");
  }
  save_dataset(ds, out);
  std::cout << "wrote " << ds.trials.size() << " trials to " << out << "\n";
  return 0;
}

int cmd_pathology(const CommonOpts& o, int n_classes, int n_hidden,
                  int epochs, int target_class) {
  // train on a single class with the per-step cross-entropy loss; silences
  // around the active window let the hidden-layer switch-off mechanism act
  const std::uint64_t seed = o.seed.value_or(1);
  // a narrow 100 ms active window inside a 1 s trial maximises the trailing
  // silence the per-step loss integrates over, which drives the effect
  const Dataset full =
      synth_spike_task(n_classes, 20, 20, 1000, 300, 400, seed);
  Dataset single;
  for (const auto& t : full.trials)
    if (t.label == target_class) single.trials.push_back(t);

  TrainConfig cfg;
  cfg.arch = {20, n_hidden, n_classes, false};
  cfg.init.mu_ih = 2.0;
  cfg.init.sigma_ih = 1.0;
  cfg.init.mu_ho = 0.2;
  cfg.init.sigma_ho = 2.0;
  cfg.loss.kind = LossKind::XEntIntegral;
  cfg.eta = 5e-3;
  cfg.n_batch = 8;
  cfg.epochs = epochs;
  cfg.dt = o.dt.value_or(1.0);
  cfg.seed = seed;
  cfg.threads = o.threads.value_or(0);
  cfg.boost_enabled = false;
  cfg.early_stop = false;
  const TrainResult r = train(single, nullptr, cfg);

  // hidden spike counts over the single-class set vs weight onto the target
  std::vector<double> counts(n_hidden, 0), weights(n_hidden);
  for (const auto& t : single.trials) {
    const ForwardRecord rec =
        run_forward_trial(r.final_params, t, cfg.loss, cfg.dt, 0);
    for (int j = 0; j < n_hidden; ++j) counts[j] += rec.spike_counts[j];
  }
  for (int j = 0; j < n_hidden; ++j) {
    counts[j] /= (double)single.trials.size();
    weights[j] = r.final_params.w_ho(target_class, j);
  }
  const double rho = pearson(counts, weights);
  std::string table = "hidden,mean_spikes,w_to_target\n";
  for (int j = 0; j < n_hidden; ++j) {
    table += std::to_string(j) + ',';
    char buf[32];
    auto rr = std::to_chars(buf, buf + sizeof buf, counts[j]);
    table.append(buf, rr.ptr);
    table += ',';
    rr = std::to_chars(buf, buf + sizeof buf, weights[j]);
    table.append(buf, rr.ptr);
    table += '\n';
  }
  std::cout << "pearson(hidden spike count, weight to class " << target_class
            << ") = " << rho << "\n";
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    write_text(o.out + "/pathology_table.csv", table);
    write_text(o.out + "/pathology_summary.txt",
               "pearson " + std::to_string(rho) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-driven spiking network training (exact gradients)"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonOpts o_train, o_xval, o_eval, o_grad, o_path;
  std::string xval_folds = "loso";
  std::string eval_ckpt, eval_data;
  std::string grad_profile = "chain-sum";
  bool grad_tau = false;
  double grad_tol = 1e-5, grad_eps_w = 1e-5, grad_eps_tau = 1e-4;
  std::string enc_images, enc_labels, enc_out;
  int enc_limit = 0;
  double enc_duration = 20;
  std::string sy_kind = "digits", sy_out;
  int sy_n = 1000, sy_classes = 10, sy_nin = 20;
  double sy_duration = 20, sy_active0 = 300, sy_active1 = 700;
  std::uint64_t sy_seed = 1;
  int pa_classes = 20, pa_hidden = 256, pa_epochs = 30, pa_target = 0;

  auto* c_train = app.add_subcommand("train", "train a network");
  add_common(c_train, o_train);

  auto* c_xval =
      app.add_subcommand("xval", "leave-one-speaker-out cross-validation");
  add_common(c_xval, o_xval);
  c_xval->add_option("--folds", xval_folds, "fold scheme (loso)");

  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(c_eval, o_eval);
  c_eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")
      ->required();
  c_eval->add_option("--data", eval_data, "dataset file")->required();

  auto* c_grad =
      app.add_subcommand("gradcheck", "adjoint vs finite-difference check");
  c_grad->add_option("--seed", o_grad.seed, "random seed");
  c_grad->add_option("--dt", o_grad.dt, "simulation timestep (ms)");
  c_grad->add_option("--out", o_grad.out, "output directory");
  c_grad->add_option("--profile", grad_profile,
                     "(chain|rec)-(sum|sum_exp|xent|max|time)");
  c_grad->add_flag("--tau", grad_tau, "also sweep timescale coordinates");
  c_grad->add_option("--tol", grad_tol, "relative tolerance");
  c_grad->add_option("--eps-w", grad_eps_w, "weight FD step");
  c_grad->add_option("--eps-tau", grad_eps_tau, "tau FD step (ms)");

  auto* c_enc = app.add_subcommand(
      "encode_mnist", "latency-encode raw IDX digit files to a dataset");
  c_enc->add_option("--images", enc_images, "IDX3 image file")->required();
  c_enc->add_option("--labels", enc_labels, "IDX1 label file")->required();
  c_enc->add_option("--out-file", enc_out, "output dataset file")->required();
  c_enc->add_option("--limit", enc_limit, "convert at most N digits");
  c_enc->add_option("--duration", enc_duration, "trial duration (ms)");

  auto* c_synth =
      app.add_subcommand("synth", "generate a synthetic dataset file");
  c_synth->add_option("--kind", sy_kind, "digits | patterns");
  c_synth->add_option("--n", sy_n, "number of trials");
  c_synth->add_option("--classes", sy_classes, "number of classes");
  c_synth->add_option("--duration", sy_duration, "trial duration (ms)");
  c_synth->add_option("--seed", sy_seed, "random seed");
  c_synth->add_option("--out-file", sy_out, "output dataset file")->required();
  c_synth->add_option("--n-in", sy_nin, "input channels (patterns)");
  c_synth->add_option("--active-start", sy_active0, "pattern window start");
  c_synth->add_option("--active-end", sy_active1, "pattern window end");

  auto* c_path = app.add_subcommand(
      "pathology", "hidden-layer switch-off analysis under per-step losses");
  add_common(c_path, o_path);
  c_path->add_option("--classes", pa_classes, "classes in the synthetic task");
  c_path->add_option("--hidden", pa_hidden, "hidden neurons");
  c_path->add_option("--epochs", pa_epochs, "training epochs");
  c_path->add_option("--target-class", pa_target, "class trained on");

  CLI11_PARSE(app, argc, argv);
  try {
    if (c_train->parsed()) return cmd_train(o_train);
    if (c_xval->parsed()) return cmd_xval(o_xval, xval_folds);
    if (c_eval->parsed()) return cmd_eval(o_eval, eval_ckpt, eval_data);
    if (c_grad->parsed())
      return cmd_gradcheck(o_grad, grad_profile, grad_tau, grad_tol,
                           grad_eps_w, grad_eps_tau);
    if (c_enc->parsed())
      return cmd_encode_mnist(enc_images, enc_labels, enc_out, enc_limit,
                              enc_duration);
    if (c_synth->parsed())
      return cmd_synth(sy_kind, sy_n, sy_classes, sy_duration, sy_seed, sy_out,
                       sy_nin, sy_active0, sy_active1);
    if (c_path->parsed())
      return cmd_pathology(o_path, pa_classes, pa_hidden, pa_epochs,
                           pa_target);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
