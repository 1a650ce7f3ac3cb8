#include "evp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace evp {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw std::runtime_error("config: bad number for " + key + ": '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& key) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw std::runtime_error("config: bad integer for " + key + ": '" + s +
                             "'");
  return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::runtime_error("config: bad boolean for " + key + ": '" + s + "'");
}

LossKind parse_loss(const std::string& s, const std::string& key) {
  if (s == "sum") return LossKind::Sum;
  if (s == "sum_exp") return LossKind::SumExp;
  if (s == "x_entropy" || s == "xent") return LossKind::XEntIntegral;
  if (s == "max") return LossKind::MaxOverTime;
  if (s == "time") return LossKind::TimeToFirstSpike;
  throw std::runtime_error("config: unknown loss for " + key + ": '" + s +
                           "' (sum, sum_exp, x_entropy, max, time)");
}

const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::Sum: return "sum";
    case LossKind::SumExp: return "sum_exp";
    case LossKind::XEntIntegral: return "x_entropy";
    case LossKind::MaxOverTime: return "max";
    case LossKind::TimeToFirstSpike: return "time";
  }
  return "sum";
}

std::string num_str(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

// key table: section.key -> setter / getter, one place for parse and format
struct Key {
  std::string name;  // "section.key"
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::vector<Key> key_table() {
  std::vector<Key> t;
  auto add = [&](const char* name, auto set, auto get) {
    t.push_back(Key{name, set, get});
  };
  auto dbl = [&](const char* name, auto field) {
    add(
        name,
        [field, name](RunConfig& c, const std::string& v) {
          *field(c) = parse_double(v, name);
        },
        [field](const RunConfig& c) {
          return num_str(*field(const_cast<RunConfig&>(c)));
        });
  };
  auto itg = [&](const char* name, auto field) {
    add(
        name,
        [field, name](RunConfig& c, const std::string& v) {
          *field(c) = (int)parse_int(v, name);
        },
        [field](const RunConfig& c) {
          return std::to_string(*field(const_cast<RunConfig&>(c)));
        });
  };
  auto bol = [&](const char* name, auto field) {
    add(
        name,
        [field, name](RunConfig& c, const std::string& v) {
          *field(c) = parse_bool(v, name);
        },
        [field](const RunConfig& c) {
          return *field(const_cast<RunConfig&>(c)) ? "true" : "false";
        });
  };
  auto str = [&](const char* name, auto field) {
    add(
        name,
        [field](RunConfig& c, const std::string& v) { *field(c) = v; },
        [field](const RunConfig& c) {
          return *field(const_cast<RunConfig&>(c));
        });
  };

  itg("arch.n_in", [](RunConfig& c) { return &c.train.arch.n_in; });
  itg("arch.n_hidden", [](RunConfig& c) { return &c.train.arch.n_hidden; });
  itg("arch.n_out", [](RunConfig& c) { return &c.train.arch.n_out; });
  bol("arch.recurrent", [](RunConfig& c) { return &c.train.arch.recurrent; });

  dbl("init.mu_ih", [](RunConfig& c) { return &c.train.init.mu_ih; });
  dbl("init.sigma_ih", [](RunConfig& c) { return &c.train.init.sigma_ih; });
  dbl("init.mu_hh", [](RunConfig& c) { return &c.train.init.mu_hh; });
  dbl("init.sigma_hh", [](RunConfig& c) { return &c.train.init.sigma_hh; });
  dbl("init.mu_ho", [](RunConfig& c) { return &c.train.init.mu_ho; });
  dbl("init.sigma_ho", [](RunConfig& c) { return &c.train.init.sigma_ho; });
  dbl("init.tau_mem_bar",
      [](RunConfig& c) { return &c.train.init.tau_mem_bar; });
  dbl("init.tau_syn_bar",
      [](RunConfig& c) { return &c.train.init.tau_syn_bar; });
  bol("init.heterogeneous_tau",
      [](RunConfig& c) { return &c.train.init.heterogeneous_tau; });

  add(
      "loss.kind",
      [](RunConfig& c, const std::string& v) {
        c.train.loss.kind = parse_loss(v, "loss.kind");
      },
      [](const RunConfig& c) {
        return std::string(loss_name(c.train.loss.kind));
      });
  dbl("loss.tau0", [](RunConfig& c) { return &c.train.loss.tau0; });
  dbl("loss.tau1", [](RunConfig& c) { return &c.train.loss.tau1; });
  dbl("loss.alpha", [](RunConfig& c) { return &c.train.loss.alpha; });
  bol("loss.phantom_spikes",
      [](RunConfig& c) { return &c.train.loss.phantom_spikes; });

  bol("augment.jitter",
      [](RunConfig& c) { return &c.train.augment.jitter_enabled; });
  dbl("augment.sigma_jitter",
      [](RunConfig& c) { return &c.train.augment.sigma_u; });
  bol("augment.dilate",
      [](RunConfig& c) { return &c.train.augment.dilate_enabled; });
  dbl("augment.k_scale_min",
      [](RunConfig& c) { return &c.train.augment.k_scale_min; });
  dbl("augment.k_scale_max",
      [](RunConfig& c) { return &c.train.augment.k_scale_max; });
  bol("augment.shift",
      [](RunConfig& c) { return &c.train.augment.shift_enabled; });
  dbl("augment.f_shift", [](RunConfig& c) { return &c.train.augment.f_shift; });
  bol("augment.blend",
      [](RunConfig& c) { return &c.train.augment.blend_enabled; });
  dbl("augment.p_blend", [](RunConfig& c) { return &c.train.augment.p_blend; });
  itg("augment.n_blend_extra",
      [](RunConfig& c) { return &c.train.augment.n_blend_extra; });
  bol("augment.delay",
      [](RunConfig& c) { return &c.train.augment.delay_enabled; });
  itg("augment.n_delay", [](RunConfig& c) { return &c.train.augment.n_delay; });
  dbl("augment.t_delay", [](RunConfig& c) { return &c.train.augment.t_delay; });

  dbl("adam.beta1", [](RunConfig& c) { return &c.train.adam.beta1; });
  dbl("adam.beta2", [](RunConfig& c) { return &c.train.adam.beta2; });
  dbl("adam.eps", [](RunConfig& c) { return &c.train.adam.eps; });

  bol("ease_in.enabled",
      [](RunConfig& c) { return &c.train.ease_in.enabled; });
  dbl("ease_in.start_frac",
      [](RunConfig& c) { return &c.train.ease_in.start_frac; });
  dbl("ease_in.factor", [](RunConfig& c) { return &c.train.ease_in.factor; });

  bol("schedule.enabled",
      [](RunConfig& c) { return &c.train.schedule.enabled; });
  dbl("schedule.fast_keep",
      [](RunConfig& c) { return &c.train.schedule.fast_keep; });
  dbl("schedule.slow_keep",
      [](RunConfig& c) { return &c.train.schedule.slow_keep; });
  itg("schedule.min_epochs",
      [](RunConfig& c) { return &c.train.schedule.min_epochs; });

  dbl("reg.k_reg", [](RunConfig& c) { return &c.train.reg.k_reg; });
  dbl("reg.nu_hidden", [](RunConfig& c) { return &c.train.reg.nu_hidden; });

  dbl("dropout.p_in", [](RunConfig& c) { return &c.train.dropout.p_in; });
  dbl("dropout.p_hidden", [](RunConfig& c) { return &c.train.dropout.p_hid; });

  dbl("train.eta", [](RunConfig& c) { return &c.train.eta; });
  itg("train.n_batch", [](RunConfig& c) { return &c.train.n_batch; });
  itg("train.epochs", [](RunConfig& c) { return &c.train.epochs; });
  bol("train.learn_tau", [](RunConfig& c) { return &c.train.learn_tau; });
  dbl("train.dt", [](RunConfig& c) { return &c.train.dt; });
  add(
      "train.seed",
      [](RunConfig& c, const std::string& v) {
        c.train.seed = (std::uint64_t)parse_int(v, "train.seed");
      },
      [](const RunConfig& c) { return std::to_string(c.train.seed); });
  itg("train.threads", [](RunConfig& c) { return &c.train.threads; });
  bol("train.boost", [](RunConfig& c) { return &c.train.boost_enabled; });
  dbl("train.boost_dg", [](RunConfig& c) { return &c.train.boost_dg; });
  dbl("train.tau_mem_floor",
      [](RunConfig& c) { return &c.train.tau_mem_floor; });
  dbl("train.tau_syn_floor",
      [](RunConfig& c) { return &c.train.tau_syn_floor; });
  bol("train.early_stop", [](RunConfig& c) { return &c.train.early_stop; });
  dbl("train.theta", [](RunConfig& c) { return &c.train.theta; });
  itg("train.spike_cap", [](RunConfig& c) { return &c.train.spike_cap; });
  str("train.out_dir", [](RunConfig& c) { return &c.train.out_dir; });

  str("data.train", [](RunConfig& c) { return &c.train_path; });
  str("data.val", [](RunConfig& c) { return &c.val_path; });
  str("data.test", [](RunConfig& c) { return &c.test_path; });
  dbl("data.crop_t", [](RunConfig& c) { return &c.crop_t; });

  return t;
}

void shd_base_common(RunConfig& c) {
  c.train = TrainConfig{};
  c.train.arch = {700, 256, 20, false};
  c.train.init.mu_ih = 0.03;
  c.train.init.sigma_ih = 0.01;
  c.train.init.mu_hh = 0;
  c.train.init.sigma_hh = 0.02;
  c.train.init.tau_syn_bar = 5;
  c.train.loss.tau0 = 1;
  c.train.loss.tau1 = 100;
  c.train.loss.alpha = 5e-5;
  c.train.reg.nu_hidden = 14;
  c.train.epochs = 300;
  c.train.n_batch = 32;
  c.train.dt = 1;
  c.train.boost_enabled = false;
}

void shd_base_loss(RunConfig& c, LossKind k, bool recur) {
  shd_base_common(c);
  c.train.arch.recurrent = recur;
  c.train.loss.kind = k;
  switch (k) {
    case LossKind::Sum:
      c.train.init.tau_mem_bar = 20;
      c.train.init.tau_syn_bar = 10;
      c.train.reg.k_reg = 1e-12;
      c.train.init.mu_ho = 0;
      c.train.init.sigma_ho = 0.03;
      c.train.eta = 0.002;
      break;
    case LossKind::SumExp:
      c.train.init.tau_mem_bar = 40;
      c.train.init.tau_syn_bar = 5;
      c.train.reg.k_reg = recur ? 1e-9 : 1e-10;
      c.train.init.mu_ho = 0;
      c.train.init.sigma_ho = 0.03;
      c.train.eta = 0.001;
      break;
    case LossKind::TimeToFirstSpike:
      c.train.init.tau_mem_bar = 40;
      c.train.init.tau_syn_bar = 5;
      c.train.reg.k_reg = 1e-7;
      c.train.init.mu_ho = 1.2;
      c.train.init.sigma_ho = 0.6;
      c.train.eta = 0.001;
      break;
    case LossKind::MaxOverTime:
      c.train.init.tau_mem_bar = 40;
      c.train.init.tau_syn_bar = 10;
      c.train.reg.k_reg = 5e-9;
      c.train.init.mu_ho = 0;
      c.train.init.sigma_ho = 0.03;
      c.train.eta = 0.002;
      break;
    default:
      throw std::runtime_error("config: no base profile for this loss");
  }
}

void final_common(RunConfig& c) {
  // the tuned recurrent sum_exp recipe with cropping, delay line, shift,
  // ease-in, schedule, and the silent-neuron safeguard
  shd_base_loss(c, LossKind::SumExp, true);
  c.crop_t = 1000;
  c.train.init.tau_mem_bar = 20;
  c.train.init.heterogeneous_tau = true;  // per-neuron draws, trained
  c.train.learn_tau = true;
  c.train.reg.k_reg = 5e-10;
  c.train.augment.shift_enabled = true;
  c.train.augment.f_shift = 40;
  c.train.augment.delay_enabled = true;
  c.train.augment.n_delay = 10;
  c.train.augment.t_delay = 30;
  c.train.arch.n_in = 700 * 10;  // delay-line copies are distinct channels
  c.train.ease_in.enabled = true;
  c.train.schedule.enabled = true;
  c.train.boost_enabled = true;
}

}  // namespace

std::vector<std::string> known_profiles() {
  return {"mnist-base",        "shd-base-sum",
          "shd-base-sum-recur", "shd-base-sum_exp",
          "shd-base-sum_exp-recur", "shd-base-time",
          "shd-base-time-recur", "shd-base-max",
          "shd-base-max-recur", "shd-final",
          "ssc-final"};
}

void apply_profile(RunConfig& cfg, const std::string& name) {
  const std::string keep_out = cfg.train.out_dir;
  if (name == "mnist-base") {
    cfg.train = TrainConfig{};
    cfg.train.arch = {784, 128, 10, false};
    cfg.train.init.mu_ih = 0.045;
    cfg.train.init.sigma_ih = 0.045;
    cfg.train.init.mu_ho = 0.2;
    cfg.train.init.sigma_ho = 0.37;
    cfg.train.init.tau_mem_bar = 20;
    cfg.train.init.tau_syn_bar = 5;
    cfg.train.loss.kind = LossKind::Sum;
    cfg.train.loss.tau1 = 3;       // first-spike loss variant constants
    cfg.train.loss.alpha = 3.6e-4;
    cfg.train.reg.nu_hidden = 4;
    cfg.train.dropout.p_in = 0.2;
    cfg.train.eta = 1e-2;
    cfg.train.epochs = 50;
    cfg.train.boost_enabled = false;
  } else if (name == "shd-base-sum") {
    shd_base_loss(cfg, LossKind::Sum, false);
  } else if (name == "shd-base-sum-recur") {
    shd_base_loss(cfg, LossKind::Sum, true);
  } else if (name == "shd-base-sum_exp") {
    shd_base_loss(cfg, LossKind::SumExp, false);
  } else if (name == "shd-base-sum_exp-recur") {
    shd_base_loss(cfg, LossKind::SumExp, true);
  } else if (name == "shd-base-time") {
    shd_base_loss(cfg, LossKind::TimeToFirstSpike, false);
  } else if (name == "shd-base-time-recur") {
    shd_base_loss(cfg, LossKind::TimeToFirstSpike, true);
  } else if (name == "shd-base-max") {
    shd_base_loss(cfg, LossKind::MaxOverTime, false);
  } else if (name == "shd-base-max-recur") {
    shd_base_loss(cfg, LossKind::MaxOverTime, true);
  } else if (name == "shd-final") {
    final_common(cfg);
    cfg.train.augment.blend_enabled = true;
    cfg.train.augment.p_blend = 0.5;
    cfg.train.epochs = 50;  // 100 without blend
  } else if (name == "ssc-final") {
    final_common(cfg);
    cfg.train.arch.n_out = 35;
    cfg.train.epochs = 100;  // blend is counterproductive on SSC
  } else {
    std::string msg = "config: unknown profile '" + name + "' (known:";
    for (const auto& p : known_profiles()) msg += ' ' + p;
    throw std::runtime_error(msg + ")");
  }
  cfg.train.out_dir = keep_out;
  cfg.profile = name;
}

void parse_config(const std::string& text, RunConfig& cfg) {
  const auto table = key_table();
  std::map<std::string, const Key*> lut;
  for (const auto& k : table) lut[k.name] = &k;

  std::istringstream is(text);
  std::string line, section;
  std::vector<std::string> unknown;
  int ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    // recover the provenance stamp format_config writes, so that a resolved
    // file round-trips including the profile it was seeded from
    if (line.rfind("# profile: ", 0) == 0) {
      cfg.profile = trim(line.substr(11));
      continue;
    }
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config: line " + std::to_string(ln) +
                                 ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(ln) +
                               ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + '.' + key;
    const auto it = lut.find(full);
    if (it == lut.end()) {
      unknown.push_back(full);
      continue;
    }
    it->second->set(cfg, val);
  }
  if (!unknown.empty()) {
    std::string msg = "config: unknown keys:";
    for (const auto& k : unknown) msg += ' ' + k;
    throw std::runtime_error(msg);
  }
}

void load_config(const std::string& path, RunConfig& cfg) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  parse_config(ss.str(), cfg);
}

std::string format_config(const RunConfig& cfg) {
  std::string out = std::string("# ") + kVersion + "\n";
  if (!cfg.profile.empty()) out += "# profile: " + cfg.profile + "\n";
  std::string section;
  for (const auto& k : key_table()) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

void validate_config(const RunConfig& cfg) {
  std::vector<std::string> missing;
  if (cfg.train.arch.n_in <= 0) missing.push_back("arch.n_in");
  if (cfg.train.arch.n_hidden <= 0) missing.push_back("arch.n_hidden");
  if (cfg.train.arch.n_out <= 0) missing.push_back("arch.n_out");
  if (cfg.train.dt <= 0) missing.push_back("train.dt");
  if (!missing.empty()) {
    std::string msg = "config: missing required keys:";
    for (const auto& k : missing) msg += ' ' + k;
    msg += cfg.profile.empty()
               ? " (no profile selected; see --profile)"
               : " (profile '" + cfg.profile + "' does not supply them)";
    throw std::runtime_error(msg);
  }
}

}  // namespace evp
