#include "evp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace evp {

namespace {

void append_double(std::string& out, double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, r.ptr);
}

[[noreturn]] void parse_fail(int line_no, const std::string& why) {
  throw std::runtime_error("dataset: line " + std::to_string(line_no) + ": " +
                           why);
}

// split on single spaces; empty tokens are a format error
std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> t;
  std::istringstream is(line);
  std::string w;
  while (is >> w) t.push_back(w);
  return t;
}

int parse_int(const std::string& s, int line_no) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    parse_fail(line_no, "bad integer '" + s + "'");
  return v;
}

double parse_time(const std::string& s, int line_no) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    parse_fail(line_no, "bad number '" + s + "'");
  return v;
}

}  // namespace

Dataset parse_dataset(const std::string& text) {
  Dataset ds;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto t = tokens(line);
    if (t.empty()) continue;
    if (t[0] == "trial") {
      if (t.size() != 4) parse_fail(line_no, "trial needs <id> <label> <T_ms>");
      Trial tr;
      tr.id = parse_int(t[1], line_no);
      tr.label = parse_int(t[2], line_no);
      tr.duration = parse_time(t[3], line_no);
      if (tr.duration <= 0) parse_fail(line_no, "trial duration must be > 0");
      ds.trials.push_back(std::move(tr));
    } else if (t[0] == "spike") {
      if (t.size() != 3) parse_fail(line_no, "spike needs <neuron> <time_ms>");
      if (ds.trials.empty()) parse_fail(line_no, "spike before any trial");
      SpikeEvent e;
      e.neuron = parse_int(t[1], line_no);
      e.time = parse_time(t[2], line_no);
      Trial& tr = ds.trials.back();
      if (e.time < 0 || e.time >= tr.duration)
        parse_fail(line_no, "spike time outside [0, duration)");
      if (e.neuron < 0) parse_fail(line_no, "negative channel");
      tr.events.push_back(e);
    } else if (t[0] == "speaker") {
      if (t.size() != 3) parse_fail(line_no, "speaker needs <id> <tag>");
      ds.speakers.emplace_back(parse_int(t[1], line_no), t[2]);
    } else {
      parse_fail(line_no, "unknown record '" + t[0] + "'");
    }
  }
  for (auto& tr : ds.trials)
    std::sort(tr.events.begin(), tr.events.end(), [](auto& a, auto& b) {
      return a.time != b.time ? a.time < b.time : a.neuron < b.neuron;
    });
  return ds;
}

std::string format_dataset(const Dataset& ds) {
  std::string out;
  for (const auto& tr : ds.trials) {
    out += "trial " + std::to_string(tr.id) + ' ' + std::to_string(tr.label) +
           ' ';
    append_double(out, tr.duration);
    out += '\n';
    for (const auto& e : tr.events) {
      out += "spike " + std::to_string(e.neuron) + ' ';
      append_double(out, e.time);
      out += '\n';
    }
  }
  for (const auto& [id, tag] : ds.speakers)
    out += "speaker " + std::to_string(id) + ' ' + tag + '\n';
  return out;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_dataset(ss.str());
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot write " + path);
  const std::string s = format_dataset(ds);
  f.write(s.data(), (std::streamsize)s.size());
  if (!f) throw std::runtime_error("dataset: write failed for " + path);
}

std::vector<std::string> list_speakers(const Dataset& ds) {
  std::vector<std::string> out;
  for (const auto& [id, tag] : ds.speakers) {
    bool seen = false;
    for (const auto& s : out) seen = seen || s == tag;
    if (!seen) out.push_back(tag);
  }
  return out;
}

std::pair<Dataset, Dataset> split_loso(const Dataset& ds,
                                       const std::string& speaker) {
  std::unordered_map<int, const std::string*> by_id;
  bool known = false;
  for (const auto& [id, tag] : ds.speakers) {
    by_id[id] = &tag;
    known = known || tag == speaker;
  }
  if (!known)
    throw std::runtime_error("dataset: unknown speaker '" + speaker + "'");
  Dataset train, val;
  for (const auto& tr : ds.trials) {
    const auto it = by_id.find(tr.id);
    const bool held = it != by_id.end() && *it->second == speaker;
    (held ? val : train).trials.push_back(tr);
  }
  for (const auto& sp : ds.speakers)
    (sp.second == speaker ? val : train).speakers.push_back(sp);
  return {std::move(train), std::move(val)};
}

}  // namespace evp
