#include <cstdio>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "evp/dataset.hpp"

using namespace evp;

namespace {

Dataset sample_ds() {
  Dataset ds;
  Trial a;
  a.id = 0;
  a.label = 3;
  a.duration = 100.0;
  a.events = {{0, 0.1 + 1.0 / 3.0}, {5, 7.25}, {2, 99.999999999}};
  Trial b;
  b.id = 1;
  b.label = 0;
  b.duration = 1400.0;
  b.events = {};  // empty trials are legal
  Trial c;
  c.id = 2;
  c.label = 1;
  c.duration = 50.0;
  c.events = {{699, 1e-9}};
  ds.trials = {a, b, c};
  ds.speakers = {{0, "spk01"}, {2, "spk02"}};
  return ds;
}

bool same(const Dataset& x, const Dataset& y) {
  if (x.trials.size() != y.trials.size()) return false;
  for (size_t k = 0; k < x.trials.size(); ++k) {
    const Trial &a = x.trials[k], &b = y.trials[k];
    if (a.id != b.id || a.label != b.label || a.duration != b.duration)
      return false;
    if (a.events.size() != b.events.size()) return false;
    for (size_t j = 0; j < a.events.size(); ++j)
      if (a.events[j].neuron != b.events[j].neuron ||
          a.events[j].time != b.events[j].time)
        return false;
  }
  return x.speakers == y.speakers;
}

}  // namespace

TEST_CASE("format -> parse is the identity, bit for bit") {
  const Dataset ds = sample_ds();
  const Dataset back = parse_dataset(format_dataset(ds));
  CHECK(same(ds, back));
  // and stays fixed under a second pass
  CHECK(format_dataset(back) == format_dataset(ds));
}

TEST_CASE("save -> load through a file is lossless") {
  const Dataset ds = sample_ds();
  const std::string path = "/tmp/evp_test_dataset.txt";
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);
  CHECK(same(ds, back));
  std::remove(path.c_str());
}

TEST_CASE("loading a missing file fails loudly") {
  CHECK_THROWS_AS(load_dataset("/tmp/evp_no_such_file.txt"),
                  std::runtime_error);
}

TEST_CASE("malformed lines fail naming the line number") {
  auto error_of = [](const std::string& text) -> std::string {
    try {
      parse_dataset(text);
      return "";
    } catch (const std::runtime_error& e) {
      return e.what();
    }
  };
  // a spike before any trial
  CHECK(error_of("spike 0 1.5\n").find("dataset: line 1:") == 0);
  // unknown keyword
  CHECK(error_of("trial 0 0 10\nbogus 1 2\n").find("dataset: line 2:") == 0);
  // wrong arity
  CHECK(error_of("trial 0 0\n").find("dataset: line 1:") == 0);
  // unparseable number
  CHECK(error_of("trial 0 0 10\nspike x 1.5\n").find("dataset: line 2:") == 0);
  // comments and blank lines are fine
  CHECK(error_of("# header\n\ntrial 0 0 10\nspike 0 1.5\n") == "");
}

TEST_CASE("speakers list in first-appearance order") {
  Dataset ds = sample_ds();
  ds.speakers = {{0, "zz"}, {1, "aa"}, {2, "zz"}};
  const auto spk = list_speakers(ds);
  REQUIRE(spk.size() == 2);
  CHECK(spk[0] == "zz");
  CHECK(spk[1] == "aa");
}

TEST_CASE("leave-one-speaker-out split") {
  Dataset ds = sample_ds();  // trial 0 -> spk01, trial 2 -> spk02, 1 untagged
  const auto [train, val] = split_loso(ds, "spk01");
  REQUIRE(val.trials.size() == 1);
  CHECK(val.trials[0].id == 0);
  REQUIRE(train.trials.size() == 2);  // untagged trials stay in training
  CHECK(train.trials[0].id == 1);
  CHECK(train.trials[1].id == 2);
  CHECK_THROWS_AS(split_loso(ds, "spk99"), std::runtime_error);
}

TEST_CASE("a full loso rotation covers every trial exactly once") {
  Dataset ds;
  for (int k = 0; k < 10; ++k) {
    Trial t;
    t.id = k;
    t.label = k % 2;
    t.duration = 10;
    ds.trials.push_back(t);
    ds.speakers.push_back({k, "s" + std::to_string(k % 5)});
  }
  size_t val_total = 0;
  for (const auto& s : list_speakers(ds)) {
    const auto [train, val] = split_loso(ds, s);
    CHECK(train.trials.size() + val.trials.size() == ds.trials.size());
    CHECK(val.trials.size() == 2);
    val_total += val.trials.size();
  }
  CHECK(val_total == ds.trials.size());
}
