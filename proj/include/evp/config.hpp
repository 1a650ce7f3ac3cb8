#pragma once

#include <string>
#include <vector>

#include "evp/trainer.hpp"

namespace evp {

inline constexpr const char* kVersion = "evprop 0.1.0";

// Everything a run needs: trainer configuration plus dataset paths and
// input-side preprocessing. Fully serializable; the resolved form is written
// next to every run's outputs.
struct RunConfig {
  TrainConfig train;
  std::string train_path, val_path, test_path;
  double crop_t = 0;  // > 0: drop events at/after this time, set duration
  std::string profile;
};

std::vector<std::string> known_profiles();

// Overwrites cfg with the named profile's defaults. Unknown name: error
// listing the known profiles.
void apply_profile(RunConfig& cfg, const std::string& name);

// Line-oriented `[section]` / `key = value` overlay onto cfg. Unknown keys or
// sections are a hard error listing all of them; malformed lines name the
// line number.
void parse_config(const std::string& text, RunConfig& cfg);
void load_config(const std::string& path, RunConfig& cfg);

// The exact resolved configuration, parseable by parse_config; starts with a
// version-stamp comment. parse(format(cfg)) == cfg.
std::string format_config(const RunConfig& cfg);

// Missing-field validation with an error that names the profile flag when no
// profile was selected.
void validate_config(const RunConfig& cfg);

}  // namespace evp
