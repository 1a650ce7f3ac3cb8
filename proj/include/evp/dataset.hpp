#pragma once

#include <string>

#include "evp/types.hpp"

namespace evp {

// Newline-delimited text format, one record per line:
//   trial <id> <label> <T_ms>     starts a trial; its spikes follow
//   spike <neuron> <time_ms>      appended to the most recent trial
//   speaker <id> <tag>            manifest line (anywhere)
// Doubles are written with shortest round-trip precision, so
// save -> load is lossless.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path);

Dataset parse_dataset(const std::string& text);  // same grammar, from memory
std::string format_dataset(const Dataset& ds);

// Distinct speaker tags in first-appearance order.
std::vector<std::string> list_speakers(const Dataset& ds);

// Leave-one-speaker-out split: validation = trials of `speaker`, training =
// the rest. Trials without a speaker tag go to training. Unknown tag → error.
std::pair<Dataset, Dataset> split_loso(const Dataset& ds,
                                       const std::string& speaker);

}  // namespace evp
