#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caps/codec_train.hpp"
#include "caps/common.hpp"

namespace caps::collect {

// One explored feature-selection record: a subset and its measured score.
struct SelectionRecord {
  FeatureSubset subset;
  double v = 0.0;  // downstream score in [0, 1]
  int episode = 0;
  std::string origin = "explored";  // or "seeded-baseline"
};

inline constexpr const char* kRecordsHeader = "# caps-records v1";

// JSONL, one record per line:
//   {"subset":[ints ascending],"v":real,"episode":int,"origin":string}
// A '#' header comment carries the format version. Loading validates
// ascending ids and v in [0,1] and reports the line number on failure.
void save_records(const std::string& path, const std::vector<SelectionRecord>& records);
std::vector<SelectionRecord> load_records(const std::string& path);

// Deduplicates by canonical subset keeping the max v, sorts by v descending
// (ties: smaller subset, then lexicographic ids) and returns the first
// min(k, distinct) subsets.
std::vector<FeatureSubset> top_k_seeds(const std::vector<SelectionRecord>& records, int k = 25);

// Permutation augmentation: each kept record yields `copies` uniformly random
// orderings of its ids (Fisher-Yates) paired with its canonical target.
// Records longer than max_len are dropped with a warning line returned.
struct AugmentResult {
  std::vector<codec::CodecSample> corpus;
  int dropped_oversize = 0;
};
AugmentResult augment_records(const std::vector<SelectionRecord>& records, int copies, int max_len,
                              int pad_id, std::uint64_t seed);

}  // namespace caps::collect
