#include "caps/records.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "caps/rng.hpp"

namespace caps::collect {

using nlohmann::json;

void save_records(const std::string& path, const std::vector<SelectionRecord>& records) {
  std::ofstream f(path);
  if (!f) throw IoError("save_records: cannot write '" + path + "'");
  f << kRecordsHeader << '\n';
  for (const SelectionRecord& r : records) {
    json line{{"subset", r.subset.ids()}, {"v", r.v}, {"episode", r.episode}, {"origin", r.origin}};
    f << line.dump() << '\n';
  }
  if (!f) throw IoError("save_records: write to '" + path + "' failed");
}

std::vector<SelectionRecord> load_records(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_records: cannot open '" + path + "'");
  std::vector<SelectionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    SelectionRecord r;
    try {
      const json j = json::parse(line);
      const auto ids = j.at("subset").get<std::vector<int>>();
      for (std::size_t i = 1; i < ids.size(); ++i) {
        if (ids[i] <= ids[i - 1]) {
          throw IoError("subset ids are not strictly ascending");
        }
      }
      r.subset = FeatureSubset(ids);
      r.v = j.at("v").get<double>();
      if (r.v < 0.0 || r.v > 1.0) throw IoError("v outside [0,1]");
      r.episode = j.at("episode").get<int>();
      r.origin = j.at("origin").get<std::string>();
      if (r.subset.empty()) throw IoError("empty subset");
    } catch (const json::exception& e) {
      throw IoError("load_records: line " + std::to_string(line_no) + " of '" + path +
                    "' is malformed: " + e.what());
    } catch (const IoError& e) {
      throw IoError("load_records: line " + std::to_string(line_no) + " of '" + path + "': " +
                    e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<FeatureSubset> top_k_seeds(const std::vector<SelectionRecord>& records, int k) {
  if (records.empty()) throw ContractError("top_k_seeds: no records");
  std::map<std::string, std::pair<FeatureSubset, double>> best;
  for (const SelectionRecord& r : records) {
    auto [it, inserted] = best.try_emplace(r.subset.key(), r.subset, r.v);
    if (!inserted && r.v > it->second.second) it->second.second = r.v;
  }
  std::vector<std::pair<FeatureSubset, double>> ranked;
  ranked.reserve(best.size());
  for (auto& [key, entry] : best) ranked.push_back(std::move(entry));
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return subset_tie_less(a.first, b.first);
  });
  std::vector<FeatureSubset> seeds;
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  seeds.reserve(take);
  for (std::size_t i = 0; i < take; ++i) seeds.push_back(std::move(ranked[i].first));
  return seeds;
}

AugmentResult augment_records(const std::vector<SelectionRecord>& records, int copies, int max_len,
                              int pad_id, std::uint64_t seed) {
  if (copies < 1) throw ContractError("augment_records: copies must be >= 1");
  AugmentResult result;
  SeededRng rng(seed);
  for (const SelectionRecord& r : records) {
    if (r.subset.size() > max_len) {
      ++result.dropped_oversize;
      continue;
    }
    const codec::TargetSequence target = codec::make_target(r.subset, max_len, pad_id);
    for (int c = 0; c < copies; ++c) {
      std::vector<int> tokens = r.subset.ids();
      rng.shuffle(tokens);
      result.corpus.push_back({std::move(tokens), target});
    }
  }
  return result;
}

}  // namespace caps::collect
