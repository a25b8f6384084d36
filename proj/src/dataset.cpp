#include "caps/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "caps/rng.hpp"

namespace caps::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

std::string task_name(Task t) {
  switch (t) {
    case Task::kBinary: return "binary";
    case Task::kMulticlass: return "multiclass";
    case Task::kRegression: return "regression";
  }
  return "unknown";
}

Task task_from_name(const std::string& name) {
  if (name == "binary") return Task::kBinary;
  if (name == "multiclass") return Task::kMulticlass;
  if (name == "regression") return Task::kRegression;
  throw ConfigError("unknown task '" + name + "' (expected binary|multiclass|regression)");
}

Matrix Dataset::restrict_columns(const FeatureSubset& subset) const {
  if (subset.empty()) throw ContractError("restrict_columns: empty subset");
  if (subset.max_id() >= feature_count()) {
    throw IndexError("restrict_columns: feature id " + std::to_string(subset.max_id()) +
                     " outside [0, " + std::to_string(feature_count()) + ")");
  }
  Matrix out(x.rows(), subset.size());
  for (int j = 0; j < subset.size(); ++j) {
    out.col(j) = x.col(subset.ids()[static_cast<std::size_t>(j)]);
  }
  return out;
}

Dataset load_csv(const std::string& path, const std::string& label_column,
                 std::optional<Task> task_override) {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open '" + path + "'");

  std::string line;
  // Header (skipping comment lines).
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) throw IoError("load_csv: '" + path + "' has no header row");
  for (std::string& h : header) h = trim(h);

  int label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      label_idx = static_cast<int>(i);
      break;
    }
  }
  if (label_idx < 0) {
    throw IoError("load_csv: label column '" + label_column + "' not found in header of '" + path + "'");
  }

  const int d = static_cast<int>(header.size()) - 1;
  if (d < 2) throw ContractError("load_csv: need at least 2 feature columns, got " + std::to_string(d));

  std::vector<std::string> feature_names;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (static_cast<int>(i) != label_idx) feature_names.push_back(header[i]);
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;
  int dropped = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      ++dropped;
      continue;
    }
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(d));
    bool ok = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (static_cast<int>(i) == label_idx) continue;
      const auto v = parse_double(cells[i]);
      if (!v) {
        ok = false;
        break;
      }
      row.push_back(*v);
    }
    const std::string label = trim(cells[static_cast<std::size_t>(label_idx)]);
    if (!ok || label.empty()) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(row));
    labels.push_back(label);
  }
  if (rows.size() < 10) {
    throw ContractError("load_csv: only " + std::to_string(rows.size()) +
                        " usable rows in '" + path + "' (need >= 10, dropped " +
                        std::to_string(dropped) + ")");
  }

  // Label handling: numbers-with-fractions mean regression unless overridden.
  bool all_numeric = true;
  bool any_fractional = false;
  std::vector<double> numeric_labels(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto v = parse_double(labels[i]);
    if (!v) {
      all_numeric = false;
      break;
    }
    numeric_labels[i] = *v;
    if (*v != std::floor(*v)) any_fractional = true;
  }

  Task task;
  if (task_override) {
    task = *task_override;
  } else if (all_numeric && any_fractional) {
    task = Task::kRegression;
  } else {
    std::unordered_map<std::string, int> seen;
    for (const auto& l : labels) seen.emplace(l, static_cast<int>(seen.size()));
    task = seen.size() == 2 ? Task::kBinary : Task::kMulticlass;
  }

  Dataset ds;
  ds.task = task;
  ds.dropped_rows = dropped;
  ds.feature_names = std::move(feature_names);
  ds.x.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d; ++j) ds.x(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }

  if (task == Task::kRegression) {
    if (!all_numeric) throw IoError("load_csv: regression labels must be numeric");
    ds.y = std::move(numeric_labels);
  } else {
    // Map labels to 0-based contiguous ids in first-appearance order.
    std::unordered_map<std::string, int> ids;
    ds.y.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto [it, inserted] = ids.emplace(labels[i], static_cast<int>(ids.size()));
      if (inserted) ds.class_names.push_back(labels[i]);
      ds.y[i] = static_cast<double>(it->second);
    }
    if (task == Task::kBinary && ds.class_names.size() != 2) {
      throw ContractError("load_csv: binary task needs exactly 2 classes, found " +
                          std::to_string(ds.class_names.size()));
    }
    if (ds.class_names.size() < 2) {
      throw ContractError("load_csv: classification needs at least 2 classes");
    }
  }
  return ds;
}

std::vector<Eigen::Index> FoldPlan::fold_indices(int fold) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<Eigen::Index> FoldPlan::complement_indices(int fold) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

FoldPlan kfold(Eigen::Index n, int k, std::uint64_t seed) {
  if (k < 2) throw ContractError("kfold: k must be >= 2, got " + std::to_string(k));
  if (n < k) throw ContractError("kfold: n=" + std::to_string(n) + " smaller than k=" + std::to_string(k));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  SeededRng rng(seed);
  rng.shuffle(order);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignment.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    plan.assignment[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % static_cast<std::size_t>(k));
  }
  return plan;
}

RowVector one_hot_rep(const FeatureSubset& subset, int d) {
  if (subset.max_id() >= d) {
    throw IndexError("one_hot_rep: feature id " + std::to_string(subset.max_id()) +
                     " outside [0, " + std::to_string(d) + ")");
  }
  RowVector rep = RowVector::Zero(d);
  for (int id : subset.ids()) rep(id) = 1.0;
  return rep;
}

FeatureSubset subset_from_one_hot(const RowVector& rep) {
  std::vector<int> ids;
  for (Eigen::Index i = 0; i < rep.size(); ++i) {
    if (rep(i) >= 0.5) ids.push_back(static_cast<int>(i));
  }
  return FeatureSubset(std::move(ids));
}

}  // namespace caps::data
