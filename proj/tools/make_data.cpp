// Regenerates the bundled synthetic datasets under data/. Both are planted so
// that a small informative subset beats the full feature set under a random
// forest: the label depends on the first few columns only, the rest is noise.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "caps/rng.hpp"

using caps::SeededRng;

namespace {

void write_csv(const std::string& path, const std::vector<std::vector<double>>& x,
               const std::vector<int>& y, int feature_count) {
  std::ofstream f(path);
  for (int j = 0; j < feature_count; ++j) f << 'f' << j << ',';
  f << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int j = 0; j < feature_count; ++j) {
      std::snprintf(buf, sizeof(buf), "%.6g", x[i][static_cast<std::size_t>(j)]);
      f << buf << ',';
    }
    f << y[i] << '\n';
  }
  std::printf("wrote %s (%zu rows)\n", path.c_str(), x.size());
}

void make_binary(const std::string& path, int rows, int features, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  const double w[6] = {2.0, 1.6, -1.3, 1.0, -0.8, 0.6};
  for (int i = 0; i < rows; ++i) {
    std::vector<double> row(static_cast<std::size_t>(features));
    for (int j = 0; j < features; ++j) row[static_cast<std::size_t>(j)] = rng.uniform(-1.0, 1.0);
    double score = 0.0;
    for (int j = 0; j < 6; ++j) score += w[j] * row[static_cast<std::size_t>(j)];
    int label = score > 0.0 ? 1 : 0;
    if (rng.uniform() < 0.04) label = 1 - label;  // irreducible noise
    x.push_back(std::move(row));
    y.push_back(label);
  }
  write_csv(path, x, y, features);
}

void make_multiclass(const std::string& path, int rows, int features, std::uint64_t seed) {
  SeededRng rng(seed);
  // Three class prototypes over the first 8 columns.
  const double w[3][8] = {
      {1.8, 1.2, -0.6, 0.9, -1.1, 0.4, 0.7, -0.5},
      {-1.2, 0.8, 1.5, -0.9, 0.6, -1.3, 0.5, 0.8},
      {0.3, -1.6, -0.8, 1.4, 1.0, 0.9, -1.2, -0.4},
  };
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < rows; ++i) {
    std::vector<double> row(static_cast<std::size_t>(features));
    for (int j = 0; j < features; ++j) row[static_cast<std::size_t>(j)] = rng.uniform(-1.0, 1.0);
    int best = 0;
    double best_score = -1e300;
    for (int c = 0; c < 3; ++c) {
      double score = 0.0;
      for (int j = 0; j < 8; ++j) score += w[c][j] * row[static_cast<std::size_t>(j)];
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    if (rng.uniform() < 0.04) best = rng.uniform_int(0, 3);
    x.push_back(std::move(row));
    y.push_back(best);
  }
  write_csv(path, x, y, features);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "data";
  std::filesystem::create_directories(dir);
  make_binary(dir + "/smoke_binary_300x20.csv", 300, 20, 20260101);
  make_multiclass(dir + "/smoke_multiclass_1000x40.csv", 1000, 40, 20260202);
  return 0;
}
