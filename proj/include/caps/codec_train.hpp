#pragma once

#include <functional>
#include <string>
#include <vector>

#include "caps/codec.hpp"

namespace caps::codec {

// One corpus item: a token presentation order plus its canonical target.
struct CodecSample {
  std::vector<int> tokens;
  TargetSequence target;
};

struct TrainOptions {
  // Worker threads for the per-batch forward/backward; 0 picks a default.
  // Gradients reduce in a fixed chunk order, so results are reproducible for
  // a given thread count.
  int threads = 0;
  // Called after each epoch with the mean loss and the current parameters;
  // returning false stops early.
  std::function<bool(int epoch, double mean_loss, const CodecParams& params)> on_epoch;
};

struct TrainResult {
  CodecParams params;
  std::vector<double> loss_curve;  // per-epoch mean batch loss
  double initial_loss = 0.0;       // first batch, before any update
  int epochs_run = 0;
  std::vector<std::string> warnings;
};

// Minibatch Adam over shuffled samples for config.epochs (or until the
// callback stops it). Deterministic in (corpus, config, seed, threads).
TrainResult train_codec(const std::vector<CodecSample>& corpus, const CodecConfig& config,
                        std::uint64_t seed, const TrainOptions& options = {});

// Mean reconstruction loss of `params` over a sample list (no training).
double corpus_loss(const CodecParams& params, const std::vector<CodecSample>& samples);

// Fraction of samples whose greedy decode reproduces the target subset
// exactly.
double exact_reconstruction_rate(const CodecParams& params,
                                 const std::vector<CodecSample>& samples);

}  // namespace caps::codec
