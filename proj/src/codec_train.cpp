#include "caps/codec_train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "caps/adam.hpp"
#include "caps/rng.hpp"

namespace caps::codec {

using diff::Tape;
using diff::Var;

namespace {

void validate_corpus(const std::vector<CodecSample>& corpus, const CodecConfig& config) {
  if (corpus.empty()) throw ContractError("train_codec: empty corpus");
  const std::size_t max_len = static_cast<std::size_t>(config.resolved_max_len());
  for (const CodecSample& s : corpus) {
    if (s.tokens.empty()) throw ContractError("train_codec: corpus sample with empty token list");
    if (s.tokens.size() > max_len) {
      throw ContractError("train_codec: sample with " + std::to_string(s.tokens.size()) +
                          " tokens exceeds max_len " + std::to_string(max_len));
    }
    if (s.target.slots.size() != max_len) {
      throw ContractError("train_codec: target has " + std::to_string(s.target.slots.size()) +
                          " slots, expected " + std::to_string(max_len));
    }
  }
}

// Vars bound in walker order, so gradients can be read back positionally.
std::vector<Var> bind_flat(Tape& tape, const CodecParams& params, CodecVars& vars) {
  vars = bind_codec(tape, params, true);
  std::vector<Var> flat{
      vars.token_table,
      vars.isab1.inducing};
  auto push_mab = [&flat](const MabVars& m) {
    flat.insert(flat.end(), {m.wq, m.wk, m.wv, m.wo, m.ln1_gain, m.ln1_bias, m.ln2_gain,
                             m.ln2_bias, m.ff_w1, m.ff_b1, m.ff_w2, m.ff_b2});
  };
  push_mab(vars.isab1.lower);
  push_mab(vars.isab1.upper);
  flat.push_back(vars.isab2.inducing);
  push_mab(vars.isab2.lower);
  push_mab(vars.isab2.upper);
  flat.push_back(vars.seeds);
  flat.insert(flat.end(), {vars.pma_ff.w1, vars.pma_ff.b1, vars.pma_ff.w2, vars.pma_ff.b2});
  push_mab(vars.pma_mab);
  push_mab(vars.self_mab);
  flat.push_back(vars.head_w);
  flat.push_back(vars.head_b);
  return flat;
}

}  // namespace

TrainResult train_codec(const std::vector<CodecSample>& corpus, const CodecConfig& config,
                        std::uint64_t seed, const TrainOptions& options) {
  config.validate();
  validate_corpus(corpus, config);

  TrainResult result;
  result.params = init_codec(config, derive_seed(seed, "codec-init"));
  SeededRng shuffle_rng(derive_seed(seed, "codec-shuffle"));

  std::vector<Matrix*> params = param_list(result.params);
  diff::AdamState adam;
  adam.init(params);

  const int threads = options.threads > 0 ? options.threads : default_thread_count();
  const std::size_t n = corpus.size();
  const std::size_t batch_size = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<Tape> tapes(static_cast<std::size_t>(threads));
  bool first_batch = true;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(n, start + batch_size);
      const std::size_t count = end - start;

      // Each chunk runs forward+backward for its samples on its own tape;
      // gradients are merged afterwards in chunk order.
      std::vector<std::vector<Matrix>> chunk_grads(static_cast<std::size_t>(threads));
      std::vector<double> chunk_loss(static_cast<std::size_t>(threads), 0.0);
      parallel_chunks(count, threads, [&](std::size_t chunk, std::size_t begin, std::size_t stop) {
        Tape& tape = tapes[chunk];
        tape.reset();
        CodecVars vars;
        std::vector<Var> flat = bind_flat(tape, result.params, vars);
        Var total{};
        for (std::size_t i = begin; i < stop; ++i) {
          const CodecSample& sample = corpus[order[start + i]];
          Var e = encode_forward(sample.tokens, vars, config);
          Var logits = decode_forward(e, vars);
          Var loss = diff::cross_entropy_logits(logits, sample.target.slots);
          total = total.valid() ? diff::add(total, loss) : loss;
        }
        chunk_loss[chunk] = diff::scalar_value(total);
        tape.backward(diff::scale(total, 1.0 / static_cast<double>(count)));
        auto& grads = chunk_grads[chunk];
        grads.reserve(flat.size());
        for (Var v : flat) {
          grads.push_back(tape.has_grad(v) ? tape.grad(v)
                                           : Matrix::Zero(tape.value(v).rows(), tape.value(v).cols()));
        }
      });

      // Deterministic reduction: chunk 0, 1, 2, ...
      std::vector<Matrix> grads;
      double batch_loss_sum = 0.0;
      for (std::size_t c = 0; c < chunk_grads.size(); ++c) {
        if (chunk_grads[c].empty()) continue;
        batch_loss_sum += chunk_loss[c];
        if (grads.empty()) {
          grads = std::move(chunk_grads[c]);
        } else {
          for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += chunk_grads[c][k];
        }
      }
      const double batch_loss = batch_loss_sum / static_cast<double>(count);
      if (first_batch) {
        result.initial_loss = batch_loss;
        first_batch = false;
      }
      epoch_loss += batch_loss;
      ++batches;

      std::vector<const Matrix*> grad_ptrs;
      grad_ptrs.reserve(grads.size());
      for (const Matrix& g : grads) grad_ptrs.push_back(&g);
      diff::adam_step(params, grad_ptrs, adam, config.lr);
    }

    const double mean_loss = epoch_loss / static_cast<double>(batches);
    result.loss_curve.push_back(mean_loss);
    result.epochs_run = epoch + 1;
    if (options.on_epoch && !options.on_epoch(epoch, mean_loss, result.params)) break;
  }

  // Soft monotonicity check over 20-epoch windows (logged, not asserted).
  int violations = 0;
  for (std::size_t i = 0; i + 20 < result.loss_curve.size(); ++i) {
    if (result.loss_curve[i + 20] > result.loss_curve[i]) ++violations;
  }
  if (violations > 0) {
    result.warnings.push_back("loss curve increased over " + std::to_string(violations) +
                              " of the 20-epoch windows");
  }
  return result;
}

double corpus_loss(const CodecParams& params, const std::vector<CodecSample>& samples) {
  if (samples.empty()) throw ContractError("corpus_loss: no samples");
  double total = 0.0;
  for (const CodecSample& s : samples) {
    SubsetEmbedding e = encode(s.tokens, params);
    total += reconstruction_loss(decode_logits(e.rows, params), s.target);
  }
  return total / static_cast<double>(samples.size());
}

double exact_reconstruction_rate(const CodecParams& params,
                                 const std::vector<CodecSample>& samples) {
  if (samples.empty()) throw ContractError("exact_reconstruction_rate: no samples");
  const int pad = params.config.pad_id();
  std::size_t hits = 0;
  for (const CodecSample& s : samples) {
    std::vector<int> expected;
    for (int id : s.target.slots) {
      if (id != pad) expected.push_back(id);
    }
    try {
      SubsetEmbedding e = encode(s.tokens, params);
      FeatureSubset decoded = logits_to_subset(decode_logits(e.rows, params), pad);
      if (decoded.ids() == expected) ++hits;
    } catch (const EmptyDecodeError&) {
      // counts as a miss
    }
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

}  // namespace caps::codec
