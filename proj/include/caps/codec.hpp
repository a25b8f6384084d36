#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "caps/common.hpp"
#include "caps/ops.hpp"
#include "caps/tape.hpp"

namespace caps::codec {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct CodecConfig {
  int feature_count = 0;  // D; token vocabulary is D feature ids plus PAD
  int d = 128;            // embedding width
  int heads = 4;
  int inducing = 32;      // M inducing points per ISAB
  int max_len = 0;        // L_max; 0 resolves to D
  int rff_hidden = 0;     // 0 resolves to 2*d
  double lr = 1e-3;
  int batch_size = 64;
  int epochs = 100;

  int pad_id() const { return feature_count; }
  int vocab() const { return feature_count + 1; }
  int resolved_max_len() const { return max_len > 0 ? max_len : feature_count; }
  int resolved_rff_hidden() const { return rff_hidden > 0 ? rff_hidden : 2 * d; }
  int head_dim() const { return d / heads; }

  void validate() const;
};

// ---------------------------------------------------------------------------
// Parameters. Per-head query/key/value projections are stored fused as d x d
// matrices; head h owns the column block [h*dh, (h+1)*dh).
// ---------------------------------------------------------------------------

struct MabWeights {
  Matrix wq, wk, wv, wo;          // d x d
  Matrix ln1_gain, ln1_bias;      // 1 x d
  Matrix ln2_gain, ln2_bias;      // 1 x d
  Matrix ff_w1, ff_b1, ff_w2, ff_b2;
};

struct FeedForwardWeights {
  Matrix w1, b1, w2, b2;
};

struct IsabWeights {
  Matrix inducing;  // M x d, learned jointly with the rest
  MabWeights lower;  // MAB(I, X, X)
  MabWeights upper;  // MAB(X, H, H)
};

struct CodecParams {
  CodecConfig config;
  Matrix token_table;  // V x d
  IsabWeights isab1, isab2;
  Matrix seeds;  // L_max x d PMA seed vectors, one per output slot
  FeedForwardWeights pma_ff;  // rFF applied to E before PMA attention
  MabWeights pma_mab;
  MabWeights self_mab;  // decoder self-attention over the K pooled rows
  Matrix head_w, head_b;  // d x V, 1 x V output head shared across slots
};

// Zero-filled parameters with shapes derived from the config.
CodecParams allocate_codec(const CodecConfig& config);

// Seeded initialization: uniform +-sqrt(6/(rows+cols)) for weight-like
// matrices, zeros for biases, ones for layer-norm gains.
CodecParams init_codec(const CodecConfig& config, std::uint64_t seed);

// Walks parameters in a stable name order (serialization, optimizer and
// binding all share it).
void for_each_param(CodecParams& p,
                    const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_param(const CodecParams& p,
                    const std::function<void(const std::string&, const Matrix&)>& fn);
std::vector<Matrix*> param_list(CodecParams& p);

// ---------------------------------------------------------------------------
// Tape-bound mirrors for training
// ---------------------------------------------------------------------------

struct MabVars {
  diff::Var wq, wk, wv, wo, ln1_gain, ln1_bias, ln2_gain, ln2_bias, ff_w1, ff_b1, ff_w2, ff_b2;
};
struct FeedForwardVars {
  diff::Var w1, b1, w2, b2;
};
struct IsabVars {
  diff::Var inducing;
  MabVars lower, upper;
};
struct CodecVars {
  int heads = 0;
  diff::Var token_table;
  IsabVars isab1, isab2;
  diff::Var seeds;
  FeedForwardVars pma_ff;
  MabVars pma_mab;
  MabVars self_mab;
  diff::Var head_w, head_b;
};

CodecVars bind_codec(diff::Tape& tape, const CodecParams& params, bool requires_grad);

// Forward graph pieces (attention MACs are tallied on the tape).
diff::Var rff_forward(diff::Var x, const FeedForwardVars& w);
diff::Var mab_forward(diff::Var q, diff::Var k, diff::Var v, const MabVars& w, int heads);
diff::Var isab_forward(diff::Var x, const IsabVars& w, int heads);
diff::Var encode_forward(std::span<const int> tokens, const CodecVars& vars,
                         const CodecConfig& config);
diff::Var decode_forward(diff::Var embedding, const CodecVars& vars);

// ---------------------------------------------------------------------------
// Value-level API
// ---------------------------------------------------------------------------

struct SubsetEmbedding {
  Matrix rows;                 // N x d
  std::vector<int> token_ids;  // presentation order
};

// Reconstruction target: subset ids sorted ascending, then PAD padding.
struct TargetSequence {
  std::vector<int> slots;  // length L_max
};

// MAB(Q, K, V) = LayerNorm(H + rFF(H)), H = LayerNorm(Q + Multihead(Q,K,V)),
// scaled dot-product attention at 1/sqrt(d/heads); no positional encoding,
// no dropout.
Matrix mab(const Matrix& q, const Matrix& k, const Matrix& v, const MabWeights& w, int heads,
           std::uint64_t* attention_macs = nullptr);

// ISAB_M(X) = MAB(X, H, H) with H = MAB(I, X, X); attention cost is O(N*M).
Matrix isab(const Matrix& x, const IsabWeights& w, int heads,
            std::uint64_t* attention_macs = nullptr);

// PMA_K(E) = MAB(S, rFF(E), rFF(E)); invariant to the row order of E.
Matrix pma(const Matrix& e, const CodecParams& params, std::uint64_t* attention_macs = nullptr);

// Encoder: E = ISAB(ISAB(lookup(token_table, tokens))).
SubsetEmbedding encode(std::span<const int> tokens, const CodecParams& params,
                       std::uint64_t* attention_macs = nullptr);

// Decoder: logits = head(MAB(Z, Z, Z)) with Z = PMA_K(E); one row per slot.
Matrix decode_logits(const Matrix& embedding, const CodecParams& params,
                     std::uint64_t* attention_macs = nullptr);

// Per-slot argmax (ties toward the lowest token id), PAD dropped, first
// occurrence kept, ids sorted. All-PAD decodes raise EmptyDecodeError.
FeatureSubset logits_to_subset(const Matrix& logits, int pad_id);

TargetSequence make_target(const FeatureSubset& subset, int max_len, int pad_id);

// Mean cross-entropy over all L_max slots, PAD slots included at full weight.
double reconstruction_loss(const Matrix& logits, const TargetSequence& target);

}  // namespace caps::codec
