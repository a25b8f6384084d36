#include "caps/codec.hpp"

#include <algorithm>
#include <cmath>

#include "caps/rng.hpp"

namespace caps::codec {

using diff::Tape;
using diff::Var;

void CodecConfig::validate() const {
  if (feature_count < 2) {
    throw ConfigError("codec: feature_count must be >= 2, got " + std::to_string(feature_count));
  }
  if (d < 2 || heads < 1 || d % heads != 0) {
    throw ConfigError("codec: embedding width " + std::to_string(d) +
                      " must be positive and divisible by heads=" + std::to_string(heads));
  }
  if (inducing < 1) throw ConfigError("codec: inducing point count must be >= 1");
  if (resolved_max_len() < 1) throw ConfigError("codec: max_len must be >= 1");
  if (max_len > 0 && max_len > feature_count) {
    throw ConfigError("codec: max_len cannot exceed feature_count (subsets are duplicate-free)");
  }
  if (lr <= 0.0) throw ConfigError("codec: learning rate must be positive");
  if (batch_size < 1) throw ConfigError("codec: batch_size must be >= 1");
}

namespace {

void for_each_in_mab(const std::string& prefix, MabWeights& w,
                     const std::function<void(const std::string&, Matrix&)>& fn) {
  fn(prefix + ".wq", w.wq);
  fn(prefix + ".wk", w.wk);
  fn(prefix + ".wv", w.wv);
  fn(prefix + ".wo", w.wo);
  fn(prefix + ".ln1_gain", w.ln1_gain);
  fn(prefix + ".ln1_bias", w.ln1_bias);
  fn(prefix + ".ln2_gain", w.ln2_gain);
  fn(prefix + ".ln2_bias", w.ln2_bias);
  fn(prefix + ".ff_w1", w.ff_w1);
  fn(prefix + ".ff_b1", w.ff_b1);
  fn(prefix + ".ff_w2", w.ff_w2);
  fn(prefix + ".ff_b2", w.ff_b2);
}

MabWeights allocate_mab(int d, int hidden) {
  MabWeights w;
  w.wq = Matrix::Zero(d, d);
  w.wk = Matrix::Zero(d, d);
  w.wv = Matrix::Zero(d, d);
  w.wo = Matrix::Zero(d, d);
  w.ln1_gain = Matrix::Zero(1, d);
  w.ln1_bias = Matrix::Zero(1, d);
  w.ln2_gain = Matrix::Zero(1, d);
  w.ln2_bias = Matrix::Zero(1, d);
  w.ff_w1 = Matrix::Zero(d, hidden);
  w.ff_b1 = Matrix::Zero(1, hidden);
  w.ff_w2 = Matrix::Zero(hidden, d);
  w.ff_b2 = Matrix::Zero(1, d);
  return w;
}

bool is_bias_name(const std::string& name) {
  const auto ends_with = [&](const char* suffix) {
    const std::string s(suffix);
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends_with("_bias") || ends_with(".b1") || ends_with(".b2") || ends_with("_b1") ||
         ends_with("_b2") || ends_with("head_b");
}

bool is_gain_name(const std::string& name) {
  return name.find("_gain") != std::string::npos;
}

MabVars bind_mab(Tape& t, const MabWeights& w, bool grad) {
  MabVars v;
  v.wq = t.make_leaf(w.wq, grad);
  v.wk = t.make_leaf(w.wk, grad);
  v.wv = t.make_leaf(w.wv, grad);
  v.wo = t.make_leaf(w.wo, grad);
  v.ln1_gain = t.make_leaf(w.ln1_gain, grad);
  v.ln1_bias = t.make_leaf(w.ln1_bias, grad);
  v.ln2_gain = t.make_leaf(w.ln2_gain, grad);
  v.ln2_bias = t.make_leaf(w.ln2_bias, grad);
  v.ff_w1 = t.make_leaf(w.ff_w1, grad);
  v.ff_b1 = t.make_leaf(w.ff_b1, grad);
  v.ff_w2 = t.make_leaf(w.ff_w2, grad);
  v.ff_b2 = t.make_leaf(w.ff_b2, grad);
  return v;
}

}  // namespace

CodecParams allocate_codec(const CodecConfig& config) {
  config.validate();
  const int d = config.d;
  const int hidden = config.resolved_rff_hidden();
  CodecParams p;
  p.config = config;
  p.token_table = Matrix::Zero(config.vocab(), d);
  p.isab1.inducing = Matrix::Zero(config.inducing, d);
  p.isab1.lower = allocate_mab(d, hidden);
  p.isab1.upper = allocate_mab(d, hidden);
  p.isab2.inducing = Matrix::Zero(config.inducing, d);
  p.isab2.lower = allocate_mab(d, hidden);
  p.isab2.upper = allocate_mab(d, hidden);
  p.seeds = Matrix::Zero(config.resolved_max_len(), d);
  p.pma_ff.w1 = Matrix::Zero(d, hidden);
  p.pma_ff.b1 = Matrix::Zero(1, hidden);
  p.pma_ff.w2 = Matrix::Zero(hidden, d);
  p.pma_ff.b2 = Matrix::Zero(1, d);
  p.pma_mab = allocate_mab(d, hidden);
  p.self_mab = allocate_mab(d, hidden);
  p.head_w = Matrix::Zero(d, config.vocab());
  p.head_b = Matrix::Zero(1, config.vocab());
  return p;
}

void for_each_param(CodecParams& p,
                    const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("token_table", p.token_table);
  fn("isab1.inducing", p.isab1.inducing);
  for_each_in_mab("isab1.lower", p.isab1.lower, fn);
  for_each_in_mab("isab1.upper", p.isab1.upper, fn);
  fn("isab2.inducing", p.isab2.inducing);
  for_each_in_mab("isab2.lower", p.isab2.lower, fn);
  for_each_in_mab("isab2.upper", p.isab2.upper, fn);
  fn("seeds", p.seeds);
  fn("pma_ff.w1", p.pma_ff.w1);
  fn("pma_ff.b1", p.pma_ff.b1);
  fn("pma_ff.w2", p.pma_ff.w2);
  fn("pma_ff.b2", p.pma_ff.b2);
  for_each_in_mab("pma_mab", p.pma_mab, fn);
  for_each_in_mab("self_mab", p.self_mab, fn);
  fn("head_w", p.head_w);
  fn("head_b", p.head_b);
}

void for_each_param(const CodecParams& p,
                    const std::function<void(const std::string&, const Matrix&)>& fn) {
  for_each_param(const_cast<CodecParams&>(p),
                 [&fn](const std::string& name, Matrix& m) { fn(name, m); });
}

std::vector<Matrix*> param_list(CodecParams& p) {
  std::vector<Matrix*> out;
  for_each_param(p, [&out](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

CodecParams init_codec(const CodecConfig& config, std::uint64_t seed) {
  CodecParams p = allocate_codec(config);
  SeededRng rng(seed);
  for_each_param(p, [&rng](const std::string& name, Matrix& m) {
    if (is_gain_name(name)) {
      m.setOnes();
      return;
    }
    if (is_bias_name(name)) {
      m.setZero();
      return;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  });
  return p;
}

CodecVars bind_codec(Tape& tape, const CodecParams& params, bool requires_grad) {
  CodecVars v;
  v.heads = params.config.heads;
  v.token_table = tape.make_leaf(params.token_table, requires_grad);
  v.isab1.inducing = tape.make_leaf(params.isab1.inducing, requires_grad);
  v.isab1.lower = bind_mab(tape, params.isab1.lower, requires_grad);
  v.isab1.upper = bind_mab(tape, params.isab1.upper, requires_grad);
  v.isab2.inducing = tape.make_leaf(params.isab2.inducing, requires_grad);
  v.isab2.lower = bind_mab(tape, params.isab2.lower, requires_grad);
  v.isab2.upper = bind_mab(tape, params.isab2.upper, requires_grad);
  v.seeds = tape.make_leaf(params.seeds, requires_grad);
  v.pma_ff.w1 = tape.make_leaf(params.pma_ff.w1, requires_grad);
  v.pma_ff.b1 = tape.make_leaf(params.pma_ff.b1, requires_grad);
  v.pma_ff.w2 = tape.make_leaf(params.pma_ff.w2, requires_grad);
  v.pma_ff.b2 = tape.make_leaf(params.pma_ff.b2, requires_grad);
  v.pma_mab = bind_mab(tape, params.pma_mab, requires_grad);
  v.self_mab = bind_mab(tape, params.self_mab, requires_grad);
  v.head_w = tape.make_leaf(params.head_w, requires_grad);
  v.head_b = tape.make_leaf(params.head_b, requires_grad);
  return v;
}

diff::Var rff_forward(Var x, const FeedForwardVars& w) {
  return diff::affine(diff::relu(diff::affine(x, w.w1, w.b1)), w.w2, w.b2);
}

namespace {

// Multihead(Q, K, V): per-head scaled dot-product attention over fused
// projection column blocks, concatenated and projected by wo.
Var multihead(Var q, Var k, Var v, const MabVars& w, int heads) {
  Tape& t = *q.tape;
  const Eigen::Index d = t.value(w.wq).cols();
  const Eigen::Index dh = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Var qp = diff::matmul(q, w.wq);
  Var kp = diff::matmul(k, w.wk);
  Var vp = diff::matmul(v, w.wv);

  const Eigen::Index q_rows = t.value(qp).rows();
  const Eigen::Index k_rows = t.value(kp).rows();

  std::vector<Var> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = diff::slice_cols(qp, h * dh, dh);
    Var kh = diff::slice_cols(kp, h * dh, dh);
    Var vh = diff::slice_cols(vp, h * dh, dh);
    Var scores = diff::scale(diff::matmul_nt(qh, kh), att_scale);
    Var attn = diff::row_softmax(scores);
    head_outputs.push_back(diff::matmul(attn, vh));
    // One MAC per multiply inside Q*K^T and attn*V.
    t.attention_macs += 2ull * static_cast<std::uint64_t>(q_rows) *
                        static_cast<std::uint64_t>(k_rows) * static_cast<std::uint64_t>(dh);
  }
  return diff::matmul(diff::concat_cols(head_outputs), w.wo);
}

Var rff_mab(Var h, const MabVars& w) {
  return diff::affine(diff::relu(diff::affine(h, w.ff_w1, w.ff_b1)), w.ff_w2, w.ff_b2);
}

}  // namespace

Var mab_forward(Var q, Var k, Var v, const MabVars& w, int heads) {
  Var h = diff::layer_norm(diff::add(q, multihead(q, k, v, w, heads)), w.ln1_gain, w.ln1_bias);
  return diff::layer_norm(diff::add(h, rff_mab(h, w)), w.ln2_gain, w.ln2_bias);
}

Var isab_forward(Var x, const IsabVars& w, int heads) {
  Var h = mab_forward(w.inducing, x, x, w.lower, heads);
  return mab_forward(x, h, h, w.upper, heads);
}

Var encode_forward(std::span<const int> tokens, const CodecVars& vars, const CodecConfig& config) {
  if (tokens.empty()) throw ContractError("encode: empty subset");
  if (static_cast<int>(tokens.size()) > config.resolved_max_len()) {
    throw ContractError("encode: " + std::to_string(tokens.size()) + " tokens exceed max_len " +
                        std::to_string(config.resolved_max_len()));
  }
  for (int id : tokens) {
    if (id < 0 || id >= config.feature_count) {
      throw IndexError("encode: feature id " + std::to_string(id) + " outside [0, " +
                       std::to_string(config.feature_count) + ")");
    }
  }
  Var x = diff::lookup_rows(vars.token_table, tokens);
  return isab_forward(isab_forward(x, vars.isab1, vars.heads), vars.isab2, vars.heads);
}

Var decode_forward(Var embedding, const CodecVars& vars) {
  Var pooled_input = rff_forward(embedding, vars.pma_ff);
  Var z = mab_forward(vars.seeds, pooled_input, pooled_input, vars.pma_mab, vars.heads);
  Var z2 = mab_forward(z, z, z, vars.self_mab, vars.heads);
  return diff::affine(z2, vars.head_w, vars.head_b);
}

// ---------------------------------------------------------------------------
// Value-level wrappers
// ---------------------------------------------------------------------------

Matrix mab(const Matrix& q, const Matrix& k, const Matrix& v, const MabWeights& w, int heads,
           std::uint64_t* attention_macs) {
  Tape t;
  MabVars mv = bind_mab(t, w, false);
  Matrix out = t.value(mab_forward(t.constant(q), t.constant(k), t.constant(v), mv, heads));
  if (attention_macs) *attention_macs += t.attention_macs;
  return out;
}

Matrix isab(const Matrix& x, const IsabWeights& w, int heads, std::uint64_t* attention_macs) {
  Tape t;
  IsabVars iv;
  iv.inducing = t.constant(w.inducing);
  iv.lower = bind_mab(t, w.lower, false);
  iv.upper = bind_mab(t, w.upper, false);
  Matrix out = t.value(isab_forward(t.constant(x), iv, heads));
  if (attention_macs) *attention_macs += t.attention_macs;
  return out;
}

Matrix pma(const Matrix& e, const CodecParams& params, std::uint64_t* attention_macs) {
  Tape t;
  FeedForwardVars ff;
  ff.w1 = t.constant(params.pma_ff.w1);
  ff.b1 = t.constant(params.pma_ff.b1);
  ff.w2 = t.constant(params.pma_ff.w2);
  ff.b2 = t.constant(params.pma_ff.b2);
  MabVars mv = bind_mab(t, params.pma_mab, false);
  Var pooled_input = rff_forward(t.constant(e), ff);
  Var seeds = t.constant(params.seeds);
  Matrix out = t.value(mab_forward(seeds, pooled_input, pooled_input, mv, params.config.heads));
  if (attention_macs) *attention_macs += t.attention_macs;
  return out;
}

SubsetEmbedding encode(std::span<const int> tokens, const CodecParams& params,
                       std::uint64_t* attention_macs) {
  Tape t;
  CodecVars vars = bind_codec(t, params, false);
  SubsetEmbedding e;
  e.rows = t.value(encode_forward(tokens, vars, params.config));
  e.token_ids.assign(tokens.begin(), tokens.end());
  if (attention_macs) *attention_macs += t.attention_macs;
  return e;
}

Matrix decode_logits(const Matrix& embedding, const CodecParams& params,
                     std::uint64_t* attention_macs) {
  if (embedding.cols() != params.config.d) {
    throw DimensionError("decode_logits: embedding width " + shape_str(embedding) +
                         " does not match d=" + std::to_string(params.config.d));
  }
  if (embedding.rows() < 1) throw ContractError("decode_logits: empty embedding");
  Tape t;
  CodecVars vars = bind_codec(t, params, false);
  Matrix out = t.value(decode_forward(t.constant(embedding), vars));
  if (attention_macs) *attention_macs += t.attention_macs;
  return out;
}

FeatureSubset logits_to_subset(const Matrix& logits, int pad_id) {
  std::vector<int> picked;
  for (Eigen::Index slot = 0; slot < logits.rows(); ++slot) {
    int best = 0;
    for (Eigen::Index v = 1; v < logits.cols(); ++v) {
      if (logits(slot, v) > logits(slot, best)) best = static_cast<int>(v);
    }
    if (best == pad_id) continue;
    if (std::find(picked.begin(), picked.end(), best) == picked.end()) picked.push_back(best);
  }
  if (picked.empty()) throw EmptyDecodeError("decode: every slot decoded to PAD");
  return FeatureSubset(std::move(picked));
}

TargetSequence make_target(const FeatureSubset& subset, int max_len, int pad_id) {
  if (subset.empty()) throw ContractError("make_target: empty subset");
  if (subset.size() > max_len) {
    throw ContractError("make_target: subset of size " + std::to_string(subset.size()) +
                        " exceeds max_len " + std::to_string(max_len));
  }
  TargetSequence t;
  t.slots = subset.ids();  // already sorted ascending
  t.slots.resize(static_cast<std::size_t>(max_len), pad_id);
  return t;
}

double reconstruction_loss(const Matrix& logits, const TargetSequence& target) {
  if (static_cast<std::size_t>(logits.rows()) != target.slots.size()) {
    throw DimensionError("reconstruction_loss: " + std::to_string(logits.rows()) +
                         " logit rows vs " + std::to_string(target.slots.size()) + " slots");
  }
  Tape t;
  return diff::scalar_value(diff::cross_entropy_logits(t.constant(logits), target.slots));
}

}  // namespace caps::codec
