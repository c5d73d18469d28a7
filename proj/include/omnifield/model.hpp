#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omnifield/common.hpp"
#include "omnifield/config.hpp"
#include "omnifield/context.hpp"
#include "omnifield/encodings.hpp"
#include "omnifield/tensor.hpp"

namespace omnifield {

/// Flat, name-indexed parameter storage. Construction order is the canonical
/// parameter order used by the optimizer and checkpoints. In count_only mode
/// shapes are recorded but nothing is allocated or initialized, which makes
/// parameter counting cheap for large presets.
template <class Scalar>
class ParamSet {
 public:
  explicit ParamSet(bool count_only = false) : count_only_(count_only) {}

  template <class Init>
  int add(const std::string& name, Index rows, Index cols, Init&& init) {
    names_.push_back(name);
    shapes_.emplace_back(rows, cols);
    if (!count_only_) {
      MatX<Scalar> m(rows, cols);
      init(m);
      values_.push_back(std::move(m));
    }
    return int(names_.size()) - 1;
  }

  int size() const { return int(names_.size()); }
  const std::string& name(int i) const { return names_[i]; }
  std::pair<Index, Index> shape(int i) const { return shapes_[i]; }
  const MatX<Scalar>& value(int i) const { return values_[i]; }
  MatX<Scalar>& value(int i) { return values_[i]; }
  bool count_only() const { return count_only_; }

  std::int64_t total_parameters() const {
    std::int64_t n = 0;
    for (const auto& [r, c] : shapes_) n += std::int64_t(r) * c;
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::pair<Index, Index>> shapes_;
  std::vector<MatX<Scalar>> values_;
  bool count_only_ = false;
};

/// Per-forward-pass association of a parameter set with a tape. Each
/// parameter binds to at most one leaf per pass, so reuse (shared encoders,
/// multi-instance batches) accumulates gradients correctly.
template <class Scalar>
class Binding {
 public:
  Binding(ag::Tape<Scalar>& tape, const ParamSet<Scalar>& params)
      : tape_(&tape), params_(&params), nodes_(params.size(), -1) {}

  /// Binds pre-created leaves (one per parameter, in order) instead of the
  /// stored values; lets gradient checks differentiate through the whole
  /// model with respect to externally owned inputs.
  Binding(ag::Tape<Scalar>& tape, const ParamSet<Scalar>& params,
          const std::vector<ag::Tensor<Scalar>>& leaves)
      : tape_(&tape), params_(&params), nodes_(params.size(), -1), injected_(leaves) {
    if (int(leaves.size()) != params.size())
      throw Error("value", "binding: leaf count does not match the parameter set");
  }

  ag::Tensor<Scalar> param(int idx) {
    if (!injected_.empty()) return injected_[idx];
    if (nodes_[idx] >= 0) {
      ag::Tensor<Scalar> t(params_->value(idx));
      t.tape = tape_;
      t.node = nodes_[idx];
      return t;
    }
    auto leaf = tape_->leaf(params_->value(idx));
    nodes_[idx] = leaf.node;
    return leaf;
  }

  ag::Tape<Scalar>& tape() { return *tape_; }

  /// Per-parameter gradients after backward; exact zeros off the loss path.
  std::vector<MatX<Scalar>> parameter_grads() const {
    std::vector<MatX<Scalar>> out(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i] >= 0) {
        out[i] = tape_->grad(nodes_[i]);
      } else {
        const auto [r, c] = params_->shape(int(i));
        out[i] = MatX<Scalar>::Zero(r, c);
      }
    }
    return out;
  }

 private:
  ag::Tape<Scalar>* tape_;
  const ParamSet<Scalar>* params_;
  std::vector<int> nodes_;
  std::vector<ag::Tensor<Scalar>> injected_;
};

/// Sum over supervised modalities of the mean squared error between
/// predictions and targets (both in normalized space). Unsupervised
/// modalities contribute exactly zero and receive no gradient.
template <class Scalar>
ag::Tensor<Scalar> masked_loss(const std::vector<ag::Tensor<Scalar>>& preds,
                               const std::vector<VecX<Scalar>>& targets,
                               const std::vector<char>& tau) {
  if (preds.size() != tau.size() || targets.size() != tau.size())
    throw Error("value", "masked_loss: predictions/targets/tau misaligned");
  ag::Tensor<Scalar> loss = ag::scalar_constant<Scalar>(0);
  for (std::size_t m = 0; m < tau.size(); ++m) {
    if (!tau[m]) continue;
    if (targets[m].size() == 0)
      throw Error("value", "masked_loss: tau set but targets missing for modality " +
                               std::to_string(m));
    if (preds[m].rows() != targets[m].size() || preds[m].cols() != 1)
      throw Error("shape", "masked_loss: prediction/target shape mismatch for modality " +
                               std::to_string(m));
    auto t = ag::constant<Scalar>(targets[m]);
    auto diff = ag::subtract(preds[m], t);
    loss = ag::add(loss, ag::mean_all(ag::square(diff)));
  }
  return loss;
}

/// The OmniField network: per-modality cross-attention set encoders feeding
/// stacked crosstalk stages whose global code is refined iteratively, a
/// self-attention trunk, a query cross-attention reader, and per-modality
/// MLP heads. Absent modalities are zero-gated at the source, masked out of
/// attention, and excluded from the loss.
template <class Scalar>
class OmniFieldModel {
 public:
  using Tensor = ag::Tensor<Scalar>;

  struct IcmrTrace {
    std::vector<MatX<Scalar>> stage_tokens;  // h^(k)
    std::vector<MatX<Scalar>> z_used;        // z^(k) consumed by stage k
  };

  OmniFieldModel(const ModelSettings& cfg, std::uint64_t seed, bool count_only = false)
      : cfg_(cfg),
        seed_(seed),
        params_(count_only),
        space_enc_(make_space_encoder(cfg, seed)),
        time_enc_(make_time_encoder(cfg, seed)) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "model-init"));
    build(rng);
  }

  const ModelSettings& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  ParamSet<Scalar>& params() { return params_; }
  const ParamSet<Scalar>& params() const { return params_; }
  std::int64_t parameter_count() const { return params_.total_parameters(); }
  const GffEncoder<Scalar>& space_encoder() const { return space_enc_; }
  const GffEncoder<Scalar>& time_encoder() const { return time_enc_; }
  int n_modalities() const { return int(cfg_.modalities.size()); }
  int token_count() const { return n_modalities() * cfg_.n_latents; }

  void set_encoders(GffEncoder<Scalar> space, GffEncoder<Scalar> time) {
    space_enc_ = std::move(space);
    time_enc_ = std::move(time);
  }

  Binding<Scalar> bind(ag::Tape<Scalar>& tape) const { return Binding<Scalar>(tape, params_); }

  /// Latent queries cross-attend to projected observation tokens. Absent
  /// modalities yield the zero block without touching their stored values.
  Tensor encode_modality(Binding<Scalar>& b, int stage, int m,
                         const ModalityObservations<Scalar>& obs, bool present) const {
    if (!present)
      return ag::constant<Scalar>(MatX<Scalar>::Zero(cfg_.n_latents, cfg_.latent_dim));
    if (obs.count() == 0)
      throw Error("value", "encode_modality: modality marked present but has no observations");
    if (obs.locations.cols() != cfg_.d_spatial)
      throw Error("shape", "encode_modality: coordinate dimension mismatch");

    const EncoderP& enc = encoder_at(stage, m);
    MatX<Scalar> raw(obs.count(), 1 + cfg_.d_spatial);
    raw.col(0) = obs.values;
    raw.rightCols(cfg_.d_spatial) = obs.locations;
    auto inputs = ag::constant<Scalar>(std::move(raw));
    auto h = ag::gelu(linear(b, enc.mlp1, inputs));
    auto value_tokens = linear(b, enc.mlp2, h);
    auto pos = ag::constant<Scalar>(space_enc_.encode(obs.locations));
    auto kv = ag::concat<Scalar>({value_tokens, pos}, 1);

    auto latents = b.param(enc.latents);
    auto x = attention(b, enc.cross, latents, kv, nullptr);
    return geglu_ff(b, enc.ff, x);
  }

  /// One crosstalk stage: concatenate per-modality token blocks along the
  /// token axis, broadcast-add the global code, then run the stage's
  /// self-attention processor with absent-modality keys masked out.
  Tensor mct_stage(Binding<Scalar>& b, int stage, const std::vector<Tensor>& blocks,
                   const Tensor& z, const Tensor* key_mask) const {
    if (int(blocks.size()) != n_modalities())
      throw Error("value", "mct_stage: expected one token block per modality");
    for (const auto& blk : blocks)
      if (blk.cols() != cfg_.latent_dim)
        throw Error("shape", "mct_stage: token width mismatch");
    if (z.rows() != 1 || z.cols() != cfg_.latent_dim)
      throw Error("shape", "mct_stage: z must be 1 x latent_dim");

    auto tokens = ag::concat(blocks, 0);
    tokens = ag::add(tokens, z);
    const StageP& st = stages_[stage];
    for (const auto& blk : st.processor) {
      tokens = attention(b, blk.sa, tokens, tokens, key_mask);
      tokens = geglu_ff(b, blk.ff, tokens);
    }
    return tokens;
  }

  /// Iterative cross-modal refinement: z starts at zero and is replaced by
  /// the token mean of each stage's output; the field is the last stage's
  /// tokens.
  Tensor icmr_forward(Binding<Scalar>& b, const ContextSet<Scalar>& ctx,
                      IcmrTrace* trace = nullptr) const {
    return latent_field(b, ctx, /*use_icmr=*/true, trace);
  }

  /// Mid-fusion ablation arm: identical wiring with the global code pinned
  /// to zero at every stage (no feedback), stage count unchanged.
  Tensor midfusion_forward(Binding<Scalar>& b, const ContextSet<Scalar>& ctx,
                           IcmrTrace* trace = nullptr) const {
    return latent_field(b, ctx, /*use_icmr=*/false, trace);
  }

  /// Query embeddings (positional features of the locations combined with
  /// the encoded time offset) cross-attend into the trunk-processed field;
  /// per-modality heads map to scalars, one [N, 1] column per modality.
  std::vector<Tensor> decode(Binding<Scalar>& b, const Tensor& g, const QuerySet<Scalar>& q,
                             const Tensor* key_mask) const {
    if (q.n_modalities() != n_modalities())
      throw Error("value", "decode: query set does not cover the modality catalog");
    q.validate();

    Tensor t = g;
    for (const auto& blk : trunk_) {
      t = attention(b, blk.sa, t, t, key_mask);
      t = geglu_ff(b, blk.ff, t);
    }

    // Stack every queried modality's embeddings, read once, slice per head.
    std::vector<Index> offsets(n_modalities() + 1, 0);
    std::vector<MatX<Scalar>> feats;
    for (int m = 0; m < n_modalities(); ++m) {
      offsets[m + 1] = offsets[m] + q.locations[m].rows();
      if (q.locations[m].rows() == 0) continue;
      if (q.locations[m].cols() != cfg_.d_spatial)
        throw Error("shape", "decode: query coordinate dimension mismatch");
      feats.push_back(query_features(q.locations[m], q.dt_norm));
    }
    MatX<Scalar> stacked(offsets.back(), feats.empty() ? query_feature_dim() : feats[0].cols());
    Index row = 0;
    for (const auto& f : feats) {
      stacked.middleRows(row, f.rows()) = f;
      row += f.rows();
    }

    auto q_emb = linear(b, reader_.query_proj, ag::constant<Scalar>(std::move(stacked)));
    auto read = attention(b, reader_.cross, q_emb, t, key_mask);
    read = geglu_ff(b, reader_.ff, read);

    std::vector<Tensor> preds(n_modalities());
    for (int m = 0; m < n_modalities(); ++m) {
      const Index n = offsets[m + 1] - offsets[m];
      if (n == 0) continue;
      auto rows = ag::slice(read, offsets[m], n, 0, cfg_.latent_dim);
      auto h = ag::gelu(linear(b, heads_[m].h1, rows));
      preds[m] = linear(b, heads_[m].h2, h);
    }
    return preds;
  }

  /// Full forward pass; honors the configured fusion variant.
  std::vector<Tensor> forward(Binding<Scalar>& b, const ContextSet<Scalar>& ctx,
                              const QuerySet<Scalar>& q, IcmrTrace* trace = nullptr) const {
    auto g = latent_field(b, ctx, cfg_.icmr, trace);
    MatX<Scalar> mask_row = key_mask_for(ctx);
    if (mask_row.rows() > 0) {
      Tensor mask = ag::constant<Scalar>(std::move(mask_row));
      return decode(b, g, q, &mask);
    }
    return decode(b, g, q, nullptr);
  }

  /// Additive key mask over the concatenated token axis: 0 for present
  /// modalities, -1e30 (finite stand-in for -inf) for absent ones. Empty
  /// matrix when every modality is present.
  MatX<Scalar> key_mask_for(const ContextSet<Scalar>& ctx) const {
    bool any_absent = false;
    for (int m = 0; m < n_modalities(); ++m)
      if (!ctx.presence[m]) any_absent = true;
    if (!any_absent) return MatX<Scalar>();
    MatX<Scalar> mask = MatX<Scalar>::Zero(1, token_count());
    for (int m = 0; m < n_modalities(); ++m)
      if (!ctx.presence[m])
        mask.middleCols(Index(m) * cfg_.n_latents, cfg_.n_latents).setConstant(Scalar(-1e30));
    return mask;
  }

 private:
  struct Linear {
    int w = -1, bias = -1;
  };
  struct LayerNormP {
    int gamma = -1, beta = -1;
  };
  struct AttentionP {
    LayerNormP ln_q, ln_kv;
    Linear q, k, v, o;
    int heads = 1, head_dim = 1;
  };
  struct GegluFfP {
    LayerNormP ln;
    Linear gate, value, out;
  };
  struct EncoderP {
    int latents = -1;
    Linear mlp1, mlp2;
    AttentionP cross;
    GegluFfP ff;
  };
  struct BlockP {
    AttentionP sa;
    GegluFfP ff;
  };
  struct StageP {
    std::vector<EncoderP> encoders;
    std::vector<BlockP> processor;
  };
  struct ReaderP {
    Linear query_proj;
    AttentionP cross;
    GegluFfP ff;
  };
  struct HeadP {
    Linear h1, h2;
  };

  static GffEncoder<Scalar> make_space_encoder(const ModelSettings& cfg, std::uint64_t seed) {
    if (cfg.use_gff)
      return GffEncoder<Scalar>(cfg.d_spatial, cfg.space_bands, Scalar(cfg.space_sigma),
                                derive_seed(seed, "gff-space"));
    return GffEncoder<Scalar>::fixed_log_bands(cfg.d_spatial, cfg.space_bands);
  }
  static GffEncoder<Scalar> make_time_encoder(const ModelSettings& cfg, std::uint64_t seed) {
    if (cfg.use_gff)
      return GffEncoder<Scalar>(1, cfg.time_bands, Scalar(cfg.time_sigma),
                                derive_seed(seed, "gff-time"));
    return GffEncoder<Scalar>::fixed_log_bands(1, cfg.time_bands);
  }

  int query_feature_dim() const {
    return cfg_.query_combine == "concat"
               ? space_enc_.feature_dim() + time_enc_.feature_dim()
               : space_enc_.feature_dim();
  }

  MatX<Scalar> query_features(const MatX<Scalar>& locations, Scalar dt_norm) const {
    MatX<Scalar> gs = space_enc_.encode(locations);
    MatX<Scalar> tcoord(1, 1);
    tcoord(0, 0) = dt_norm;
    MatX<Scalar> gt = time_enc_.encode(tcoord);
    if (cfg_.query_combine == "concat") {
      MatX<Scalar> out(gs.rows(), gs.cols() + gt.cols());
      out.leftCols(gs.cols()) = gs;
      out.rightCols(gt.cols()) = gt.replicate(gs.rows(), 1);
      return out;
    }
    return gs + gt.replicate(gs.rows(), 1);
  }

  // -- registration ---------------------------------------------------------

  Linear add_linear(Rng& rng, const std::string& name, Index in, Index out,
                    Scalar gain = Scalar(1)) {
    Linear l;
    const Scalar std = gain / std::sqrt(Scalar(in));
    l.w = params_.add(name + ".w", in, out, [&](MatX<Scalar>& m) {
      for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = Scalar(rng.normal(0.0, double(std)));
    });
    l.bias = params_.add(name + ".b", 1, out, [](MatX<Scalar>& m) { m.setZero(); });
    return l;
  }

  LayerNormP add_layernorm(const std::string& name, Index dim) {
    LayerNormP ln;
    ln.gamma = params_.add(name + ".gamma", 1, dim, [](MatX<Scalar>& m) { m.setOnes(); });
    ln.beta = params_.add(name + ".beta", 1, dim, [](MatX<Scalar>& m) { m.setZero(); });
    return ln;
  }

  AttentionP add_attention(Rng& rng, const std::string& name, Index q_dim, Index kv_dim,
                           int heads, int head_dim) {
    AttentionP a;
    a.heads = heads;
    a.head_dim = head_dim;
    const Index inner = Index(heads) * head_dim;
    a.ln_q = add_layernorm(name + ".ln_q", q_dim);
    a.ln_kv = add_layernorm(name + ".ln_kv", kv_dim);
    a.q = add_linear(rng, name + ".q", q_dim, inner);
    a.k = add_linear(rng, name + ".k", kv_dim, inner);
    a.v = add_linear(rng, name + ".v", kv_dim, inner);
    a.o = add_linear(rng, name + ".o", inner, q_dim, Scalar(0.5));
    return a;
  }

  GegluFfP add_geglu(Rng& rng, const std::string& name, Index dim) {
    GegluFfP f;
    const Index hidden = dim * cfg_.ff_mult;
    f.ln = add_layernorm(name + ".ln", dim);
    f.gate = add_linear(rng, name + ".gate", dim, hidden);
    f.value = add_linear(rng, name + ".value", dim, hidden);
    f.out = add_linear(rng, name + ".out", hidden, dim, Scalar(0.5));
    return f;
  }

  EncoderP add_encoder(Rng& rng, const std::string& name) {
    EncoderP e;
    const Index d = cfg_.latent_dim;
    e.latents = params_.add(name + ".latents", cfg_.n_latents, d, [&](MatX<Scalar>& m) {
      if (cfg_.sinusoidal_init) {
        SinusoidalQueryInit<Scalar> init{cfg_.n_latents, cfg_.latent_dim,
                                         Scalar(cfg_.sin_init_base)};
        m = init.make();
      } else {
        const Scalar std = Scalar(1) / std::sqrt(Scalar(d));
        for (Index i = 0; i < m.rows(); ++i)
          for (Index j = 0; j < m.cols(); ++j) m(i, j) = Scalar(rng.normal(0.0, double(std)));
      }
    });
    e.mlp1 = add_linear(rng, name + ".mlp1", 1 + cfg_.d_spatial, cfg_.input_mlp_hidden);
    e.mlp2 = add_linear(rng, name + ".mlp2", cfg_.input_mlp_hidden, cfg_.input_mlp_dim);
    const Index kv_dim = cfg_.input_mlp_dim + space_enc_.feature_dim();
    e.cross = add_attention(rng, name + ".cross", d, kv_dim, cfg_.cross_heads, cfg_.head_dim);
    e.ff = add_geglu(rng, name + ".ff", d);
    return e;
  }

  BlockP add_block(Rng& rng, const std::string& name) {
    BlockP blk;
    blk.sa = add_attention(rng, name + ".sa", cfg_.latent_dim, cfg_.latent_dim, cfg_.self_heads,
                           cfg_.head_dim);
    blk.ff = add_geglu(rng, name + ".ff", cfg_.latent_dim);
    return blk;
  }

  void build(Rng& rng) {
    stages_.resize(cfg_.stages);
    for (int s = 0; s < cfg_.stages; ++s) {
      auto& st = stages_[s];
      if (cfg_.share_stage_encoders && s > 0) {
        st.encoders = stages_[0].encoders;
      } else {
        for (int m = 0; m < n_modalities(); ++m)
          st.encoders.push_back(add_encoder(
              rng, "stage" + std::to_string(s) + ".enc." + cfg_.modalities[m]));
      }
      for (int p = 0; p < cfg_.stage_blocks; ++p)
        st.processor.push_back(
            add_block(rng, "stage" + std::to_string(s) + ".proc" + std::to_string(p)));
    }
    for (int t = 0; t < cfg_.trunk_blocks; ++t)
      trunk_.push_back(add_block(rng, "trunk" + std::to_string(t)));
    reader_.query_proj = add_linear(rng, "reader.query_proj", query_feature_dim(),
                                    cfg_.latent_dim);
    reader_.cross = add_attention(rng, "reader.cross", cfg_.latent_dim, cfg_.latent_dim,
                                  cfg_.cross_heads, cfg_.head_dim);
    reader_.ff = add_geglu(rng, "reader.ff", cfg_.latent_dim);
    for (int m = 0; m < n_modalities(); ++m) {
      HeadP h;
      h.h1 = add_linear(rng, "head." + cfg_.modalities[m] + ".h1", cfg_.latent_dim,
                        cfg_.latent_dim);
      h.h2 = add_linear(rng, "head." + cfg_.modalities[m] + ".h2", cfg_.latent_dim, 1,
                        Scalar(0.1));
      heads_.push_back(h);
    }
  }

  const EncoderP& encoder_at(int stage, int m) const {
    const StageP& st = cfg_.share_stage_encoders ? stages_[0] : stages_[stage];
    return st.encoders[m];
  }

  // -- forward building blocks ----------------------------------------------

  Tensor linear(Binding<Scalar>& b, const Linear& l, const Tensor& x) const {
    return ag::add(ag::matmul(x, b.param(l.w)), b.param(l.bias));
  }

  Tensor layer_norm(Binding<Scalar>& b, const LayerNormP& ln, const Tensor& x) const {
    return ag::layernorm(x, b.param(ln.gamma), b.param(ln.beta));
  }

  /// Pre-LN multi-head attention with a residual connection on the query
  /// stream. key_mask, when given, is a 1 x n_keys additive row.
  Tensor attention(Binding<Scalar>& b, const AttentionP& a, const Tensor& x_q,
                   const Tensor& x_kv, const Tensor* key_mask) const {
    auto qn = layer_norm(b, a.ln_q, x_q);
    auto kvn = layer_norm(b, a.ln_kv, x_kv);
    auto q = linear(b, a.q, qn);
    auto k = linear(b, a.k, kvn);
    auto v = linear(b, a.v, kvn);
    const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(Scalar(a.head_dim));
    std::vector<Tensor> head_outs;
    head_outs.reserve(a.heads);
    for (int h = 0; h < a.heads; ++h) {
      const Index c0 = Index(h) * a.head_dim;
      auto qh = ag::slice(q, 0, q.rows(), c0, a.head_dim);
      auto kh = ag::slice(k, 0, k.rows(), c0, a.head_dim);
      auto vh = ag::slice(v, 0, v.rows(), c0, a.head_dim);
      auto logits = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt_d);
      auto weights = ag::softmax(logits, key_mask);
      head_outs.push_back(ag::matmul(weights, vh));
    }
    auto o = head_outs.size() == 1 ? head_outs[0] : ag::concat(head_outs, 1);
    return ag::add(x_q, linear(b, a.o, o));
  }

  /// Pre-LN GEGLU feed-forward with a residual connection:
  /// x + W_out(gelu(x W_gate) * (x W_value)).
  Tensor geglu_ff(Binding<Scalar>& b, const GegluFfP& f, const Tensor& x) const {
    auto n = layer_norm(b, f.ln, x);
    auto gated = ag::multiply(ag::gelu(linear(b, f.gate, n)), linear(b, f.value, n));
    return ag::add(x, linear(b, f.out, gated));
  }

  Tensor latent_field(Binding<Scalar>& b, const ContextSet<Scalar>& ctx, bool use_icmr,
                      IcmrTrace* trace) const {
    ctx.validate();
    if (ctx.n_modalities() != n_modalities())
      throw Error("value", "forward: context does not cover the modality catalog");
    if (ctx.n_present() == 0)
      throw Error("value", "forward: every modality is absent from the context");

    MatX<Scalar> mask_row = key_mask_for(ctx);
    Tensor mask_tensor;
    const Tensor* mask = nullptr;
    if (mask_row.rows() > 0) {
      mask_tensor = ag::constant<Scalar>(mask_row);
      mask = &mask_tensor;
    }

    Tensor z = ag::constant<Scalar>(MatX<Scalar>::Zero(1, cfg_.latent_dim));
    Tensor h;
    for (int k = 0; k < cfg_.stages; ++k) {
      std::vector<Tensor> blocks;
      blocks.reserve(n_modalities());
      for (int m = 0; m < n_modalities(); ++m)
        blocks.push_back(
            encode_modality(b, k, m, ctx.observations[m], bool(ctx.presence[m])));
      if (trace) trace->z_used.push_back(z.value);
      h = mct_stage(b, k, blocks, z, mask);
      if (trace) trace->stage_tokens.push_back(h.value);
      if (use_icmr && k + 1 < cfg_.stages) z = ag::mean_tokens(h);
    }
    return h;
  }

  ModelSettings cfg_;
  std::uint64_t seed_;
  ParamSet<Scalar> params_;
  GffEncoder<Scalar> space_enc_;
  GffEncoder<Scalar> time_enc_;
  std::vector<StageP> stages_;
  std::vector<BlockP> trunk_;
  ReaderP reader_;
  std::vector<HeadP> heads_;
};

}  // namespace omnifield
