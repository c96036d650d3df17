#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "guicoder/dsl.hpp"
#include "guicoder/layers.hpp"
#include "guicoder/params.hpp"
#include "guicoder/prng.hpp"
#include "guicoder/tensor.hpp"

// The full pipeline: a three-stage conv encoder pools into a compact
// image code that seeds a block LSTM; each block state drives soft
// attention over region features, and a two-layer token LSTM decodes the
// attended context into that block's tokens. The block LSTM advances on
// its own sigmoid output, not on decoded tokens, and a two-way stop head
// decides after each decoded block whether it was the last.

namespace guicoder::model {

struct ModelConfig {
  int image_size = 256;
  int feat_dim = 128;  // D: last conv width; the stack runs D/4 -> D/2 -> D
  int hidden = 512;    // H: hidden size of both LSTMs
  int embed = 512;     // E: LSTM input size
  int attn_dim = 256;  // A
  int vocab = dsl::kVocabSize;
  int max_blocks = 32;
  int max_tokens_per_block = 64;
  double dropout = 0.5;

  int conv1_width() const { return std::max(1, feat_dim / 4); }
  int conv2_width() const { return std::max(1, feat_dim / 2); }
  int grid() const { return image_size / 8; }
  int regions() const { return grid() * grid(); }
};

inline ModelConfig paper_model() { return ModelConfig{}; }

inline ModelConfig desk_model() {
  ModelConfig cfg;
  cfg.image_size = 64;
  cfg.feat_dim = 32;
  cfg.hidden = 64;
  cfg.embed = 64;
  cfg.attn_dim = 32;
  cfg.dropout = 0.0;
  return cfg;
}

template <typename T>
ParamsT<T> build_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParamsT<T> p;
  Prng stream = derive_stream(seed, 'W');
  auto lin = [&](const std::string& name, int m, int n) {
    init_uniform_xavier(p.add(name + ".w", {m, n}), n, m, stream);
    p.add(name + ".b", {m});
  };
  auto lstm = [&](const std::string& name, int h, int e) {
    init_uniform_xavier(p.add(name + ".wx", {4 * h, e}), e, 4 * h, stream);
    init_uniform_xavier(p.add(name + ".wh", {4 * h, h}), h, 4 * h, stream);
    TensorT<T>& b = p.add(name + ".b", {4 * h});
    for (int j = 0; j < h; ++j) b[h + j] = T(1);  // forget-gate bias
  };
  auto conv = [&](const std::string& name, int co, int ci) {
    init_uniform_xavier(p.add(name + ".w", {co, ci, 3, 3}), ci * 9, co * 9, stream);
    p.add(name + ".b", {co});
  };
  conv("conv1", cfg.conv1_width(), 3);
  conv("conv2", cfg.conv2_width(), cfg.conv1_width());
  conv("conv3", cfg.feat_dim, cfg.conv2_width());
  lin("block.x_v", cfg.embed, cfg.feat_dim);
  lin("block.x_o", cfg.embed, cfg.hidden);
  lstm("block.lstm", cfg.hidden, cfg.embed);
  lin("block.o", cfg.hidden, cfg.hidden);
  lin("block.stop", 2, cfg.hidden);
  init_uniform_xavier(p.add("attn.w_ev", {cfg.attn_dim, cfg.feat_dim}), cfg.feat_dim, cfg.attn_dim,
                      stream);
  init_uniform_xavier(p.add("attn.w_eh", {cfg.attn_dim, cfg.hidden}), cfg.hidden, cfg.attn_dim,
                      stream);
  init_uniform_xavier(p.add("attn.w_s", {cfg.attn_dim}), cfg.attn_dim, 1, stream);
  lin("tok.in_v", cfg.embed, cfg.feat_dim);
  lin("tok.in_q", cfg.embed, cfg.vocab);
  lstm("tok.lstm1", cfg.hidden, cfg.embed);
  lstm("tok.lstm2", cfg.hidden, cfg.hidden);
  lin("tok.out", cfg.vocab, cfg.hidden);
  return p;
}

// Reads the architecture back from weight shapes (image size is not a
// weight property; pass the actual input size).
template <typename T>
ModelConfig infer_config(const ParamsT<T>& params, int image_size) {
  ModelConfig cfg;
  cfg.image_size = image_size;
  cfg.feat_dim = params.get("conv3.b").numel();
  cfg.hidden = params.get("block.o.b").numel();
  cfg.embed = params.get("block.x_v.w").extent(0);
  cfg.attn_dim = params.get("attn.w_s").numel();
  cfg.vocab = params.get("tok.out.b").numel();
  return cfg;
}

// ---- encoder ----

template <typename T>
struct EncoderCache {
  TensorT<T> image;
  TensorT<T> r1, p1, r2, p2, r3, p3;  // post-relu and post-pool maps
  nn::PoolCache pool1, pool2, pool3;
  std::vector<int> region_argmax;
};

template <typename T>
struct EncoderOutput {
  TensorT<T> nu;  // L x D region features
  TensorT<T> vp;  // D pooled image code
  int grid = 0;   // L = grid * grid
};

template <typename T>
EncoderOutput<T> encode(const TensorT<T>& image, const ParamsT<T>& params, const ModelConfig& cfg,
                        EncoderCache<T>* cache = nullptr) {
  if (image.rank() != 3 || image.extent(0) != 3 || image.extent(1) != cfg.image_size ||
      image.extent(2) != cfg.image_size || cfg.image_size % 8 != 0)
    throw ShapeMismatch("encode: image " + shape_str(image) + " does not match config size " +
                        std::to_string(cfg.image_size));
  EncoderCache<T> local;
  EncoderCache<T>& c = cache ? *cache : local;
  c.image = image;
  c.r1 = nn::relu_forward(nn::conv2d_forward(image, params.get("conv1.w"), params.get("conv1.b")));
  c.p1 = nn::maxpool2d_forward(c.r1, 2, 2, c.pool1);
  c.r2 = nn::relu_forward(nn::conv2d_forward(c.p1, params.get("conv2.w"), params.get("conv2.b")));
  c.p2 = nn::maxpool2d_forward(c.r2, 2, 2, c.pool2);
  c.r3 = nn::relu_forward(nn::conv2d_forward(c.p2, params.get("conv3.w"), params.get("conv3.b")));
  c.p3 = nn::maxpool2d_forward(c.r3, 2, 2, c.pool3);

  int g = cfg.grid(), d = cfg.feat_dim;
  EncoderOutput<T> out;
  out.grid = g;
  out.nu = TensorT<T>({g * g, d});
  for (int i = 0; i < g * g; ++i)
    for (int ch = 0; ch < d; ++ch) out.nu.at(i, ch) = c.p3.at(ch, i / g, i % g);
  out.vp = nn::region_pool_forward(out.nu, c.region_argmax);
  return out;
}

template <typename T>
void encode_backward(const EncoderCache<T>& c, const ParamsT<T>& params, const ModelConfig& cfg,
                     const TensorT<T>& dnu, GradsT<T>& grads) {
  int g = cfg.grid(), d = cfg.feat_dim;
  TensorT<T> dp3(c.p3.shape);
  for (int i = 0; i < g * g; ++i)
    for (int ch = 0; ch < d; ++ch) dp3.at(ch, i / g, i % g) = dnu.at(i, ch);
  TensorT<T> dr3(c.r3.shape);
  nn::maxpool2d_backward(dp3, c.pool3, dr3);
  TensorT<T> dc3(c.r3.shape);
  nn::relu_backward(c.r3, dr3, dc3);
  TensorT<T> dp2(c.p2.shape);
  nn::conv2d_backward(c.p2, params.get("conv3.w"), dc3, 1, 1, &dp2, grads.of("conv3.w"),
                      grads.of("conv3.b"));
  TensorT<T> dr2(c.r2.shape);
  nn::maxpool2d_backward(dp2, c.pool2, dr2);
  TensorT<T> dc2(c.r2.shape);
  nn::relu_backward(c.r2, dr2, dc2);
  TensorT<T> dp1(c.p1.shape);
  nn::conv2d_backward(c.p1, params.get("conv2.w"), dc2, 1, 1, &dp1, grads.of("conv2.w"),
                      grads.of("conv2.b"));
  TensorT<T> dr1(c.r1.shape);
  nn::maxpool2d_backward(dp1, c.pool1, dr1);
  TensorT<T> dc1(c.r1.shape);
  nn::relu_backward(c.r1, dr1, dc1);
  nn::conv2d_backward(c.image, params.get("conv1.w"), dc1, 1, 1,
                      static_cast<TensorT<T>*>(nullptr), grads.of("conv1.w"), grads.of("conv1.b"));
}

// ---- block LSTM ----

enum StopState { CONTINUE = 0, STOP = 1 };

template <typename T>
struct BlockState {
  TensorT<T> h, c;  // LSTM state
  TensorT<T> o;     // sigmoid output feeding the next step
  TensorT<T> p;     // CONTINUE/STOP distribution
};

namespace detail {

template <typename T>
struct BlockStepCache {
  TensorT<T> x;
  nn::LstmCache<T> lstm;
  TensorT<T> o;
  TensorT<T> stop_logits, stop_probs;
};

// x comes from v^p on the first step and from the previous sigmoid
// output afterwards; initial hidden and cell state are zero.
template <typename T>
void block_step_impl(const ParamsT<T>& params, const TensorT<T>& x, const TensorT<T>& h_prev,
                     const TensorT<T>& c_prev, BlockStepCache<T>& cache) {
  cache.x = x;
  nn::lstm_forward(x, h_prev, c_prev, params.get("block.lstm.wx"), params.get("block.lstm.wh"),
                   params.get("block.lstm.b"), cache.lstm);
  cache.o = nn::sigmoid_forward(
      nn::linear_forward(cache.lstm.h, params.get("block.o.w"), params.get("block.o.b")));
  cache.stop_logits =
      nn::linear_forward(cache.lstm.h, params.get("block.stop.w"), params.get("block.stop.b"));
  cache.stop_probs = nn::softmax(cache.stop_logits);
}

}  // namespace detail

template <typename T>
BlockState<T> block_step(const ParamsT<T>& params, const TensorT<T>& vp) {
  int hh = params.get("block.o.b").numel();
  detail::BlockStepCache<T> cache;
  TensorT<T> zero({hh});
  detail::block_step_impl(params,
                          nn::linear_forward(vp, params.get("block.x_v.w"), params.get("block.x_v.b")),
                          zero, zero, cache);
  return BlockState<T>{cache.lstm.h, cache.lstm.c, cache.o, cache.stop_probs};
}

template <typename T>
BlockState<T> block_step(const ParamsT<T>& params, const BlockState<T>& prev) {
  detail::BlockStepCache<T> cache;
  detail::block_step_impl(
      params, nn::linear_forward(prev.o, params.get("block.x_o.w"), params.get("block.x_o.b")),
      prev.h, prev.c, cache);
  return BlockState<T>{cache.lstm.h, cache.lstm.c, cache.o, cache.stop_probs};
}

// ---- token LSTM ----

template <typename T>
struct TokState {
  TensorT<T> h1, c1, h2, c2;
};

template <typename T>
TokState<T> token_init(const ModelConfig& cfg) {
  TokState<T> st;
  st.h1 = TensorT<T>({cfg.hidden});
  st.c1 = TensorT<T>({cfg.hidden});
  st.h2 = TensorT<T>({cfg.hidden});
  st.c2 = TensorT<T>({cfg.hidden});
  return st;
}

namespace detail {

// embedding lookup: column of the one-hot projection, plus bias
template <typename T>
TensorT<T> embed_token(const ParamsT<T>& params, int token) {
  const TensorT<T>& w = params.get("tok.in_q.w");
  const TensorT<T>& b = params.get("tok.in_q.b");
  TensorT<T> x({w.extent(0)});
  for (int e = 0; e < w.extent(0); ++e) x[e] = w.at(e, token) + b[e];
  return x;
}

}  // namespace detail

// One decode step at inference: feeds vhat on the first step (prev_token
// < 0) and the embedded previous token afterwards. Advances the state and
// returns the vocabulary logits.
template <typename T>
TensorT<T> token_step(const ParamsT<T>& params, TokState<T>& st, const TensorT<T>* vhat,
                      int prev_token) {
  TensorT<T> x = vhat ? nn::linear_forward(*vhat, params.get("tok.in_v.w"), params.get("tok.in_v.b"))
                      : detail::embed_token(params, prev_token);
  nn::LstmCache<T> l1, l2;
  nn::lstm_forward(x, st.h1, st.c1, params.get("tok.lstm1.wx"), params.get("tok.lstm1.wh"),
                   params.get("tok.lstm1.b"), l1);
  nn::lstm_forward(l1.h, st.h2, st.c2, params.get("tok.lstm2.wx"), params.get("tok.lstm2.wh"),
                   params.get("tok.lstm2.b"), l2);
  st.h1 = l1.h;
  st.c1 = l1.c;
  st.h2 = l2.h;
  st.c2 = l2.c;
  return nn::linear_forward(st.h2, params.get("tok.out.w"), params.get("tok.out.b"));
}

// Teacher-forced logits: one row per ground-truth token of the block
// (the block includes its terminal BLOCK-END).
template <typename T>
std::vector<TensorT<T>> token_decode_teacher(const ParamsT<T>& params, const ModelConfig& cfg,
                                             const TensorT<T>& vhat, const dsl::TokenSeq& block) {
  TokState<T> st = token_init<T>(cfg);
  std::vector<TensorT<T>> logits;
  logits.reserve(block.size());
  for (std::size_t j = 0; j < block.size(); ++j)
    logits.push_back(token_step(params, st, j == 0 ? &vhat : nullptr, j == 0 ? -1 : block[j - 1]));
  return logits;
}

template <typename T>
struct GeneratedBlock {
  dsl::TokenSeq tokens;
  double logprob = 0.0;
  bool truncated = false;
};

template <typename T>
int argmax_index(const TensorT<T>& v) {
  return int(std::max_element(v.data.begin(), v.data.end()) - v.data.begin());
}

template <typename T>
GeneratedBlock<T> token_decode_greedy(const ParamsT<T>& params, const ModelConfig& cfg,
                                      const TensorT<T>& vhat) {
  TokState<T> st = token_init<T>(cfg);
  GeneratedBlock<T> out;
  int prev = -1;
  for (int j = 0; j < cfg.max_tokens_per_block; ++j) {
    TensorT<T> logits = token_step(params, st, j == 0 ? &vhat : nullptr, prev);
    TensorT<T> probs = nn::softmax(logits);
    int tok = argmax_index(probs);
    out.tokens.push_back(tok);
    out.logprob += std::log(double(probs[tok]));
    if (tok == dsl::BLOCK_END) return out;
    prev = tok;
  }
  out.truncated = true;
  return out;
}

// Per-block beam search over token sequences, scored by summed log
// probability (no length normalization). Ties prefer the
// lexicographically smaller token sequence, which also prefers lower
// token ids and shorter (prefix) hypotheses.
template <typename T>
GeneratedBlock<T> token_decode_beam(const ParamsT<T>& params, const ModelConfig& cfg,
                                    const TensorT<T>& vhat, int width) {
  if (width < 1) throw std::invalid_argument("beam width must be >= 1");
  struct Hyp {
    TokState<T> st;
    dsl::TokenSeq toks;
    double logp = 0.0;
    bool done = false;
    bool truncated = false;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.logp != b.logp) return a.logp > b.logp;
    return a.toks < b.toks;
  };

  std::vector<Hyp> beam{Hyp{token_init<T>(cfg), {}, 0.0, false, false}};
  bool first = true;
  for (int step = 0; step < cfg.max_tokens_per_block; ++step) {
    bool any_live = false;
    for (const Hyp& hyp : beam) any_live |= !hyp.done;
    if (!any_live) break;
    std::vector<Hyp> candidates;
    for (Hyp& hyp : beam) {
      if (hyp.done) {
        candidates.push_back(std::move(hyp));
        continue;
      }
      TensorT<T> logits =
          token_step(params, hyp.st, first ? &vhat : nullptr, first ? -1 : hyp.toks.back());
      TensorT<T> probs = nn::softmax(logits);
      for (int tok = 0; tok < probs.numel(); ++tok) {
        Hyp next = hyp;
        next.toks.push_back(tok);
        next.logp += std::log(double(probs[tok]));
        next.done = tok == dsl::BLOCK_END;
        candidates.push_back(std::move(next));
      }
    }
    first = false;
    std::sort(candidates.begin(), candidates.end(), better);
    if (int(candidates.size()) > width) candidates.resize(std::size_t(width));
    beam = std::move(candidates);
  }
  Hyp* best = nullptr;
  for (Hyp& hyp : beam) {
    if (!hyp.done) {  // ran out of steps without BLOCK-END
      hyp.done = true;
      hyp.truncated = true;
    }
    if (!best || better(hyp, *best)) best = &hyp;
  }
  return GeneratedBlock<T>{best->toks, best->logp, best->truncated};
}

// ---- training ----

template <typename T>
T forward_train(const TensorT<T>& image, const dsl::TokenSeq& gt, const ParamsT<T>& params,
                const ModelConfig& cfg, Prng dropout_stream, bool training,
                GradsT<T>* grads = nullptr) {
  dsl::BlockSeq blocks = dsl::blockify(gt);
  int s = int(blocks.size());
  if (s == 0) throw dsl::NotAProgram("program has no blocks");
  const std::size_t su = blocks.size();

  EncoderCache<T> enc_cache;
  EncoderOutput<T> enc = encode(image, params, cfg, &enc_cache);
  int hh = cfg.hidden;

  // block LSTM unrolled exactly S steps; step i carries label CONTINUE
  // for i < S-1 and STOP at the final block
  std::vector<detail::BlockStepCache<T>> bsteps(su);
  TensorT<T> zero({hh});
  T loss = T(0);
  for (int t = 0; t < s; ++t) {
    TensorT<T> x =
        t == 0 ? nn::linear_forward(enc.vp, params.get("block.x_v.w"), params.get("block.x_v.b"))
               : nn::linear_forward(bsteps[std::size_t(t - 1)].o, params.get("block.x_o.w"),
                                    params.get("block.x_o.b"));
    detail::block_step_impl(params, x, t == 0 ? zero : bsteps[std::size_t(t - 1)].lstm.h,
                            t == 0 ? zero : bsteps[std::size_t(t - 1)].lstm.c,
                            bsteps[std::size_t(t)]);
    int g = t == s - 1 ? STOP : CONTINUE;
    loss += nn::cross_entropy(bsteps[std::size_t(t)].stop_logits, g);
  }

  // per block: attention, then the teacher-forced token LSTM
  struct TokenStepCache {
    TensorT<T> x;
    nn::LstmCache<T> l1, l2;
    TensorT<T> h2d, mask, probs;
    int input_token = -1;
  };
  std::vector<nn::AttnCache<T>> attn(su);
  std::vector<TensorT<T>> vhat(su), alpha(su);
  std::vector<std::vector<TokenStepCache>> tok_caches(su);
  for (int t = 0; t < s; ++t) {
    nn::attention_forward(enc.nu, bsteps[std::size_t(t)].lstm.h, params.get("attn.w_ev"),
                          params.get("attn.w_eh"), params.get("attn.w_s"), attn[std::size_t(t)],
                          alpha[std::size_t(t)], vhat[std::size_t(t)]);
    const dsl::TokenSeq& block = blocks[std::size_t(t)];
    TokState<T> st = token_init<T>(cfg);
    auto& caches = tok_caches[std::size_t(t)];
    caches.resize(block.size());
    for (std::size_t j = 0; j < block.size(); ++j) {
      TokenStepCache& tc = caches[j];
      tc.input_token = j == 0 ? -1 : block[j - 1];
      tc.x = j == 0 ? nn::linear_forward(vhat[std::size_t(t)], params.get("tok.in_v.w"),
                                         params.get("tok.in_v.b"))
                    : detail::embed_token(params, tc.input_token);
      nn::lstm_forward(tc.x, st.h1, st.c1, params.get("tok.lstm1.wx"), params.get("tok.lstm1.wh"),
                       params.get("tok.lstm1.b"), tc.l1);
      nn::lstm_forward(tc.l1.h, st.h2, st.c2, params.get("tok.lstm2.wx"),
                       params.get("tok.lstm2.wh"), params.get("tok.lstm2.b"), tc.l2);
      st.h1 = tc.l1.h;
      st.c1 = tc.l1.c;
      st.h2 = tc.l2.h;
      st.c2 = tc.l2.c;
      tc.h2d = nn::dropout_forward(tc.l2.h, cfg.dropout, dropout_stream, training, &tc.mask);
      TensorT<T> logits =
          nn::linear_forward(tc.h2d, params.get("tok.out.w"), params.get("tok.out.b"));
      loss += nn::cross_entropy(logits, block[j], &tc.probs);
    }
  }

  if (!std::isfinite(double(loss))) throw NonFinite("training loss is not finite");
  if (!grads) return loss;

  // ---- backward ----
  GradsT<T>& gr = *grads;
  TensorT<T> dnu(enc.nu.shape);
  std::vector<TensorT<T>> dh_block(su, TensorT<T>({hh}));

  for (int t = s - 1; t >= 0; --t) {
    const dsl::TokenSeq& block = blocks[std::size_t(t)];
    auto& caches = tok_caches[std::size_t(t)];
    TensorT<T> dvhat({cfg.feat_dim});
    TensorT<T> dh1({hh}), dc1({hh}), dh2({hh}), dc2({hh});
    for (int j = int(block.size()) - 1; j >= 0; --j) {
      TokenStepCache& tc = caches[std::size_t(j)];
      TensorT<T> dlogits({cfg.vocab});
      nn::cross_entropy_backward(tc.probs, block[std::size_t(j)], T(1), dlogits);
      TensorT<T> dh2d({hh});
      nn::linear_backward(tc.h2d, params.get("tok.out.w"), dlogits, &dh2d, gr.of("tok.out.w"),
                          gr.of("tok.out.b"));
      nn::dropout_backward(tc.mask, dh2d, dh2);
      TensorT<T> dh1_step({hh}), dc1_prev({hh}), dh2_prev({hh}), dc2_prev({hh});
      nn::lstm_backward(tc.l2, params.get("tok.lstm2.wx"), params.get("tok.lstm2.wh"), dh2, dc2,
                        dh1_step, dh2_prev, dc2_prev, gr.of("tok.lstm2.wx"), gr.of("tok.lstm2.wh"),
                        gr.of("tok.lstm2.b"));
      dh1.add_scaled(dh1_step, T(1));
      TensorT<T> dx({cfg.embed}), dh1_prev({hh});
      nn::lstm_backward(tc.l1, params.get("tok.lstm1.wx"), params.get("tok.lstm1.wh"), dh1, dc1,
                        dx, dh1_prev, dc1_prev, gr.of("tok.lstm1.wx"), gr.of("tok.lstm1.wh"),
                        gr.of("tok.lstm1.b"));
      if (j == 0) {
        nn::linear_backward(vhat[std::size_t(t)], params.get("tok.in_v.w"), dx, &dvhat,
                            gr.of("tok.in_v.w"), gr.of("tok.in_v.b"));
      } else {
        TensorT<T>& dwq = gr.of("tok.in_q.w");
        TensorT<T>& dbq = gr.of("tok.in_q.b");
        for (int e = 0; e < cfg.embed; ++e) {
          dwq.at(e, tc.input_token) += dx[e];
          dbq[e] += dx[e];
        }
      }
      dh1 = std::move(dh1_prev);
      dc1 = std::move(dc1_prev);
      dh2 = std::move(dh2_prev);
      dc2 = std::move(dc2_prev);
    }
    nn::attention_backward(enc.nu, bsteps[std::size_t(t)].lstm.h, params.get("attn.w_ev"),
                           params.get("attn.w_eh"), params.get("attn.w_s"), attn[std::size_t(t)],
                           dvhat, dnu, dh_block[std::size_t(t)], gr.of("attn.w_ev"),
                           gr.of("attn.w_eh"), gr.of("attn.w_s"));
  }

  // block LSTM chain, including the path through o_{t-1} into x_t
  TensorT<T> dvp({cfg.feat_dim});
  TensorT<T> dc_carry({hh});
  TensorT<T> dh_sink({hh});  // gradient of the constant zero initial state
  for (int t = s - 1; t >= 0; --t) {
    detail::BlockStepCache<T>& bc = bsteps[std::size_t(t)];
    TensorT<T>& dh = dh_block[std::size_t(t)];
    TensorT<T> dstop({2});
    nn::cross_entropy_backward(bc.stop_probs, t == s - 1 ? STOP : CONTINUE, T(1), dstop);
    nn::linear_backward(bc.lstm.h, params.get("block.stop.w"), dstop, &dh, gr.of("block.stop.w"),
                        gr.of("block.stop.b"));
    TensorT<T> dx({cfg.embed});
    TensorT<T> dc_prev({hh});
    TensorT<T>& dh_prev = t > 0 ? dh_block[std::size_t(t - 1)] : dh_sink;
    nn::lstm_backward(bc.lstm, params.get("block.lstm.wx"), params.get("block.lstm.wh"), dh,
                      dc_carry, dx, dh_prev, dc_prev, gr.of("block.lstm.wx"),
                      gr.of("block.lstm.wh"), gr.of("block.lstm.b"));
    dc_carry = std::move(dc_prev);
    if (t == 0) {
      nn::linear_backward(enc.vp, params.get("block.x_v.w"), dx, &dvp, gr.of("block.x_v.w"),
                          gr.of("block.x_v.b"));
    } else {
      detail::BlockStepCache<T>& prev = bsteps[std::size_t(t - 1)];
      TensorT<T> do_prev({hh});
      nn::linear_backward(prev.o, params.get("block.x_o.w"), dx, &do_prev, gr.of("block.x_o.w"),
                          gr.of("block.x_o.b"));
      TensorT<T> du({hh});
      nn::sigmoid_backward(prev.o, do_prev, du);
      nn::linear_backward(prev.lstm.h, params.get("block.o.w"), du, &dh_block[std::size_t(t - 1)],
                          gr.of("block.o.w"), gr.of("block.o.b"));
    }
  }

  nn::region_pool_backward(dvp, enc_cache.region_argmax, dnu);
  encode_backward(enc_cache, params, cfg, dnu, gr);
  return loss;
}

// ---- inference ----

template <typename T>
struct DecodeResult {
  dsl::BlockSeq blocks;
  std::vector<TensorT<T>> alphas;      // one L-vector per decoded block
  std::vector<TensorT<T>> vhats;       // attended context per decoded block
  std::vector<TensorT<T>> stop_probs;  // one 2-vector per block step
  std::vector<bool> truncated;         // per block
  std::vector<double> block_logprobs;
  int grid = 0;

  // Lenient program assembly: strips BLOCK-END, balances braces, wraps in
  // "stack { ... }". Identical to dsl::deblockify on well-formed blocks.
  dsl::TokenSeq program() const {
    dsl::TokenSeq out = {dsl::STACK, dsl::OPEN};
    for (const dsl::TokenSeq& block : blocks) {
      int depth = 0;
      for (dsl::TokenId tok : block) {
        if (tok == dsl::BLOCK_END) continue;
        if (tok == dsl::CLOSE) {
          if (depth == 0) continue;
          --depth;
        }
        if (tok == dsl::OPEN) ++depth;
        out.push_back(tok);
      }
      for (; depth > 0; --depth) out.push_back(dsl::CLOSE);
    }
    out.push_back(dsl::CLOSE);
    return out;
  }
};

namespace detail {

template <typename T, typename DecodeBlock>
DecodeResult<T> predict_impl(const TensorT<T>& image, const ParamsT<T>& params,
                             const ModelConfig& cfg, DecodeBlock&& decode_block) {
  EncoderOutput<T> enc = encode(image, params, cfg);
  DecodeResult<T> out;
  out.grid = enc.grid;
  BlockState<T> state;
  for (int t = 0; t < cfg.max_blocks; ++t) {
    state = t == 0 ? block_step(params, enc.vp) : block_step(params, state);
    out.stop_probs.push_back(state.p);
    TensorT<T> alpha, vhat;
    nn::AttnCache<T> attn;
    nn::attention_forward(enc.nu, state.h, params.get("attn.w_ev"), params.get("attn.w_eh"),
                          params.get("attn.w_s"), attn, alpha, vhat);
    GeneratedBlock<T> block = decode_block(vhat);
    out.alphas.push_back(std::move(alpha));
    out.vhats.push_back(std::move(vhat));
    out.blocks.push_back(std::move(block.tokens));
    out.truncated.push_back(block.truncated);
    out.block_logprobs.push_back(block.logprob);
    // the stop head decides whether the block just decoded was the last
    if (argmax_index(state.p) == STOP) break;
  }
  return out;
}

}  // namespace detail

template <typename T>
DecodeResult<T> predict_greedy(const TensorT<T>& image, const ParamsT<T>& params,
                               const ModelConfig& cfg) {
  return detail::predict_impl(image, params, cfg, [&](const TensorT<T>& vhat) {
    return token_decode_greedy(params, cfg, vhat);
  });
}

template <typename T>
DecodeResult<T> predict_beam(const TensorT<T>& image, const ParamsT<T>& params,
                             const ModelConfig& cfg, int width) {
  return detail::predict_impl(image, params, cfg, [&](const TensorT<T>& vhat) {
    return token_decode_beam(params, cfg, vhat, width);
  });
}

}  // namespace guicoder::model
