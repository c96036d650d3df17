#include "guicoder/model.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "guicoder/gradcheck.hpp"
#include "guicoder/render.hpp"
#include "guicoder/synth.hpp"

using namespace guicoder;
using namespace guicoder::model;

namespace {

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.image_size = 32;
  cfg.feat_dim = 4;
  cfg.hidden = 8;
  cfg.embed = 8;
  cfg.attn_dim = 4;
  cfg.dropout = 0.0;
  return cfg;
}

Tensor random_image(int size, std::uint64_t seed) {
  Prng s{seed};
  Tensor img({3, size, size});
  for (int i = 0; i < img.numel(); ++i) img[i] = float(s.next_unit());
  return img;
}

Tensor rendered_image(const char* src, int size) {
  return image_to_tensor(render::render(dsl::parse(dsl::tokenize(src)), size, size));
}

void zero_params(Params& p) {
  for (auto& [name, t] : p.values) t.fill(0.0f);
}

}  // namespace

TEST(Encode, PaperShapeGivesL256D128) {
  ModelConfig cfg;  // paper defaults, but a smaller image keeps this quick
  cfg.image_size = 128;
  Params p = build_params<float>(cfg, 1);
  EncoderOutput<float> out = encode(random_image(128, 2), p, cfg);
  EXPECT_EQ(out.nu.shape, (std::vector<int>{256, 128}));
  EXPECT_EQ(out.vp.shape, (std::vector<int>{128}));
  EXPECT_EQ(out.grid, 16);
}

TEST(Encode, ZeroImageZeroBiasGivesZeroFeatures) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 1);  // biases are zero-initialized
  Tensor img({3, 32, 32});
  EncoderOutput<float> out = encode(img, p, cfg);
  for (int i = 0; i < out.nu.numel(); ++i) ASSERT_EQ(out.nu[i], 0.0f);
  for (int i = 0; i < out.vp.numel(); ++i) ASSERT_EQ(out.vp[i], 0.0f);
}

TEST(Encode, PooledVectorDominatesRegions) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 5);
  EncoderOutput<float> out = encode(random_image(32, 3), p, cfg);
  for (int i = 0; i < out.nu.extent(0); ++i)
    for (int c = 0; c < out.nu.extent(1); ++c) ASSERT_GE(out.vp[c], out.nu.at(i, c));
}

TEST(Encode, RejectsWrongSize) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 1);
  EXPECT_THROW(encode(random_image(64, 1), p, cfg), ShapeMismatch);
}

TEST(BlockStep, ZeroWeightsGiveSymmetricStop) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 1);
  zero_params(p);
  Tensor vp({cfg.feat_dim});
  BlockState<float> st = block_step(p, vp);
  EXPECT_NEAR(st.p[0], 0.5f, 1e-6);
  EXPECT_NEAR(st.p[1], 0.5f, 1e-6);
  // zero weights, zero initial state: h stays zero
  for (int i = 0; i < st.h.numel(); ++i) EXPECT_FLOAT_EQ(st.h[i], 0.0f);
}

TEST(BlockStep, Pure) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 8);
  Tensor vp({cfg.feat_dim});
  for (int i = 0; i < vp.numel(); ++i) vp[i] = 0.1f * float(i);
  BlockState<float> a = block_step(p, vp);
  BlockState<float> b = block_step(p, vp);
  EXPECT_EQ(a.h.data, b.h.data);
  EXPECT_EQ(a.p.data, b.p.data);
  BlockState<float> a2 = block_step(p, a);
  BlockState<float> b2 = block_step(p, b);
  EXPECT_EQ(a2.h.data, b2.h.data);
}

TEST(TokenDecode, TeacherEmitsOneLogitRowPerToken) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 2);
  Tensor vhat({cfg.feat_dim});
  dsl::TokenSeq block = {dsl::ROW, dsl::OPEN, dsl::LABEL, dsl::CLOSE, dsl::BLOCK_END};
  auto logits = token_decode_teacher(p, cfg, vhat, block);
  ASSERT_EQ(logits.size(), block.size());
  for (const auto& row : logits) ASSERT_EQ(row.numel(), cfg.vocab);
}

TEST(TokenDecode, ForcedBlockEndGivesLengthOneBlock) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 2);
  zero_params(p);
  p.get("tok.out.b")[dsl::BLOCK_END] = 10.0f;
  Tensor vhat({cfg.feat_dim});
  GeneratedBlock<float> block = token_decode_greedy(p, cfg, vhat);
  EXPECT_EQ(block.tokens, (dsl::TokenSeq{dsl::BLOCK_END}));
  EXPECT_FALSE(block.truncated);
}

TEST(TokenDecode, TruncatesWithoutBlockEnd) {
  ModelConfig cfg = micro_config();
  cfg.max_tokens_per_block = 6;
  Params p = build_params<float>(cfg, 2);
  zero_params(p);
  p.get("tok.out.b")[dsl::LABEL] = 10.0f;
  Tensor vhat({cfg.feat_dim});
  GeneratedBlock<float> block = token_decode_greedy(p, cfg, vhat);
  EXPECT_TRUE(block.truncated);
  EXPECT_EQ(block.tokens.size(), 6u);
  for (int t : block.tokens) EXPECT_EQ(t, dsl::LABEL);
}

TEST(TokenDecode, TeacherAndStepPathsAgree) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 12);
  Prng s{4};
  Tensor vhat({cfg.feat_dim});
  for (int i = 0; i < vhat.numel(); ++i) vhat[i] = float(s.next_unit());
  dsl::TokenSeq block = {dsl::ROW, dsl::OPEN, dsl::BTN, dsl::SLIDER, dsl::CLOSE, dsl::BLOCK_END};
  auto teacher = token_decode_teacher(p, cfg, vhat, block);
  TokState<float> st = token_init<float>(cfg);
  for (std::size_t j = 0; j < block.size(); ++j) {
    Tensor logits = token_step(p, st, j == 0 ? &vhat : nullptr, j == 0 ? -1 : block[j - 1]);
    ASSERT_EQ(logits.data, teacher[j].data) << "step " << j;
  }
}

TEST(ForwardTrain, UniformPredictionLossClosedForm) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 1);
  zero_params(p);
  dsl::TokenSeq gt = dsl::tokenize("stack { row { label btn } row { slider } }");
  // S = 2 blocks of 6 and 5 tokens (terminators included)
  float loss = forward_train(random_image(32, 9), gt, p, cfg, Prng{0}, false);
  double expected = 2 * std::log(2.0) + 11 * std::log(13.0);
  EXPECT_NEAR(loss, expected, 1e-3);
}

TEST(ForwardTrain, DeterministicGivenDropoutStream) {
  ModelConfig cfg = micro_config();
  cfg.dropout = 0.5;
  Params p = build_params<float>(cfg, 6);
  dsl::TokenSeq gt = dsl::tokenize("stack { row { label } row { btn img } }");
  Tensor img = random_image(32, 10);
  float a = forward_train(img, gt, p, cfg, Prng{123}, true);
  float b = forward_train(img, gt, p, cfg, Prng{123}, true);
  EXPECT_EQ(a, b);
  float c = forward_train(img, gt, p, cfg, Prng{124}, true);
  EXPECT_NE(a, c);
}

TEST(ForwardTrain, LossIsFiniteAndNonNegative) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 31);
  Grads g(p);
  float loss = forward_train(random_image(32, 4), dsl::tokenize("stack { row { check } }"), p,
                             cfg, Prng{0}, false, &g);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GE(loss, 0.0f);
}

TEST(ForwardTrain, RejectsNonProgramsAndEmptyPrograms) {
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 1);
  Tensor img = random_image(32, 1);
  EXPECT_THROW(forward_train(img, dsl::TokenSeq{dsl::ROW}, p, cfg, Prng{0}, false),
               dsl::NotAProgram);
  EXPECT_THROW(forward_train(img, dsl::tokenize("stack { }"), p, cfg, Prng{0}, false),
               dsl::NotAProgram);
}

TEST(ForwardTrain, TeacherForcedtoStepCountsMatchSpec) {
  // gradient fan-in sanity: tok.out.b's gradient counts one unit of
  // softmax mass per teacher-forced step, so its sum is ~0 only when
  // every step contributed its row
  ModelConfig cfg = micro_config();
  Params p = build_params<float>(cfg, 14);
  Grads g(p);
  dsl::TokenSeq gt = dsl::tokenize("stack { row { label btn } row { slider } }");
  forward_train(random_image(32, 8), gt, p, cfg, Prng{0}, false, &g);
  // each CE step's dlogits sums to zero, so the bias gradient must too
  double sum = 0;
  for (float v : g.of("tok.out.b").data) sum += v;
  EXPECT_NEAR(sum, 0.0, 1e-4);
  double stop_sum = 0;
  for (float v : g.of("block.stop.b").data) stop_sum += v;
  EXPECT_NEAR(stop_sum, 0.0, 1e-5);
}

TEST(Predict, MaxBlocksCapsOutput) {
  ModelConfig cfg = micro_config();
  cfg.max_blocks = 1;
  cfg.max_tokens_per_block = 5;
  Params p = build_params<float>(cfg, 21);
  DecodeResult<float> r = predict_greedy(random_image(32, 2), p, cfg);
  EXPECT_EQ(r.blocks.size(), 1u);
}

TEST(Predict, ProgramAlwaysStartsWithStackBrace) {
  ModelConfig cfg = micro_config();
  cfg.max_blocks = 3;
  cfg.max_tokens_per_block = 5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Params p = build_params<float>(cfg, seed);
    dsl::TokenSeq prog = predict_greedy(random_image(32, seed), p, cfg).program();
    ASSERT_GE(prog.size(), 3u);
    EXPECT_EQ(prog[0], dsl::STACK);
    EXPECT_EQ(prog[1], dsl::OPEN);
    EXPECT_EQ(prog.back(), dsl::CLOSE);
    // assembly output is always brace-balanced
    int depth = 0;
    for (std::size_t i = 1; i < prog.size(); ++i) {
      if (prog[i] == dsl::OPEN) ++depth;
      if (prog[i] == dsl::CLOSE) --depth;
      ASSERT_GE(depth, 0);
    }
    EXPECT_EQ(depth, 0);
  }
}

TEST(Predict, AlphasAreDistributionsAndVhatInHull) {
  ModelConfig cfg = micro_config();
  cfg.max_blocks = 4;
  cfg.max_tokens_per_block = 6;
  Params p = build_params<float>(cfg, 33);
  Tensor img = random_image(32, 5);
  EncoderOutput<float> enc = encode(img, p, cfg);
  DecodeResult<float> r = predict_greedy(img, p, cfg);
  ASSERT_FALSE(r.alphas.empty());
  for (std::size_t t = 0; t < r.alphas.size(); ++t) {
    double sum = 0;
    for (int i = 0; i < r.alphas[t].numel(); ++i) sum += r.alphas[t][i];
    EXPECT_NEAR(sum, 1.0, 1e-6);
    for (int c = 0; c < cfg.feat_dim; ++c) {
      float lo = enc.nu.at(0, c), hi = enc.nu.at(0, c);
      for (int i = 0; i < enc.nu.extent(0); ++i) {
        lo = std::min(lo, enc.nu.at(i, c));
        hi = std::max(hi, enc.nu.at(i, c));
      }
      ASSERT_GE(r.vhats[t][c], lo - 1e-5f);
      ASSERT_LE(r.vhats[t][c], hi + 1e-5f);
    }
  }
}

TEST(Beam, WidthOneMatchesGreedyExactly) {
  ModelConfig cfg = micro_config();
  cfg.max_blocks = 4;
  cfg.max_tokens_per_block = 8;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Params p = build_params<float>(cfg, seed * 7 + 1);
    Tensor img = random_image(32, seed);
    DecodeResult<float> g = predict_greedy(img, p, cfg);
    DecodeResult<float> b = predict_beam(img, p, cfg, 1);
    ASSERT_EQ(g.blocks, b.blocks) << "seed " << seed;
    ASSERT_EQ(g.program(), b.program());
  }
}

TEST(Beam, WiderBeamNeverScoresWorse) {
  ModelConfig cfg = micro_config();
  cfg.max_blocks = 3;
  cfg.max_tokens_per_block = 6;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Params p = build_params<float>(cfg, seed + 100);
    Tensor img = random_image(32, seed);
    DecodeResult<float> g = predict_greedy(img, p, cfg);
    DecodeResult<float> b = predict_beam(img, p, cfg, 3);
    ASSERT_EQ(g.blocks.size(), b.blocks.size());
    for (std::size_t t = 0; t < g.blocks.size(); ++t)
      ASSERT_GE(b.block_logprobs[t], g.block_logprobs[t] - 1e-9) << "seed " << seed;
  }
}

TEST(Beam, ExhaustiveWidthMatchesBruteForceOracle) {
  ModelConfig cfg = micro_config();
  cfg.max_tokens_per_block = 4;
  Params p = build_params<float>(cfg, 55);
  Prng s{17};
  Tensor vhat({cfg.feat_dim});
  for (int i = 0; i < vhat.numel(); ++i) vhat[i] = float(s.next_unit() * 2 - 1);

  // brute force: every sequence of <= 4 tokens where BLOCK-END terminates,
  // scored by teacher forcing (independent of the beam implementation)
  dsl::TokenSeq best_seq;
  double best_logp = -1e300;
  auto consider = [&](const dsl::TokenSeq& seq) {
    auto logits = token_decode_teacher(p, cfg, vhat, seq);
    double logp = 0;
    for (std::size_t j = 0; j < seq.size(); ++j) {
      Tensor probs = nn::softmax(logits[j]);
      logp += std::log(double(probs[seq[j]]));
    }
    if (logp > best_logp || (logp == best_logp && seq < best_seq)) {
      best_logp = logp;
      best_seq = seq;
    }
  };
  std::function<void(dsl::TokenSeq&)> walk = [&](dsl::TokenSeq& prefix) {
    for (int tok = 0; tok < cfg.vocab; ++tok) {
      prefix.push_back(tok);
      if (tok == dsl::BLOCK_END || int(prefix.size()) == cfg.max_tokens_per_block)
        consider(prefix);
      else
        walk(prefix);
      prefix.pop_back();
    }
  };
  dsl::TokenSeq prefix;
  walk(prefix);

  GeneratedBlock<float> beam = token_decode_beam(p, cfg, vhat, 30000);
  EXPECT_EQ(beam.tokens, best_seq);
  EXPECT_NEAR(beam.logprob, best_logp, 1e-9);
}

TEST(GradCheck, EndToEndMicroModel) {
  auto r = gradcheck::check_end_to_end(1);
  EXPECT_TRUE(r.pass) << "max rel err " << r.max_rel_err;
}
