#include "guicoder/dsl.hpp"

#include <gtest/gtest.h>

#include "guicoder/prng.hpp"
#include "guicoder/synth.hpp"

using namespace guicoder;
using namespace guicoder::dsl;

TEST(Vocab, CanonicalIdsAreFixed) {
  const Vocab& v = vocab();
  ASSERT_EQ(v.size(), 13);
  EXPECT_EQ(v.index.at("PAD"), PAD);
  EXPECT_EQ(v.index.at("BLOCK-END"), BLOCK_END);
  EXPECT_EQ(v.index.at("{"), OPEN);
  EXPECT_EQ(v.index.at("}"), CLOSE);
  EXPECT_EQ(v.index.at("stack"), STACK);
  EXPECT_EQ(v.index.at("row"), ROW);
  EXPECT_EQ(v.index.at("label"), LABEL);
  EXPECT_EQ(v.index.at("btn"), BTN);
  EXPECT_EQ(v.index.at("switch"), SWITCH);
  EXPECT_EQ(v.index.at("slider"), SLIDER);
  EXPECT_EQ(v.index.at("img"), IMG);
  EXPECT_EQ(v.index.at("text"), TEXT);
  EXPECT_EQ(v.index.at("check"), CHECK);
  for (int i = 0; i < v.size(); ++i) EXPECT_EQ(v.index.at(v.name(i)), i);
}

TEST(Tokenize, Basic) {
  EXPECT_EQ(tokenize("stack { }"), (TokenSeq{STACK, OPEN, CLOSE}));
  EXPECT_EQ(tokenize(""), TokenSeq{});
  EXPECT_EQ(tokenize("  stack \n\t{ label }  "), (TokenSeq{STACK, OPEN, LABEL, CLOSE}));
}

TEST(Tokenize, UnknownTokenCarriesWordAndPosition) {
  try {
    tokenize("stack { bogus }");
    FAIL() << "expected UnknownToken";
  } catch (const UnknownToken& e) {
    EXPECT_EQ(e.word, "bogus");
    EXPECT_EQ(e.position, 2u);
  }
}

TEST(Parse, TwoLeafRow) {
  ProgramAst ast = parse(tokenize("stack { row { label btn } }"));
  ASSERT_EQ(ast.tag, STACK);
  ASSERT_EQ(ast.children.size(), 1u);
  EXPECT_EQ(ast.children[0].tag, ROW);
  ASSERT_EQ(ast.children[0].children.size(), 2u);
  EXPECT_EQ(ast.children[0].children[0].tag, LABEL);
  EXPECT_EQ(ast.children[0].children[1].tag, BTN);
}

TEST(Parse, RejectsEmptyContainer) {
  EXPECT_THROW(parse(tokenize("stack { row { } }")), SyntaxError);
}

TEST(Parse, RejectsUnclosedBrace) {
  EXPECT_THROW(parse(tokenize("stack { row { label }")), SyntaxError);
}

TEST(Parse, RejectsMisplacedTokens) {
  EXPECT_THROW(parse(tokenize("row { label }")), SyntaxError);
  EXPECT_THROW(parse(tokenize("stack { label }")), SyntaxError);
  EXPECT_THROW(parse(tokenize("stack { row { BLOCK-END } }")), SyntaxError);
  EXPECT_THROW(parse(tokenize("stack { row { label } } row")), SyntaxError);
}

TEST(Parse, AcceptsNestedStackInsideRow) {
  ProgramAst ast = parse(tokenize("stack { row { stack { row { label } } btn } }"));
  EXPECT_EQ(ast.children[0].children[0].tag, STACK);
  EXPECT_EQ(ast.children[0].children[1].tag, BTN);
}

TEST(Parse, EmptyProgramIsValid) {
  ProgramAst ast = parse(tokenize("stack { }"));
  EXPECT_TRUE(ast.children.empty());
}

TEST(Serialize, CanonicalForm) {
  ProgramAst ast{STACK, {Node{ROW, {Node{LABEL, {}}}}}};
  EXPECT_EQ(serialize(ast), "stack { row { label } }");
}

TEST(Serialize, RoundTripFixedPoint) {
  for (const char* src : {"stack { row { label btn } }", "stack { row { slider } row { img check } }",
                          "stack { row { stack { row { text } } btn } }"}) {
    EXPECT_EQ(serialize(parse(tokenize(src))), src);
  }
}

TEST(Blockify, TwoBlocks) {
  auto blocks = blockify(tokenize("stack { row { label btn } row { slider } }"));
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0], (TokenSeq{ROW, OPEN, LABEL, BTN, CLOSE, BLOCK_END}));
  EXPECT_EQ(blocks[1], (TokenSeq{ROW, OPEN, SLIDER, CLOSE, BLOCK_END}));
}

TEST(Blockify, NestedContainerStaysInsideItsBlock) {
  auto blocks = blockify(tokenize("stack { row { stack { row { label } } btn } }"));
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0],
            (TokenSeq{ROW, OPEN, STACK, OPEN, ROW, OPEN, LABEL, CLOSE, CLOSE, BTN, CLOSE, BLOCK_END}));
}

TEST(Blockify, EmptyProgramHasNoBlocks) {
  EXPECT_TRUE(blockify(tokenize("stack { }")).empty());
}

TEST(Blockify, RejectsNonPrograms) {
  EXPECT_THROW(blockify(tokenize("row { label }")), NotAProgram);
  EXPECT_THROW(blockify(TokenSeq{}), NotAProgram);
}

TEST(Deblockify, InvertsBlockify) {
  TokenSeq seq = tokenize("stack { row { label btn } row { slider } }");
  EXPECT_EQ(deblockify(blockify(seq)), seq);
}

TEST(Deblockify, EmptyGivesEmptyProgram) {
  EXPECT_EQ(deblockify({}), tokenize("stack { }"));
}

TEST(Deblockify, RejectsMalformedBlocks) {
  EXPECT_THROW(deblockify({TokenSeq{ROW, OPEN, CLOSE}}), MalformedBlock);           // no terminator
  EXPECT_THROW(deblockify({TokenSeq{ROW, OPEN, BLOCK_END}}), MalformedBlock);       // unbalanced
  EXPECT_THROW(deblockify({TokenSeq{ROW, CLOSE, OPEN, BLOCK_END}}), MalformedBlock);
  EXPECT_THROW(deblockify({TokenSeq{BLOCK_END, ROW, OPEN, CLOSE, BLOCK_END}}), MalformedBlock);
}

TEST(OneHot, RowsAreUnitVectors) {
  Tensor t = one_hot(TokenSeq{0});
  ASSERT_EQ(t.shape, (std::vector<int>{1, 13}));
  EXPECT_FLOAT_EQ(t.at(0, 0), 1.0f);
  for (int j = 1; j < 13; ++j) EXPECT_FLOAT_EQ(t.at(0, j), 0.0f);

  Tensor e = one_hot(TokenSeq{});
  EXPECT_EQ(e.shape, (std::vector<int>{0, 13}));

  Tensor m = one_hot(tokenize("stack { row { label } }"));
  for (int i = 0; i < m.extent(0); ++i) {
    float sum = 0;
    for (int j = 0; j < m.extent(1); ++j) sum += m.at(i, j);
    EXPECT_FLOAT_EQ(sum, 1.0f);
  }
}

// 1000 generated programs: serialize/parse/tokenize identity, block
// inverse, block count == row count.
TEST(Properties, GeneratedProgramRoundTrips) {
  synth::GenConfig cfg;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Prng stream{seed};
    ProgramAst ast = synth::gen_program(cfg, stream);
    std::string text = serialize(ast);
    TokenSeq toks = tokenize(text);
    ASSERT_EQ(serialize(parse(toks)), text) << "seed " << seed;
    auto blocks = blockify(toks);
    ASSERT_EQ(deblockify(blocks), toks) << "seed " << seed;
    ASSERT_EQ(blocks.size(), ast.children.size()) << "seed " << seed;
  }
}
