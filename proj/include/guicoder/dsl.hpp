#pragma once

#include <cctype>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "guicoder/tensor.hpp"

// The GUI layout language: a fixed 13-token vocabulary, a two-level
// grammar (stack of rows, rows of leaves), and the block segmentation
// used by the hierarchical decoder.

namespace guicoder::dsl {

using TokenId = int;
using TokenSeq = std::vector<TokenId>;

enum : TokenId {
  PAD = 0,
  BLOCK_END = 1,
  OPEN = 2,   // "{"
  CLOSE = 3,  // "}"
  STACK = 4,
  ROW = 5,
  LABEL = 6,
  BTN = 7,
  SWITCH = 8,
  SLIDER = 9,
  IMG = 10,
  TEXT = 11,
  CHECK = 12,
};

constexpr int kVocabSize = 13;
constexpr TokenId kFirstLeaf = LABEL;
constexpr int kLeafCount = 7;

inline bool is_leaf_token(TokenId t) { return t >= kFirstLeaf && t < kVocabSize; }
inline bool is_container_token(TokenId t) { return t == STACK || t == ROW; }

struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, TokenId> index;

  int size() const { return int(tokens.size()); }
  const std::string& name(TokenId id) const { return tokens.at(std::size_t(id)); }
};

inline const Vocab& vocab() {
  static const Vocab v = [] {
    Vocab out;
    out.tokens = {"PAD", "BLOCK-END", "{", "}",   "stack", "row",  "label",
                  "btn", "switch",    "slider", "img", "text", "check"};
    for (TokenId i = 0; i < TokenId(out.tokens.size()); ++i)
      out.index.emplace(out.tokens[std::size_t(i)], i);
    return out;
  }();
  return v;
}

struct DslError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownToken : DslError {
  std::string word;
  std::size_t position;  // token index in the source
  UnknownToken(std::string w, std::size_t pos)
      : DslError("unknown token '" + w + "' at position " + std::to_string(pos)),
        word(std::move(w)),
        position(pos) {}
};

struct SyntaxError : DslError {
  std::size_t position;  // token index where parsing failed
  std::string expected;
  SyntaxError(std::size_t pos, std::string exp)
      : DslError("syntax error at token " + std::to_string(pos) + ": expected " + exp),
        position(pos),
        expected(std::move(exp)) {}
};

struct NotAProgram : DslError {
  using DslError::DslError;
};

struct MalformedBlock : DslError {
  using DslError::DslError;
};

// Tree form. Containers carry children; leaves have none.
struct Node {
  TokenId tag = STACK;
  std::vector<Node> children;

  bool is_container() const { return is_container_token(tag); }
};
using ProgramAst = Node;

using BlockSeq = std::vector<TokenSeq>;

inline TokenSeq tokenize(const std::string& text) {
  const Vocab& v = vocab();
  TokenSeq out;
  std::size_t i = 0, n = text.size(), pos = 0;
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= n) break;
    std::size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string word = text.substr(i, j - i);
    auto it = v.index.find(word);
    if (it == v.index.end()) throw UnknownToken(word, pos);
    out.push_back(it->second);
    ++pos;
    i = j;
  }
  return out;
}

namespace detail {

// container := tag "{" item+ "}" where items under a stack are containers
// and items under a row are leaves or containers.
inline Node parse_container(const TokenSeq& seq, std::size_t& i) {
  Node node;
  node.tag = seq[i];
  ++i;
  if (i >= seq.size() || seq[i] != OPEN) throw SyntaxError(i, "'{'");
  ++i;
  bool in_row = node.tag == ROW;
  while (true) {
    if (i >= seq.size()) throw SyntaxError(i, "'}'");
    TokenId t = seq[i];
    if (t == CLOSE) {
      if (node.children.empty()) throw SyntaxError(i, "non-empty container");
      ++i;
      return node;
    }
    if (is_container_token(t)) {
      node.children.push_back(parse_container(seq, i));
    } else if (is_leaf_token(t) && in_row) {
      node.children.push_back(Node{t, {}});
      ++i;
    } else {
      throw SyntaxError(i, in_row ? "leaf, container or '}'" : "container or '}'");
    }
  }
}

inline void append_tokens(const Node& node, TokenSeq& out) {
  out.push_back(node.tag);
  if (node.is_container()) {
    out.push_back(OPEN);
    for (const Node& c : node.children) append_tokens(c, out);
    out.push_back(CLOSE);
  }
}

}  // namespace detail

inline ProgramAst parse(const TokenSeq& seq) {
  if (seq.empty() || seq[0] != STACK) throw SyntaxError(0, "'stack'");
  std::size_t i = 0;
  // the root is allowed to be empty: "stack { }" is the degenerate program
  if (seq.size() >= 3 && seq[1] == OPEN && seq[2] == CLOSE) {
    if (seq.size() > 3) throw SyntaxError(3, "end of input");
    return ProgramAst{STACK, {}};
  }
  Node root = detail::parse_container(seq, i);
  if (i != seq.size()) throw SyntaxError(i, "end of input");
  return root;
}

inline TokenSeq to_tokens(const ProgramAst& ast) {
  TokenSeq out;
  detail::append_tokens(ast, out);
  return out;
}

inline std::string serialize(const ProgramAst& ast) {
  const Vocab& v = vocab();
  TokenSeq toks = to_tokens(ast);
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += v.name(toks[i]);
  }
  return out;
}

// Splits a parsed program into decoder blocks: drop the leading
// "stack {" and the final "}", then cut the remainder at every
// depth-1 closing brace. Each block keeps its leading container token
// and gets a terminal BLOCK-END.
inline BlockSeq blockify(const TokenSeq& seq) {
  try {
    parse(seq);
  } catch (const DslError& e) {
    throw NotAProgram(std::string("not a program: ") + e.what());
  }
  BlockSeq blocks;
  std::size_t begin = 2, end = seq.size() - 1;  // body between "stack {" and "}"
  std::size_t i = begin;
  while (i < end) {
    std::size_t start = i;
    int depth = 0;
    bool opened = false;
    while (i < end) {
      if (seq[i] == OPEN) {
        ++depth;
        opened = true;
      } else if (seq[i] == CLOSE) {
        --depth;
        if (opened && depth == 0) break;
      }
      ++i;
    }
    TokenSeq block(seq.begin() + long(start), seq.begin() + long(i + 1));
    block.push_back(BLOCK_END);
    blocks.push_back(std::move(block));
    ++i;
  }
  return blocks;
}

inline TokenSeq deblockify(const BlockSeq& blocks) {
  TokenSeq out = {STACK, OPEN};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const TokenSeq& block = blocks[b];
    if (block.empty() || block.back() != BLOCK_END)
      throw MalformedBlock("block " + std::to_string(b) + " lacks terminal BLOCK-END");
    int depth = 0;
    for (std::size_t i = 0; i + 1 < block.size(); ++i) {
      if (block[i] == BLOCK_END)
        throw MalformedBlock("block " + std::to_string(b) + " has interior BLOCK-END");
      if (block[i] == OPEN) ++depth;
      if (block[i] == CLOSE && --depth < 0)
        throw MalformedBlock("block " + std::to_string(b) + " is unbalanced");
      out.push_back(block[i]);
    }
    if (depth != 0) throw MalformedBlock("block " + std::to_string(b) + " is unbalanced");
  }
  out.push_back(CLOSE);
  return out;
}

// C x K matrix, one 1-of-K row per token.
template <typename T = float>
TensorT<T> one_hot(const TokenSeq& seq, const Vocab& v = vocab()) {
  int k = v.size();
  TensorT<T> out({int(seq.size()), k});
  for (std::size_t i = 0; i < seq.size(); ++i) out.at(int(i), seq[i]) = T(1);
  return out;
}

}  // namespace guicoder::dsl
