#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "guicoder/model.hpp"
#include "guicoder/synth.hpp"
#include "guicoder/train.hpp"

// Flat key=value run configuration ('#' comments, one pair per line).
// A preset key re-bases every default; explicit keys override it.

namespace guicoder::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string preset = "desk";
  // generator
  int min_rows = 2, max_rows = 6, min_leaves = 1, max_leaves = 4;
  int image_size = 64;
  std::uint64_t seed = 1;
  // model
  int feat_dim = 32, hidden = 64, embed = 64, attn_dim = 32;
  int max_blocks = 32, max_tokens_per_block = 64;
  double dropout = 0.0;
  // training
  double lr = 0.001, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, clip_norm = 5.0;
  int batch = 8, epochs = 10, threads = 1;
  long long steps = 0;

  model::ModelConfig model_config() const {
    model::ModelConfig m;
    m.image_size = image_size;
    m.feat_dim = feat_dim;
    m.hidden = hidden;
    m.embed = embed;
    m.attn_dim = attn_dim;
    m.max_blocks = max_blocks;
    m.max_tokens_per_block = max_tokens_per_block;
    m.dropout = dropout;
    return m;
  }

  synth::GenConfig gen_config() const {
    synth::GenConfig g;
    g.min_rows = min_rows;
    g.max_rows = max_rows;
    g.min_leaves = min_leaves;
    g.max_leaves = max_leaves;
    g.image_size = image_size;
    g.seed = seed;
    return g;
  }

  train::TrainOptions train_options() const {
    train::TrainOptions t;
    t.epochs = epochs;
    t.max_steps = steps;
    t.batch = batch;
    t.lr = lr;
    t.beta1 = beta1;
    t.beta2 = beta2;
    t.eps = eps;
    t.clip_norm = clip_norm;
    t.seed = seed;
    t.threads = threads;
    return t;
  }
};

inline RunConfig make_preset(const std::string& name) {
  if (name == "desk") {
    return RunConfig{};  // desk is the baseline: 64px, H=E=64, A=D=32, batch 8
  }
  if (name == "paper") {
    RunConfig c;
    c.preset = "paper";
    c.image_size = 256;
    c.feat_dim = 128;
    c.hidden = 512;
    c.embed = 512;
    c.attn_dim = 256;
    c.dropout = 0.5;
    c.batch = 128;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

namespace detail {

inline void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto to_int = [&](const std::string& v) {
    std::size_t used = 0;
    int out = std::stoi(v, &used);
    if (used != v.size()) throw ConfigError("bad integer for " + key + ": " + v);
    return out;
  };
  auto to_f = [&](const std::string& v) {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw ConfigError("bad number for " + key + ": " + v);
    return out;
  };
  if (key == "min_rows") cfg.min_rows = to_int(value);
  else if (key == "max_rows") cfg.max_rows = to_int(value);
  else if (key == "min_leaves") cfg.min_leaves = to_int(value);
  else if (key == "max_leaves") cfg.max_leaves = to_int(value);
  else if (key == "image_size") cfg.image_size = to_int(value);
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "feat_dim") cfg.feat_dim = to_int(value);
  else if (key == "hidden") cfg.hidden = to_int(value);
  else if (key == "embed") cfg.embed = to_int(value);
  else if (key == "attn_dim") cfg.attn_dim = to_int(value);
  else if (key == "max_blocks") cfg.max_blocks = to_int(value);
  else if (key == "max_tokens_per_block") cfg.max_tokens_per_block = to_int(value);
  else if (key == "dropout") cfg.dropout = to_f(value);
  else if (key == "lr") cfg.lr = to_f(value);
  else if (key == "beta1") cfg.beta1 = to_f(value);
  else if (key == "beta2") cfg.beta2 = to_f(value);
  else if (key == "eps") cfg.eps = to_f(value);
  else if (key == "clip_norm") cfg.clip_norm = to_f(value);
  else if (key == "batch") cfg.batch = to_int(value);
  else if (key == "epochs") cfg.epochs = to_int(value);
  else if (key == "steps") cfg.steps = std::stoll(value);
  else if (key == "threads") cfg.threads = to_int(value);
  else throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
  // first pass finds the preset so later keys override it
  RunConfig cfg;
  std::istringstream pre(text);
  std::string line;
  while (std::getline(pre, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kv;
    if (!(ls >> kv)) continue;
    auto eq = kv.find('=');
    if (eq != std::string::npos && kv.substr(0, eq) == "preset")
      cfg = make_preset(kv.substr(eq + 1));
  }
  std::istringstream in(text);
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kv;
    while (ls >> kv) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
      std::string key = kv.substr(0, eq);
      if (key == "preset") continue;
      detail::apply_key(cfg, key, kv.substr(eq + 1));
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

}  // namespace guicoder::config
