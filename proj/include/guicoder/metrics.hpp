#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "guicoder/image.hpp"
#include "guicoder/model.hpp"
#include "guicoder/synth.hpp"

// Evaluation: positional token error with a length-difference penalty,
// exact-match block partitioning accuracy, and attention-map dumps.

namespace guicoder::metrics {

// (mismatches over the overlap + |m - n|) / max(m, n, 1)
inline double token_error(const dsl::TokenSeq& pred, const dsl::TokenSeq& gt) {
  std::size_t m = pred.size(), n = gt.size();
  std::size_t overlap = std::min(m, n);
  std::size_t mismatch = 0;
  for (std::size_t i = 0; i < overlap; ++i)
    if (pred[i] != gt[i]) ++mismatch;
  mismatch += m > n ? m - n : n - m;
  return double(mismatch) / double(std::max({m, n, std::size_t(1)}));
}

// fraction of examples whose predicted block count matches exactly
inline double block_accuracy(const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) throw EmptyInput("block_accuracy: no examples");
  int hits = 0;
  for (const auto& [pred, gt] : pairs)
    if (pred == gt) ++hits;
  return double(hits) / double(pairs.size());
}

struct EvalRow {
  int id = 0;
  int tokens_pred = 0, tokens_gt = 0;
  int mismatches = 0;  // numerator of the per-example token error
  int blocks_pred = 0, blocks_gt = 0;
};

struct EvalReport {
  double token_error = 0;
  double block_accuracy = 0;
  std::vector<EvalRow> rows;
};

struct Strategy {
  int beam = 0;  // 0: greedy
};

template <typename T>
EvalReport evaluate(const ParamsT<T>& params, const model::ModelConfig& cfg,
                    const synth::Manifest& manifest, const std::string& data_dir, bool test_split,
                    Strategy strategy) {
  namespace fs = std::filesystem;
  std::vector<synth::ManifestEntry> entries = manifest.split(!test_split);
  if (entries.empty()) throw EmptyInput("evaluate: split has no examples");
  EvalReport report;
  double err_sum = 0;
  std::vector<std::pair<int, int>> block_pairs;
  for (const auto& e : entries) {
    auto [image, gt] = synth::load_example<T>((fs::path(data_dir) / e.image_path).string(),
                                              (fs::path(data_dir) / e.code_path).string());
    model::DecodeResult<T> result = strategy.beam > 0
                                        ? model::predict_beam(image, params, cfg, strategy.beam)
                                        : model::predict_greedy(image, params, cfg);
    dsl::TokenSeq pred = result.program();
    EvalRow row;
    row.id = e.id;
    row.tokens_pred = int(pred.size());
    row.tokens_gt = int(gt.size());
    std::size_t overlap = std::min(pred.size(), gt.size());
    for (std::size_t i = 0; i < overlap; ++i)
      if (pred[i] != gt[i]) ++row.mismatches;
    row.mismatches += int(pred.size() > gt.size() ? pred.size() - gt.size() : gt.size() - pred.size());
    row.blocks_pred = int(result.blocks.size());
    row.blocks_gt = int(dsl::blockify(gt).size());
    err_sum += token_error(pred, gt);
    block_pairs.emplace_back(row.blocks_pred, row.blocks_gt);
    report.rows.push_back(row);
  }
  report.token_error = err_sum / double(entries.size());
  report.block_accuracy = block_accuracy(block_pairs);
  return report;
}

inline void write_report(const EvalReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  char head[96];
  std::snprintf(head, sizeof head, "token_error=%.6f\tA_bp=%.6f", report.token_error,
                report.block_accuracy);
  f << head << "\n";
  for (const EvalRow& r : report.rows)
    f << r.id << "\t" << r.tokens_pred << "\t" << r.tokens_gt << "\t" << r.mismatches << "\t"
      << r.blocks_pred << "\t" << r.blocks_gt << "\n";
  if (!f) throw IoError("write failed: " + path);
}

// One PGM per decoded block: alpha reshaped to grid x grid and min-max
// scaled; constant maps become all-128.
template <typename T>
std::vector<std::string> dump_attention(const model::DecodeResult<T>& result,
                                        const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::vector<std::string> files;
  for (std::size_t t = 0; t < result.alphas.size(); ++t) {
    const TensorT<T>& alpha = result.alphas[t];
    T lo = alpha[0], hi = alpha[0];
    for (int i = 0; i < alpha.numel(); ++i) {
      lo = std::min(lo, alpha[i]);
      hi = std::max(hi, alpha[i]);
    }
    std::vector<std::uint8_t> gray(std::size_t(alpha.numel()), 128);
    if (hi > lo)
      for (int i = 0; i < alpha.numel(); ++i)
        gray[std::size_t(i)] =
            std::uint8_t(std::lround(255.0 * double(alpha[i] - lo) / double(hi - lo)));
    std::string path = (fs::path(out_dir) / ("alpha_" + std::to_string(t) + ".pgm")).string();
    write_pgm(path, result.grid, result.grid, gray);
    files.push_back(std::move(path));
  }
  return files;
}

}  // namespace guicoder::metrics
