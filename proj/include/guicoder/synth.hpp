#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "guicoder/dsl.hpp"
#include "guicoder/image.hpp"
#include "guicoder/prng.hpp"
#include "guicoder/render.hpp"

// Seeded program generator and dataset builder. Every example draws from
// its own stream (seed XOR id) so builds are order-independent and
// byte-reproducible.

namespace guicoder::synth {

struct GenConfig {
  int min_rows = 2, max_rows = 6;
  int min_leaves = 1, max_leaves = 4;
  int image_size = 128;
  std::uint64_t seed = 1;

  void validate() const {
    if (min_rows < 1 || min_rows > max_rows) throw std::invalid_argument("bad row range");
    if (min_leaves < 1 || min_leaves > max_leaves) throw std::invalid_argument("bad leaf range");
    if (image_size < 32) throw std::invalid_argument("image_size must be >= 32");
  }
};

// Draw order is fixed: row count, then per row its leaf count followed by
// that row's leaf tags.
inline dsl::ProgramAst gen_program(const GenConfig& cfg, Prng& stream) {
  cfg.validate();
  dsl::ProgramAst root{dsl::STACK, {}};
  int rows = int(stream.next_range(std::uint64_t(cfg.min_rows), std::uint64_t(cfg.max_rows)));
  for (int r = 0; r < rows; ++r) {
    dsl::Node row{dsl::ROW, {}};
    int leaves =
        int(stream.next_range(std::uint64_t(cfg.min_leaves), std::uint64_t(cfg.max_leaves)));
    for (int l = 0; l < leaves; ++l) {
      dsl::TokenId tag = dsl::kFirstLeaf + int(stream.next_range(0, dsl::kLeafCount - 1));
      row.children.push_back(dsl::Node{tag, {}});
    }
    root.children.push_back(std::move(row));
  }
  return root;
}

struct ManifestEntry {
  int id = 0;
  std::string image_path;  // relative to the dataset dir
  std::string code_path;
  bool train = true;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  int n_train = 0, n_test = 0;
  GenConfig cfg;

  std::vector<ManifestEntry> split(bool train) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.train == train) out.push_back(e);
    return out;
  }
};

inline std::string manifest_header(const Manifest& m) {
  std::ostringstream os;
  os << "min_rows=" << m.cfg.min_rows << " max_rows=" << m.cfg.max_rows
     << " min_leaves=" << m.cfg.min_leaves << " max_leaves=" << m.cfg.max_leaves
     << " image_size=" << m.cfg.image_size << " seed=" << m.cfg.seed
     << " n_train=" << m.n_train << " n_test=" << m.n_test;
  return os.str();
}

inline Manifest build_dataset(int n_train, int n_test, const GenConfig& cfg,
                              const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  fs::create_directories(fs::path(out_dir) / "programs", ec);
  if (ec) throw IoError("cannot create dataset directories under " + out_dir);

  Manifest m;
  m.cfg = cfg;
  m.n_train = n_train;
  m.n_test = n_test;
  for (int id = 0; id < n_train + n_test; ++id) {
    Prng stream{cfg.seed ^ std::uint64_t(id)};
    dsl::ProgramAst ast = gen_program(cfg, stream);
    ManifestEntry e;
    e.id = id;
    e.image_path = "images/" + std::to_string(id) + ".ppm";
    e.code_path = "programs/" + std::to_string(id) + ".gui";
    e.train = id < n_train;
    write_ppm((fs::path(out_dir) / e.image_path).string(),
              render::render(ast, cfg.image_size, cfg.image_size));
    std::ofstream code((fs::path(out_dir) / e.code_path).string(), std::ios::trunc);
    if (!code) throw IoError("cannot write " + e.code_path);
    code << dsl::serialize(ast) << "\n";
    m.entries.push_back(std::move(e));
  }
  std::ofstream mf((fs::path(out_dir) / "manifest.txt").string(), std::ios::trunc);
  if (!mf) throw IoError("cannot write manifest.txt");
  mf << manifest_header(m) << "\n";
  for (const auto& e : m.entries)
    mf << e.id << "\t" << e.image_path << "\t" << e.code_path << "\t"
       << (e.train ? "train" : "test") << "\n";
  if (!mf) throw IoError("manifest write failed");
  return m;
}

inline Manifest load_manifest(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream f((fs::path(dir) / "manifest.txt").string());
  if (!f) throw IoError("cannot open manifest.txt in " + dir);
  Manifest m;
  std::string header;
  std::getline(f, header);
  std::istringstream hs(header);
  std::string kv;
  while (hs >> kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "min_rows") m.cfg.min_rows = std::stoi(val);
    else if (key == "max_rows") m.cfg.max_rows = std::stoi(val);
    else if (key == "min_leaves") m.cfg.min_leaves = std::stoi(val);
    else if (key == "max_leaves") m.cfg.max_leaves = std::stoi(val);
    else if (key == "image_size") m.cfg.image_size = std::stoi(val);
    else if (key == "seed") m.cfg.seed = std::stoull(val);
    else if (key == "n_train") m.n_train = std::stoi(val);
    else if (key == "n_test") m.n_test = std::stoi(val);
  }
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string split;
    ls >> e.id >> e.image_path >> e.code_path >> split;
    if (!ls) throw IoError("bad manifest line: " + line);
    e.train = split == "train";
    m.entries.push_back(std::move(e));
  }
  return m;
}

// (normalized channel-major image, token sequence)
template <typename T = float>
std::pair<TensorT<T>, dsl::TokenSeq> load_example(const std::string& image_path,
                                                  const std::string& code_path) {
  Image img = read_ppm(image_path);
  std::ifstream f(code_path);
  if (!f) throw IoError("cannot open " + code_path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return {image_to_tensor<T>(img), dsl::tokenize(text)};
}

}  // namespace guicoder::synth
