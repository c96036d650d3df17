// guicoder: train and run the GUI-screenshot-to-DSL model, generate
// synthetic datasets, and inspect the pieces. Exit codes: 0 ok,
// 1 runtime/IO failure, 2 usage, 3 verification failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "guicoder/config.hpp"
#include "guicoder/dsl.hpp"
#include "guicoder/gradcheck.hpp"
#include "guicoder/image.hpp"
#include "guicoder/metrics.hpp"
#include "guicoder/model.hpp"
#include "guicoder/render.hpp"
#include "guicoder/synth.hpp"
#include "guicoder/train.hpp"

namespace fs = std::filesystem;
using namespace guicoder;

namespace {

config::RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return config::RunConfig{};
  return config::load_config(path);
}

int env_threads(int fallback) {
  const char* env = std::getenv("GUICODER_THREADS");
  if (!env || !*env) return fallback;
  try {
    return std::max(1, std::stoi(env));
  } catch (...) {
    return fallback;
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

int cmd_gen_data(const std::string& out_dir, int n_train, int n_test, std::uint64_t seed,
                 const std::string& config_path) {
  config::RunConfig run = load_run_config(config_path);
  synth::GenConfig cfg = run.gen_config();
  cfg.seed = seed;
  synth::Manifest m = synth::build_dataset(n_train, n_test, cfg, out_dir);
  std::cout << synth::manifest_header(m) << "\n";
  std::cout << "wrote " << m.entries.size() << " examples to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_path,
              const std::string& config_path, int epochs_flag, const std::string& resume) {
  config::RunConfig run = load_run_config(config_path);
  if (epochs_flag > 0) run.epochs = epochs_flag;
  run.threads = env_threads(run.threads);
  synth::Manifest manifest = synth::load_manifest(data_dir);
  if (manifest.cfg.image_size != run.image_size) {
    std::cerr << "note: dataset images are " << manifest.cfg.image_size << "px, config says "
              << run.image_size << "px; using the dataset size\n";
    run.image_size = manifest.cfg.image_size;
  }
  model::ModelConfig cfg = run.model_config();
  Params params;
  if (!resume.empty()) {
    params = load_weights<float>(resume);
    model::ModelConfig stored = model::infer_config(params, run.image_size);
    if (stored.feat_dim != cfg.feat_dim || stored.hidden != cfg.hidden ||
        stored.embed != cfg.embed || stored.attn_dim != cfg.attn_dim)
      throw CorruptWeights("resume weights do not match the configured architecture");
  } else {
    params = model::build_params<float>(cfg, run.seed);
  }

  std::ofstream log(out_path + ".log", resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot open " + out_path + ".log");
  struct Tee : std::streambuf {
    std::streambuf *a, *b;
    int overflow(int c) override {
      if (c != EOF) {
        a->sputc(char(c));
        b->sputc(char(c));
      }
      return c;
    }
  } tee;
  tee.a = log.rdbuf();
  tee.b = std::cerr.rdbuf();
  std::ostream tee_stream(&tee);

  train::train(manifest, data_dir, cfg, run.train_options(), params, tee_stream);
  save_weights(params, out_path);
  std::cout << "wrote " << out_path << " after " << params.t << " steps\n";
  return 0;
}

int cmd_predict(const std::string& weights_path, const std::string& image_path, int beam,
                const std::string& dump_attn, const std::string& html_out,
                const std::string& config_path) {
  Params params = load_weights<float>(weights_path);
  Image img = read_ppm(image_path);
  if (img.width != img.height) throw PpmFormatError("input image must be square");
  model::ModelConfig cfg = model::infer_config(params, img.width);
  if (!config_path.empty()) {
    config::RunConfig run = config::load_config(config_path);
    cfg.max_blocks = run.max_blocks;
    cfg.max_tokens_per_block = run.max_tokens_per_block;
  }
  Tensor input = image_to_tensor(img);
  model::DecodeResult<float> result = beam > 1 ? model::predict_beam(input, params, cfg, beam)
                                               : model::predict_greedy(input, params, cfg);
  dsl::TokenSeq program = result.program();
  std::string text;
  for (std::size_t i = 0; i < program.size(); ++i) {
    if (i) text += ' ';
    text += dsl::vocab().name(program[i]);
  }
  std::cout << text << "\n";
  if (!dump_attn.empty()) {
    auto files = metrics::dump_attention(result, dump_attn);
    std::cerr << "wrote " << files.size() << " attention maps to " << dump_attn << "\n";
  }
  if (!html_out.empty()) {
    dsl::ProgramAst ast = dsl::parse(program);
    std::ofstream f(html_out, std::ios::trunc);
    if (!f) throw IoError("cannot open " + html_out);
    f << render::export_html(ast);
  }
  return 0;
}

int cmd_eval(const std::string& weights_path, const std::string& data_dir, int beam,
             const std::string& out_path, const std::string& config_path) {
  Params params = load_weights<float>(weights_path);
  synth::Manifest manifest = synth::load_manifest(data_dir);
  model::ModelConfig cfg = model::infer_config(params, manifest.cfg.image_size);
  if (!config_path.empty()) {
    config::RunConfig run = config::load_config(config_path);
    cfg.max_blocks = run.max_blocks;
    cfg.max_tokens_per_block = run.max_tokens_per_block;
  }
  metrics::EvalReport report =
      metrics::evaluate(params, cfg, manifest, data_dir, true, metrics::Strategy{beam});
  metrics::write_report(report, out_path);
  std::printf("token_error=%.6f\tA_bp=%.6f\n", report.token_error, report.block_accuracy);
  return 0;
}

int cmd_render(const std::string& code_path, const std::string& out_path, int size) {
  dsl::ProgramAst ast = dsl::parse(dsl::tokenize(read_text_file(code_path)));
  write_ppm(out_path, render::render(ast, size, size));
  return 0;
}

int cmd_blockify(const std::string& code_path) {
  dsl::BlockSeq blocks = dsl::blockify(dsl::tokenize(read_text_file(code_path)));
  for (const dsl::TokenSeq& block : blocks) {
    std::string line;
    for (std::size_t i = 0; i < block.size(); ++i) {
      if (i) line += ' ';
      line += dsl::vocab().name(block[i]);
    }
    std::cout << line << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  auto results = gradcheck::run_all(seed);
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-13s max_rel_err=%.3e tol=%.0e %s\n", r.name.c_str(), r.max_rel_err, r.tol,
                r.pass ? "ok" : "FAIL");
    ok &= r.pass;
  }
  if (!ok) {
    for (const auto& r : results)
      if (!r.pass) std::cerr << "gradient check failed: " << r.name << "\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical attention decoder for GUI screenshots"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic (image, code) dataset");
  std::string gen_out, gen_config;
  int gen_train = 0, gen_test = 0;
  std::uint64_t gen_seed = 1;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--train", gen_train, "training examples")->required();
  gen->add_option("--test", gen_test, "test examples")->required();
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--config", gen_config, "key=value config file");

  auto* tr = app.add_subcommand("train", "train on a generated dataset");
  std::string tr_data, tr_out, tr_config, tr_resume;
  int tr_epochs = 0;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "weights output path")->required();
  tr->add_option("--config", tr_config, "key=value config file");
  tr->add_option("--epochs", tr_epochs, "override epochs");
  tr->add_option("--resume", tr_resume, "resume from a weights file");

  auto* pr = app.add_subcommand("predict", "decode one screenshot to DSL text");
  std::string pr_weights, pr_image, pr_attn, pr_html, pr_config;
  int pr_beam = 1;
  pr->add_option("--weights", pr_weights, "weights file")->required();
  pr->add_option("--image", pr_image, "input PPM screenshot")->required();
  pr->add_option("--beam", pr_beam, "beam width (1 = greedy)");
  pr->add_option("--dump-attn", pr_attn, "directory for attention PGMs");
  pr->add_option("--html", pr_html, "also emit an HTML rendering");
  pr->add_option("--config", pr_config, "key=value config file");

  auto* ev = app.add_subcommand("eval", "evaluate on a dataset's test split");
  std::string ev_weights, ev_data, ev_out = "eval.txt", ev_config;
  int ev_beam = 0;
  ev->add_option("--weights", ev_weights, "weights file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--beam", ev_beam, "beam width (0/1 = greedy)");
  ev->add_option("--out", ev_out, "report path");
  ev->add_option("--config", ev_config, "key=value config file");

  auto* rd = app.add_subcommand("render", "rasterize a .gui program to PPM");
  std::string rd_code, rd_out;
  int rd_size = 128;
  rd->add_option("--code", rd_code, ".gui source file")->required();
  rd->add_option("--out", rd_out, "output PPM path")->required();
  rd->add_option("--size", rd_size, "image side in pixels");

  auto* bl = app.add_subcommand("blockify", "print a program's decoder blocks");
  std::string bl_code;
  bl->add_option("--code", bl_code, ".gui source file")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  std::uint64_t gc_seed = 1;
  gc->add_option("--seed", gc_seed, "check seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_out, gen_train, gen_test, gen_seed, gen_config);
    if (tr->parsed()) return cmd_train(tr_data, tr_out, tr_config, tr_epochs, tr_resume);
    if (pr->parsed()) return cmd_predict(pr_weights, pr_image, pr_beam, pr_attn, pr_html, pr_config);
    if (ev->parsed()) return cmd_eval(ev_weights, ev_data, ev_beam, ev_out, ev_config);
    if (rd->parsed()) return cmd_render(rd_code, rd_out, rd_size);
    if (bl->parsed()) return cmd_blockify(bl_code);
    if (gc->parsed()) return cmd_gradcheck(gc_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
