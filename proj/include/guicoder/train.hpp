#pragma once

#include <atomic>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>
#include <vector>

#include "guicoder/model.hpp"
#include "guicoder/synth.hpp"

// Mini-batch Adam training. Everything that affects the math is keyed by
// (seed, epoch) or (seed, step, slot), and the epoch/step position is
// derived from the Adam counter in the weights, so a resumed run is
// bit-identical to an uninterrupted one.

namespace guicoder::train {

struct TrainOptions {
  int epochs = 10;
  long long max_steps = 0;  // 0: epochs * steps_per_epoch
  int batch = 8;
  double lr = 0.001, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  int threads = 1;
};

namespace detail {

inline std::vector<int> epoch_permutation(int n, std::uint64_t seed, long long epoch) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[std::size_t(i)] = i;
  Prng stream = derive_stream(seed, 'S', std::uint64_t(epoch));
  for (int i = n - 1; i > 0; --i) {
    int j = int(stream.next_range(0, std::uint64_t(i)));
    std::swap(perm[std::size_t(i)], perm[std::size_t(j)]);
  }
  return perm;
}

}  // namespace detail

template <typename T>
void train(const synth::Manifest& manifest, const std::string& data_dir,
           const model::ModelConfig& cfg, const TrainOptions& opt, ParamsT<T>& params,
           std::ostream& log) {
  namespace fs = std::filesystem;
  std::vector<synth::ManifestEntry> examples = manifest.split(true);
  int n = int(examples.size());
  if (n == 0) throw EmptyInput("training split is empty");
  int batch = std::min(opt.batch, n);
  long long steps_per_epoch = (n + batch - 1) / batch;
  long long target = opt.max_steps > 0 ? opt.max_steps : (long long)opt.epochs * steps_per_epoch;

  long long cached_epoch = -1;
  std::vector<int> perm;
  double epoch_loss = 0;
  long long epoch_batches = 0;

  while (params.t < target) {
    long long step = params.t;  // 0-based position of the step we are about to take
    long long epoch = step / steps_per_epoch;
    long long pos = step % steps_per_epoch;
    if (epoch != cached_epoch) {
      perm = detail::epoch_permutation(n, opt.seed, epoch);
      cached_epoch = epoch;
      epoch_loss = 0;
      epoch_batches = 0;
    }
    int begin = int(pos) * batch;
    int count = std::min(batch, n - begin);

    std::vector<double> losses(static_cast<std::size_t>(count), 0.0);
    std::vector<GradsT<T>> grads(static_cast<std::size_t>(count));
    auto run_slot = [&](int k) {
      const synth::ManifestEntry& e = examples[std::size_t(perm[std::size_t(begin + k)])];
      auto [image, tokens] =
          synth::load_example<T>((fs::path(data_dir) / e.image_path).string(),
                                 (fs::path(data_dir) / e.code_path).string());
      grads[std::size_t(k)] = GradsT<T>(params);
      Prng drop = derive_stream(opt.seed, 'D', std::uint64_t(step), std::uint64_t(k));
      losses[std::size_t(k)] = double(model::forward_train(image, tokens, params, cfg, drop, true,
                                                           &grads[std::size_t(k)]));
    };
    if (opt.threads <= 1 || count == 1) {
      for (int k = 0; k < count; ++k) run_slot(k);
    } else {
      std::vector<std::thread> pool;
      std::atomic<int> next{0};
      int workers = std::min(opt.threads, count);
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (int k = next.fetch_add(1); k < count; k = next.fetch_add(1)) run_slot(k);
        });
      for (auto& th : pool) th.join();
    }

    // fixed-order accumulation keeps threaded runs bit-identical
    GradsT<T> total(params);
    double loss = 0;
    for (int k = 0; k < count; ++k) {
      total.accumulate(grads[std::size_t(k)], T(1.0 / count));
      loss += losses[std::size_t(k)] / count;
    }
    double norm = 0;
    if (clip_global_norm(total, opt.clip_norm, &norm))
      log << "# step " << (step + 1) << " clipped gradient norm " << norm << " -> "
          << opt.clip_norm << "\n";
    adam_step(params, total, opt.lr, opt.beta1, opt.beta2, opt.eps);

    log << params.t << "\t" << std::setprecision(8) << loss << "\n";
    epoch_loss += loss;
    epoch_batches += 1;
    if (pos == steps_per_epoch - 1)
      log << "# epoch " << epoch << " mean_loss " << std::setprecision(8)
          << (epoch_loss / double(epoch_batches)) << "\n";
  }
}

}  // namespace guicoder::train
