#pragma once

#include <functional>
#include <string>
#include <vector>

#include "guicoder/layers.hpp"
#include "guicoder/model.hpp"
#include "guicoder/render.hpp"
#include "guicoder/synth.hpp"

// Central finite-difference verification of every backward pass, run in
// double precision. The numeric oracle only ever calls forward code, so
// it stays independent of the analytic gradients it checks.

namespace guicoder::gradcheck {

using DTensor = TensorT<double>;

struct CheckResult {
  std::string name;
  double max_rel_err = 0;
  double tol = 0;
  bool pass = false;
};

namespace detail {

constexpr double kStep = 1e-5;
constexpr double kDenomFloor = 1e-4;  // tiny gradients are held to an absolute bar

inline double rel_err(double analytic, double numeric) {
  double denom = std::max({std::fabs(analytic), std::fabs(numeric), kDenomFloor});
  return std::fabs(analytic - numeric) / denom;
}

// max relative error between analytic grads and central differences of
// `loss` over every element of `x`
inline double check_tensor(const std::function<double()>& loss, DTensor& x,
                           const DTensor& analytic) {
  double worst = 0;
  for (int i = 0; i < x.numel(); ++i) {
    double keep = x[i];
    x[i] = keep + kStep;
    double fp = loss();
    x[i] = keep - kStep;
    double fm = loss();
    x[i] = keep;
    worst = std::max(worst, rel_err(analytic[i], (fp - fm) / (2 * kStep)));
  }
  return worst;
}

inline DTensor random_tensor(std::vector<int> shape, Prng& stream, double lo = -1.0,
                             double hi = 1.0) {
  DTensor t(std::move(shape));
  for (int i = 0; i < t.numel(); ++i) t[i] = lo + stream.next_unit() * (hi - lo);
  return t;
}

}  // namespace detail

inline CheckResult check_linear(std::uint64_t seed) {
  Prng s{seed};
  DTensor x = detail::random_tensor({7}, s);
  DTensor w = detail::random_tensor({5, 7}, s);
  DTensor b = detail::random_tensor({5}, s);
  DTensor r = detail::random_tensor({5}, s);  // fixed projection to a scalar
  auto loss = [&] {
    DTensor y = nn::linear_forward(x, w, b);
    double acc = 0;
    for (int i = 0; i < y.numel(); ++i) acc += r[i] * y[i];
    return acc;
  };
  DTensor dx({7}), dw({5, 7}), db({5});
  nn::linear_backward(x, w, r, &dx, dw, db);
  double worst = detail::check_tensor(loss, x, dx);
  worst = std::max(worst, detail::check_tensor(loss, w, dw));
  worst = std::max(worst, detail::check_tensor(loss, b, db));
  return {"linear", worst, 1e-4, worst < 1e-4};
}

inline CheckResult check_conv2d(std::uint64_t seed) {
  Prng s{seed};
  DTensor x = detail::random_tensor({2, 5, 5}, s);
  DTensor w = detail::random_tensor({3, 2, 3, 3}, s);
  DTensor b = detail::random_tensor({3}, s);
  DTensor r = detail::random_tensor({3, 5, 5}, s);
  auto loss = [&] {
    DTensor y = nn::conv2d_forward(x, w, b, 1, 1);
    double acc = 0;
    for (int i = 0; i < y.numel(); ++i) acc += r[i] * y[i];
    return acc;
  };
  DTensor dx({2, 5, 5}), dw({3, 2, 3, 3}), db({3});
  nn::conv2d_backward(x, w, r, 1, 1, &dx, dw, db);
  double worst = detail::check_tensor(loss, x, dx);
  worst = std::max(worst, detail::check_tensor(loss, w, dw));
  worst = std::max(worst, detail::check_tensor(loss, b, db));
  return {"conv2d", worst, 1e-4, worst < 1e-4};
}

inline CheckResult check_maxpool(std::uint64_t seed) {
  Prng s{seed};
  // offsets keep window entries pairwise distinct, away from ties
  DTensor x = detail::random_tensor({2, 4, 4}, s);
  for (int i = 0; i < x.numel(); ++i) x[i] += 0.001 * i;
  DTensor r = detail::random_tensor({2, 2, 2}, s);
  nn::PoolCache cache;
  auto loss = [&] {
    nn::PoolCache c;
    DTensor y = nn::maxpool2d_forward(x, 2, 2, c);
    double acc = 0;
    for (int i = 0; i < y.numel(); ++i) acc += r[i] * y[i];
    return acc;
  };
  nn::maxpool2d_forward(x, 2, 2, cache);
  DTensor dx({2, 4, 4});
  nn::maxpool2d_backward(r, cache, dx);
  double worst = detail::check_tensor(loss, x, dx);
  return {"maxpool2d", worst, 1e-4, worst < 1e-4};
}

inline CheckResult check_region_pool(std::uint64_t seed) {
  Prng s{seed};
  DTensor nu = detail::random_tensor({6, 4}, s);
  for (int i = 0; i < nu.numel(); ++i) nu[i] += 0.001 * i;
  DTensor r = detail::random_tensor({4}, s);
  auto loss = [&] {
    std::vector<int> am;
    DTensor vp = nn::region_pool_forward(nu, am);
    double acc = 0;
    for (int i = 0; i < vp.numel(); ++i) acc += r[i] * vp[i];
    return acc;
  };
  std::vector<int> argmax;
  nn::region_pool_forward(nu, argmax);
  DTensor dnu({6, 4});
  nn::region_pool_backward(r, argmax, dnu);
  double worst = detail::check_tensor(loss, nu, dnu);
  return {"region_pool", worst, 1e-4, worst < 1e-4};
}

inline CheckResult check_lstm_bptt(std::uint64_t seed) {
  Prng s{seed};
  const int e = 4, hh = 5, steps = 3;
  DTensor wx = detail::random_tensor({4 * hh, e}, s);
  DTensor wh = detail::random_tensor({4 * hh, hh}, s);
  DTensor b = detail::random_tensor({4 * hh}, s);
  std::vector<DTensor> xs;
  for (int t = 0; t < steps; ++t) xs.push_back(detail::random_tensor({e}, s));
  DTensor h0 = detail::random_tensor({hh}, s);
  DTensor c0 = detail::random_tensor({hh}, s);
  std::vector<DTensor> rs;  // per-step projections so every h_t matters
  for (int t = 0; t < steps; ++t) rs.push_back(detail::random_tensor({hh}, s));

  auto loss = [&] {
    DTensor h = h0, c = c0;
    double acc = 0;
    for (int t = 0; t < steps; ++t) {
      nn::LstmCache<double> cache;
      nn::lstm_forward(xs[std::size_t(t)], h, c, wx, wh, b, cache);
      h = cache.h;
      c = cache.c;
      for (int i = 0; i < hh; ++i) acc += rs[std::size_t(t)][i] * h[i];
    }
    return acc;
  };

  // analytic: forward with caches, then reverse
  std::vector<nn::LstmCache<double>> caches(steps);
  {
    DTensor h = h0, c = c0;
    for (int t = 0; t < steps; ++t) {
      nn::lstm_forward(xs[std::size_t(t)], h, c, wx, wh, b, caches[std::size_t(t)]);
      h = caches[std::size_t(t)].h;
      c = caches[std::size_t(t)].c;
    }
  }
  DTensor dwx({4 * hh, e}), dwh({4 * hh, hh}), db({4 * hh});
  std::vector<DTensor> dxs(steps, DTensor({e}));
  DTensor dh({hh}), dc({hh});
  for (int t = steps - 1; t >= 0; --t) {
    dh.add_scaled(rs[std::size_t(t)], 1.0);
    DTensor dh_prev({hh}), dc_prev({hh});
    nn::lstm_backward(caches[std::size_t(t)], wx, wh, dh, dc, dxs[std::size_t(t)], dh_prev,
                      dc_prev, dwx, dwh, db);
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }

  double worst = 0;
  for (int t = 0; t < steps; ++t)
    worst = std::max(worst, detail::check_tensor(loss, xs[std::size_t(t)], dxs[std::size_t(t)]));
  worst = std::max(worst, detail::check_tensor(loss, h0, dh));
  worst = std::max(worst, detail::check_tensor(loss, c0, dc));
  worst = std::max(worst, detail::check_tensor(loss, wx, dwx));
  worst = std::max(worst, detail::check_tensor(loss, wh, dwh));
  worst = std::max(worst, detail::check_tensor(loss, b, db));
  return {"lstm_cell", worst, 1e-4, worst < 1e-4};
}

inline CheckResult check_attention(std::uint64_t seed) {
  Prng s{seed};
  const int l = 6, d = 4, hh = 5, a = 3;
  DTensor nu = detail::random_tensor({l, d}, s);
  DTensor h = detail::random_tensor({hh}, s);
  DTensor w_ev = detail::random_tensor({a, d}, s);
  DTensor w_eh = detail::random_tensor({a, hh}, s);
  DTensor w_s = detail::random_tensor({a}, s);
  DTensor r = detail::random_tensor({d}, s);
  auto loss = [&] {
    nn::AttnCache<double> cache;
    DTensor alpha, vhat;
    nn::attention_forward(nu, h, w_ev, w_eh, w_s, cache, alpha, vhat);
    double acc = 0;
    for (int i = 0; i < d; ++i) acc += r[i] * vhat[i];
    return acc;
  };
  nn::AttnCache<double> cache;
  DTensor alpha, vhat;
  nn::attention_forward(nu, h, w_ev, w_eh, w_s, cache, alpha, vhat);
  DTensor dnu({l, d}), dh({hh}), dw_ev({a, d}), dw_eh({a, hh}), dw_s({a});
  nn::attention_backward(nu, h, w_ev, w_eh, w_s, cache, r, dnu, dh, dw_ev, dw_eh, dw_s);
  double worst = detail::check_tensor(loss, nu, dnu);
  worst = std::max(worst, detail::check_tensor(loss, h, dh));
  worst = std::max(worst, detail::check_tensor(loss, w_ev, dw_ev));
  worst = std::max(worst, detail::check_tensor(loss, w_eh, dw_eh));
  worst = std::max(worst, detail::check_tensor(loss, w_s, dw_s));
  return {"attention", worst, 1e-4, worst < 1e-4};
}

inline CheckResult check_cross_entropy(std::uint64_t seed) {
  Prng s{seed};
  DTensor logits = detail::random_tensor({9}, s, -2.0, 2.0);
  int target = 4;
  auto loss = [&] { return nn::cross_entropy(logits, target); };
  DTensor probs;
  nn::cross_entropy(logits, target, &probs);
  DTensor dlogits({9});
  nn::cross_entropy_backward(probs, target, 1.0, dlogits);
  double worst = detail::check_tensor(loss, logits, dlogits);
  return {"cross_entropy", worst, 1e-4, worst < 1e-4};
}

// The whole pipeline on a micro configuration: every parameter of the
// model against finite differences of the training loss.
inline CheckResult check_end_to_end(std::uint64_t seed) {
  model::ModelConfig cfg;
  cfg.image_size = 32;
  cfg.feat_dim = 4;
  cfg.hidden = 8;
  cfg.embed = 8;
  cfg.attn_dim = 4;
  cfg.dropout = 0.0;
  ParamsT<double> params = model::build_params<double>(cfg, seed);

  // random image: rendered fills would create exact pooling ties
  Prng s = derive_stream(seed, 'I');
  DTensor image = detail::random_tensor({3, 32, 32}, s, 0.0, 1.0);
  dsl::TokenSeq gt = dsl::tokenize("stack { row { label btn } row { slider } }");

  auto loss = [&] {
    return model::forward_train<double>(image, gt, params, cfg, Prng{0}, false);
  };
  GradsT<double> grads(params);
  model::forward_train<double>(image, gt, params, cfg, Prng{0}, false, &grads);

  double worst = 0;
  for (auto& [name, tensor] : params.values)
    worst = std::max(worst, detail::check_tensor(loss, tensor, grads.g.at(name)));
  return {"end_to_end", worst, 1e-3, worst < 1e-3};
}

inline std::vector<CheckResult> run_all(std::uint64_t seed = 1) {
  return {
      check_linear(seed),     check_conv2d(seed),        check_maxpool(seed),
      check_region_pool(seed), check_lstm_bptt(seed),    check_attention(seed),
      check_cross_entropy(seed), check_end_to_end(seed),
  };
}

inline bool all_pass(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results)
    if (!r.pass) return false;
  return true;
}

}  // namespace guicoder::gradcheck
