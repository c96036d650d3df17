#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "guicoder/prng.hpp"
#include "guicoder/tensor.hpp"

// Named parameter collection with Adam moments, Xavier-uniform init, and
// the "GUIW" weights file format (f32 payloads, little endian; moments
// stored under reserved __m./__v. names and the step counter under __t).

namespace guicoder {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorruptWeights : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
struct ParamsT {
  std::map<std::string, TensorT<T>> values;
  std::map<std::string, TensorT<T>> m, v;  // Adam moments, shapes mirror values
  long long t = 0;                         // Adam step counter

  TensorT<T>& add(const std::string& name, std::vector<int> shape) {
    auto [it, fresh] = values.emplace(name, TensorT<T>(shape));
    if (!fresh) throw std::logic_error("duplicate parameter " + name);
    m.emplace(name, TensorT<T>(shape));
    v.emplace(name, TensorT<T>(std::move(shape)));
    return it->second;
  }

  TensorT<T>& get(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw std::out_of_range("no parameter " + name);
    return it->second;
  }
  const TensorT<T>& get(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw std::out_of_range("no parameter " + name);
    return it->second;
  }

  long long total_elements() const {
    long long n = 0;
    for (const auto& [k, t_] : values) n += t_.numel();
    return n;
  }
};

template <typename T>
struct GradsT {
  std::map<std::string, TensorT<T>> g;

  GradsT() = default;
  explicit GradsT(const ParamsT<T>& p) {
    for (const auto& [name, tensor] : p.values) g.emplace(name, TensorT<T>(tensor.shape));
  }

  TensorT<T>& of(const std::string& name) {
    auto it = g.find(name);
    if (it == g.end()) throw std::out_of_range("no gradient slot " + name);
    return it->second;
  }

  void accumulate(const GradsT& other, T scale) {
    for (auto& [name, tensor] : g) tensor.add_scaled(other.g.at(name), scale);
  }

  void scale(T s) {
    for (auto& [name, tensor] : g)
      for (T& x : tensor.data) x *= s;
  }

  double global_norm() const {
    double sq = 0;
    for (const auto& [name, tensor] : g)
      for (T x : tensor.data) sq += double(x) * double(x);
    return std::sqrt(sq);
  }
};

// Scales gradients so their global norm is at most cap. Returns the
// pre-clip norm when clipping fired.
template <typename T>
bool clip_global_norm(GradsT<T>& grads, double cap, double* norm_out = nullptr) {
  double norm = grads.global_norm();
  if (norm_out) *norm_out = norm;
  if (norm <= cap || norm == 0) return false;
  grads.scale(T(cap / norm));
  return true;
}

template <typename T>
void adam_step(ParamsT<T>& params, const GradsT<T>& grads, double lr = 0.001, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8) {
  params.t += 1;
  double bc1 = 1.0 - std::pow(beta1, double(params.t));
  double bc2 = 1.0 - std::pow(beta2, double(params.t));
  for (auto& [name, p] : params.values) {
    auto git = grads.g.find(name);
    if (git == grads.g.end()) throw ShapeMismatch("adam: no gradient for " + name);
    const TensorT<T>& g = git->second;
    if (!p.same_shape(g)) throw ShapeMismatch("adam: shape mismatch for " + name);
    TensorT<T>& mm = params.m.at(name);
    TensorT<T>& vv = params.v.at(name);
    for (int i = 0; i < p.numel(); ++i) {
      double gi = double(g[i]);
      double mi = beta1 * double(mm[i]) + (1.0 - beta1) * gi;
      double vi = beta2 * double(vv[i]) + (1.0 - beta2) * gi * gi;
      mm[i] = T(mi);
      vv[i] = T(vi);
      p[i] -= T(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
  }
}

// Xavier-uniform: w ~ U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void init_uniform_xavier(TensorT<T>& w, int fan_in, int fan_out, Prng& stream) {
  double a = std::sqrt(6.0 / double(fan_in + fan_out));
  for (T& x : w.data) x = T((stream.next_unit() * 2.0 - 1.0) * a);
}

// ---- weights file ----

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(char(v & 0xFF));
  out.push_back(char((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw CorruptWeights("corrupt weights: truncated file");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(std::uint8_t(buf[pos])) |
                      std::uint16_t(std::uint8_t(buf[pos + 1])) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos + std::size_t(i)])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return std::uint8_t(buf[pos++]);
  }
  float f32() {
    std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

template <typename T>
void append_entry(std::string& out, const std::string& name, const TensorT<T>& t) {
  put_u16(out, std::uint16_t(name.size()));
  out += name;
  out.push_back(char(std::uint8_t(t.rank())));
  for (int e : t.shape) put_u32(out, std::uint32_t(e));
  for (int i = 0; i < t.numel(); ++i) put_f32(out, float(t[i]));
}

}  // namespace detail

template <typename T>
void save_weights(const ParamsT<T>& params, const std::string& path) {
  std::string out = "GUIW";
  detail::put_u32(out, 1);  // version
  std::uint32_t count = std::uint32_t(params.values.size() * 3 + 1);
  detail::put_u32(out, count);
  for (const auto& [name, t] : params.values) detail::append_entry(out, name, t);
  for (const auto& [name, t] : params.m) detail::append_entry(out, "__m." + name, t);
  for (const auto& [name, t] : params.v) detail::append_entry(out, "__v." + name, t);
  TensorT<T> step({1});
  step[0] = T(params.t);
  detail::append_entry(out, "__t", step);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

template <typename T>
ParamsT<T> load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::Reader r{buf};
  if (r.bytes(4) != "GUIW") throw CorruptWeights("corrupt weights: bad magic");
  if (r.u32() != 1) throw CorruptWeights("corrupt weights: unsupported version");
  std::uint32_t count = r.u32();
  ParamsT<T> params;
  std::map<std::string, TensorT<T>> moments_m, moments_v;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::uint16_t name_len = r.u16();
    std::string name = r.bytes(name_len);
    int rank = r.u8();
    std::vector<int> shape;
    long long numel = 1;
    for (int d = 0; d < rank; ++d) {
      shape.push_back(int(r.u32()));
      numel *= shape.back();
    }
    TensorT<T> t(shape);
    for (long long i = 0; i < numel; ++i) t[int(i)] = T(r.f32());
    if (name == "__t")
      params.t = (long long)(double(t[0]));
    else if (name.rfind("__m.", 0) == 0)
      moments_m.emplace(name.substr(4), std::move(t));
    else if (name.rfind("__v.", 0) == 0)
      moments_v.emplace(name.substr(4), std::move(t));
    else
      params.values.emplace(name, std::move(t));
  }
  if (r.pos != buf.size()) throw CorruptWeights("corrupt weights: trailing bytes");
  for (const auto& [name, t] : params.values) {
    auto mit = moments_m.find(name);
    auto vit = moments_v.find(name);
    params.m.emplace(name, mit != moments_m.end() ? std::move(mit->second) : TensorT<T>(t.shape));
    params.v.emplace(name, vit != moments_v.end() ? std::move(vit->second) : TensorT<T>(t.shape));
    if (!params.m.at(name).same_shape(t) || !params.v.at(name).same_shape(t))
      throw CorruptWeights("corrupt weights: moment shape mismatch for " + name);
  }
  return params;
}

using Params = ParamsT<float>;
using Grads = GradsT<float>;

}  // namespace guicoder
