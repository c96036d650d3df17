#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace guicoder {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major n-d array. Templated on the scalar so the float
// production type and the double shadow type (for finite-difference
// checks) share one implementation.
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(std::size_t(numel_of(shape)), T(0));
  }

  static long long numel_of(const std::vector<int>& s) {
    long long n = 1;
    for (int e : s) {
      if (e < 0) throw ShapeMismatch("negative extent");
      n *= e;
    }
    return n;
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

  static TensorT full(std::vector<int> s, T value) {
    TensorT t(std::move(s));
    for (T& x : t.data) x = value;
    return t;
  }

  int numel() const { return int(data.size()); }
  int rank() const { return int(shape.size()); }
  int extent(int d) const { return shape.at(std::size_t(d)); }

  T& operator[](int i) { return data[std::size_t(i)]; }
  const T& operator[](int i) const { return data[std::size_t(i)]; }

  T& at(int i, int j) { return data[std::size_t(i) * std::size_t(shape[1]) + std::size_t(j)]; }
  const T& at(int i, int j) const {
    return data[std::size_t(i) * std::size_t(shape[1]) + std::size_t(j)];
  }
  T& at(int i, int j, int k) {
    return data[(std::size_t(i) * std::size_t(shape[1]) + std::size_t(j)) * std::size_t(shape[2]) +
                std::size_t(k)];
  }
  const T& at(int i, int j, int k) const {
    return data[(std::size_t(i) * std::size_t(shape[1]) + std::size_t(j)) * std::size_t(shape[2]) +
                std::size_t(k)];
  }
  T& at(int i, int j, int k, int l) {
    return data[((std::size_t(i) * std::size_t(shape[1]) + std::size_t(j)) * std::size_t(shape[2]) +
                 std::size_t(k)) *
                    std::size_t(shape[3]) +
                std::size_t(l)];
  }
  const T& at(int i, int j, int k, int l) const {
    return data[((std::size_t(i) * std::size_t(shape[1]) + std::size_t(j)) * std::size_t(shape[2]) +
                 std::size_t(k)) *
                    std::size_t(shape[3]) +
                std::size_t(l)];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  TensorT reshaped(std::vector<int> s) const {
    if (numel_of(s) != numel()) throw ShapeMismatch("reshape changes element count");
    TensorT out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }

  void fill(T v) {
    for (T& x : data) x = v;
  }

  void add_scaled(const TensorT& o, T scale) {
    if (!same_shape(o)) throw ShapeMismatch("add_scaled shape mismatch");
    for (int i = 0; i < numel(); ++i) data[std::size_t(i)] += scale * o.data[std::size_t(i)];
  }

  bool all_finite() const {
    for (T x : data)
      if (!std::isfinite(double(x))) return false;
    return true;
  }
};

template <typename T>
void check_finite(const TensorT<T>& t, const char* what) {
  if (!t.all_finite()) throw NonFinite(std::string("non-finite values in ") + what);
}

using Tensor = TensorT<float>;

template <typename T>
std::string shape_str(const TensorT<T>& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

}  // namespace guicoder
