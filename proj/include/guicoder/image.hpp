#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "guicoder/params.hpp"  // IoError
#include "guicoder/tensor.hpp"

namespace guicoder {

struct PpmFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Row-major H x W x 3 RGB bytes.
struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(std::size_t(w) * std::size_t(h) * 3, 0) {}

  std::uint8_t& at(int x, int y, int c) {
    return data[(std::size_t(y) * std::size_t(width) + std::size_t(x)) * 3 + std::size_t(c)];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(std::size_t(y) * std::size_t(width) + std::size_t(x)) * 3 + std::size_t(c)];
  }

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    at(x, y, 0) = r;
    at(x, y, 1) = g;
    at(x, y, 2) = b;
  }
};

inline void write_ppm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
  if (!f) throw IoError("write failed: " + path);
}

namespace detail {

inline int ppm_next_int(std::istream& in) {
  // skip whitespace and '#' comment lines
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw PpmFormatError("bad PPM header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace detail

inline Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '6') throw PpmFormatError(path + ": not a P6 PPM");
  int w = detail::ppm_next_int(f);
  int h = detail::ppm_next_int(f);
  int maxval = detail::ppm_next_int(f);
  if (w <= 0 || h <= 0 || maxval != 255) throw PpmFormatError(path + ": unsupported PPM header");
  // header ends with exactly one whitespace byte, already consumed by ppm_next_int
  Image img(w, h);
  f.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  if (f.gcount() != std::streamsize(img.data.size()))
    throw PpmFormatError(path + ": truncated pixel data");
  return img;
}

inline void write_pgm(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& gray) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "P5\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(gray.data()), std::streamsize(gray.size()));
  if (!f) throw IoError("write failed: " + path);
}

// Pixels to floats, x/255, channel-major [3, H, W].
template <typename T = float>
TensorT<T> image_to_tensor(const Image& img) {
  TensorT<T> t({3, img.height, img.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at(c, y, x) = T(img.at(x, y, c)) / T(255);
  return t;
}

}  // namespace guicoder
