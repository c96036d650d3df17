#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "guicoder/dsl.hpp"
#include "guicoder/image.hpp"

// Deterministic rasterizer: stacks split vertically, rows horizontally,
// leaves get a 2px inset cell filled with their type color plus a small
// glyph. Pure integer math so output bytes are identical everywhere.

namespace guicoder::render {

struct TooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
};

struct RGB {
  std::uint8_t r, g, b;
};

inline RGB leaf_color(dsl::TokenId tag) {
  static constexpr std::array<RGB, dsl::kLeafCount> kColors = {{
      {200, 200, 200},  // label
      {66, 133, 244},   // btn
      {52, 168, 83},    // switch
      {251, 188, 5},    // slider
      {234, 67, 53},    // img
      {156, 39, 176},   // text
      {0, 172, 193},    // check
  }};
  return kColors[std::size_t(tag - dsl::kFirstLeaf)];
}

constexpr int kLeafMargin = 2;
constexpr int kMinLeafSide = 4;

namespace detail {

// even integer partition: cell i spans [i*extent/n, (i+1)*extent/n)
inline std::pair<int, int> cell(int offset, int extent, int n, int i) {
  int lo = offset + int(std::int64_t(extent) * i / n);
  int hi = offset + int(std::int64_t(extent) * (i + 1) / n);
  return {lo, hi - lo};
}

inline void place(const dsl::Node& node, Rect rect, bool vertical,
                  std::vector<std::pair<dsl::TokenId, Rect>>& out) {
  int n = int(node.children.size());
  for (int i = 0; i < n; ++i) {
    const dsl::Node& child = node.children[std::size_t(i)];
    Rect r = rect;
    if (vertical) {
      auto [y, h] = cell(rect.y, rect.h, n, i);
      r.y = y;
      r.h = h;
    } else {
      auto [x, w] = cell(rect.x, rect.w, n, i);
      r.x = x;
      r.w = w;
    }
    if (child.is_container()) {
      place(child, r, child.tag == dsl::STACK, out);
    } else {
      r.x += kLeafMargin;
      r.y += kLeafMargin;
      r.w -= 2 * kLeafMargin;
      r.h -= 2 * kLeafMargin;
      if (r.w < kMinLeafSide || r.h < kMinLeafSide)
        throw TooSmall("leaf cell smaller than 4x4 px");
      out.emplace_back(child.tag, r);
    }
  }
}

}  // namespace detail

inline std::vector<std::pair<dsl::TokenId, Rect>> layout(const dsl::ProgramAst& ast, int width,
                                                         int height) {
  if (width < 16 || height < 16) throw TooSmall("image smaller than 16x16 px");
  std::vector<std::pair<dsl::TokenId, Rect>> out;
  detail::place(ast, Rect{0, 0, width, height}, true, out);
  return out;
}

namespace detail {

inline void fill_rect(Image& img, const Rect& r, RGB c) {
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) img.set(x, y, c.r, c.g, c.b);
}

inline void hline(Image& img, int x0, int x1, int y) {
  for (int x = x0; x <= x1; ++x) img.set(x, y, 0, 0, 0);
}

inline void bresenham(Image& img, int x0, int y0, int x1, int y1) {
  int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, 0, 0, 0);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

inline void draw_glyph(Image& img, dsl::TokenId tag, const Rect& r) {
  int x1 = r.x + r.w - 1, y1 = r.y + r.h - 1;
  switch (tag) {
    case dsl::LABEL:
      hline(img, r.x, x1, y1);
      break;
    case dsl::BTN:  // 1px border
      hline(img, r.x, x1, r.y);
      hline(img, r.x, x1, y1);
      for (int y = r.y; y <= y1; ++y) {
        img.set(r.x, y, 0, 0, 0);
        img.set(x1, y, 0, 0, 0);
      }
      break;
    case dsl::SWITCH:
      fill_rect(img, Rect{r.x, r.y, r.w / 2, r.h}, RGB{0, 0, 0});
      break;
    case dsl::SLIDER: {
      int by = r.y + (r.h - 2) / 2;
      hline(img, r.x, x1, by);
      hline(img, r.x, x1, by + 1);
      break;
    }
    case dsl::IMG: {
      int s = std::min(4, std::min(r.w, r.h));
      fill_rect(img, Rect{r.x, r.y, s, s}, RGB{0, 0, 0});
      fill_rect(img, Rect{x1 - s + 1, r.y, s, s}, RGB{0, 0, 0});
      fill_rect(img, Rect{r.x, y1 - s + 1, s, s}, RGB{0, 0, 0});
      fill_rect(img, Rect{x1 - s + 1, y1 - s + 1, s, s}, RGB{0, 0, 0});
      break;
    }
    case dsl::TEXT:
      for (int k = 1; k <= 3; ++k) hline(img, r.x, x1, r.y + r.h * k / 4);
      break;
    case dsl::CHECK:
      bresenham(img, r.x, r.y, x1, y1);
      bresenham(img, x1, r.y, r.x, y1);
      break;
    default:
      break;
  }
}

}  // namespace detail

inline Image render(const dsl::ProgramAst& ast, int width, int height) {
  auto rects = layout(ast, width, height);
  Image img(width, height);
  std::fill(img.data.begin(), img.data.end(), std::uint8_t(255));
  for (const auto& [tag, r] : rects) {
    detail::fill_rect(img, r, leaf_color(tag));
    detail::draw_glyph(img, tag, r);
  }
  return img;
}

inline std::string export_html(const dsl::ProgramAst& ast) {
  std::string out;
  auto emit = [&](const dsl::Node& node, int depth, auto&& self) -> void {
    std::string indent(std::size_t(depth) * 2, ' ');
    const std::string& cls = dsl::vocab().name(node.tag);
    if (node.is_container()) {
      out += indent + "<div class=\"" + cls + "\">\n";
      for (const dsl::Node& c : node.children) self(c, depth + 1, self);
      out += indent + "</div>\n";
    } else {
      out += indent + "<div class=\"" + cls + "\"></div>\n";
    }
  };
  emit(ast, 0, emit);
  return out;
}

}  // namespace guicoder::render
