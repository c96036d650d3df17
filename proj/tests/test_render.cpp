#include "guicoder/render.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "guicoder/dsl.hpp"

using namespace guicoder;
using namespace guicoder::dsl;
using namespace guicoder::render;

namespace {
ProgramAst prog(const char* src) { return parse(tokenize(src)); }
}  // namespace

TEST(Layout, TwoRowsSplitVerticalExtent) {
  auto rects = layout(prog("stack { row { label } row { btn } }"), 64, 64);
  ASSERT_EQ(rects.size(), 2u);
  // leaf cells are the row bands inset by the 2px margin
  EXPECT_EQ(rects[0].second.y, 2);
  EXPECT_EQ(rects[0].second.h, 28);
  EXPECT_EQ(rects[1].second.y, 34);
  EXPECT_EQ(rects[1].second.h, 28);
}

TEST(Layout, ThreeLeavesRemainderGoesLast) {
  auto rects = layout(prog("stack { row { label btn img } }"), 64, 64);
  ASSERT_EQ(rects.size(), 3u);
  // cells 21,21,22 before the margin
  EXPECT_EQ(rects[0].second.w, 21 - 4);
  EXPECT_EQ(rects[1].second.w, 21 - 4);
  EXPECT_EQ(rects[2].second.w, 22 - 4);
  EXPECT_EQ(rects[0].second.x, 2);
  EXPECT_EQ(rects[1].second.x, 23);
  EXPECT_EQ(rects[2].second.x, 44);
}

TEST(Layout, MarginArithmeticAtMinimumSize) {
  auto rects = layout(prog("stack { row { label } }"), 16, 16);
  ASSERT_EQ(rects.size(), 1u);
  EXPECT_EQ(rects[0].second.x, 2);
  EXPECT_EQ(rects[0].second.y, 2);
  EXPECT_EQ(rects[0].second.w, 12);
  EXPECT_EQ(rects[0].second.h, 12);
}

TEST(Layout, TooSmallLeafCellThrows) {
  // 10 leaves in a 16px-wide row: cells of 1-2px, under the 4px floor
  EXPECT_THROW(layout(prog("stack { row { label label label label label label label label label label } }"),
                      16, 16),
               TooSmall);
  EXPECT_THROW(layout(prog("stack { row { label } }"), 8, 64), TooSmall);
}

TEST(Layout, RectsStayInBoundsAndDisjointWithinRow) {
  auto rects = layout(prog("stack { row { label btn img text check } row { slider switch } }"), 97, 53);
  for (const auto& [tag, r] : rects) {
    EXPECT_GE(r.x, 0);
    EXPECT_GE(r.y, 0);
    EXPECT_LE(r.x + r.w, 97);
    EXPECT_LE(r.y + r.h, 53);
  }
  for (std::size_t i = 0; i + 1 < 5; ++i)
    EXPECT_LE(rects[i].second.x + rects[i].second.w, rects[i + 1].second.x);
}

TEST(Render, BtnCenterPixelHasBtnColor) {
  Image img = render::render(prog("stack { row { btn } }"), 64, 64);
  RGB c = leaf_color(BTN);
  EXPECT_EQ(img.at(32, 32, 0), c.r);
  EXPECT_EQ(img.at(32, 32, 1), c.g);
  EXPECT_EQ(img.at(32, 32, 2), c.b);
  // background stays white
  EXPECT_EQ(img.at(0, 0, 0), 255);
}

TEST(Render, Deterministic) {
  ProgramAst ast = prog("stack { row { label btn } row { slider img text check switch } }");
  Image a = render::render(ast, 96, 96);
  Image b = render::render(ast, 96, 96);
  EXPECT_EQ(a.data, b.data);
}

TEST(Render, DistinctLeavesRenderDistinctly) {
  const char* leaves[] = {"label", "btn", "switch", "slider", "img", "text", "check"};
  std::vector<std::vector<std::uint8_t>> images;
  for (const char* l : leaves) {
    std::string src = std::string("stack { row { ") + l + " } }";
    images.push_back(render::render(prog(src.c_str()), 64, 64).data);
  }
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t j = i + 1; j < images.size(); ++j) EXPECT_NE(images[i], images[j]);
}

TEST(Render, GoldenPixelHashForPinnedProgram) {
  // FNV-1a over the raw bytes of one fixed render; guards against any
  // accidental change to layout or glyph drawing.
  Image img = render::render(prog("stack { row { label btn img } row { check } }"), 64, 64);
  std::uint64_t h = 1469598103934665603ull;
  for (std::uint8_t b : img.data) {
    h ^= b;
    h *= 1099511628211ull;
  }
  EXPECT_EQ(h, 14961171155300528263ull);
}

TEST(ExportHtml, StructuralTranscription) {
  std::string html = export_html(prog("stack { row { label } }"));
  EXPECT_EQ(html,
            "<div class=\"stack\">\n"
            "  <div class=\"row\">\n"
            "    <div class=\"label\"></div>\n"
            "  </div>\n"
            "</div>\n");
  EXPECT_EQ(html, export_html(prog("stack { row { label } }")));
}

TEST(ExportHtml, ElementCountEqualsNodeCount) {
  ProgramAst ast = prog("stack { row { label btn } row { img } }");
  std::string html = export_html(ast);
  std::size_t count = 0, pos = 0;
  while ((pos = html.find("<div", pos)) != std::string::npos) {
    ++count;
    ++pos;
  }
  EXPECT_EQ(count, 6u);  // stack + 2 rows + 3 leaves
}

TEST(PpmIo, RoundTrip) {
  Image img = render::render(prog("stack { row { slider } }"), 32, 32);
  auto path = std::filesystem::temp_directory_path() / "guicoder_test_roundtrip.ppm";
  write_ppm(path.string(), img);
  Image back = read_ppm(path.string());
  EXPECT_EQ(back.width, 32);
  EXPECT_EQ(back.height, 32);
  EXPECT_EQ(back.data, img.data);
  std::filesystem::remove(path);
}

TEST(PpmIo, RejectsBadHeader) {
  auto path = std::filesystem::temp_directory_path() / "guicoder_test_bad.ppm";
  std::ofstream(path) << "P3\n2 2\n255\n0 0 0";
  EXPECT_THROW(read_ppm(path.string()), PpmFormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(read_ppm("/nonexistent/nowhere.ppm"), IoError);
}
