#include "locedit/report.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>

#include "locedit/errors.hpp"
#include "locedit/text.hpp"

namespace locedit {

namespace {

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;
constexpr int kAdvance = kGlyphW + 1;
constexpr int kLineH = kGlyphH + 2;
constexpr int kPad = 2;

using Glyph = std::array<unsigned char, kGlyphH>;

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> f = {
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}}, {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}}, {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}}, {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}}, {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}}, {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}}, {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}}, {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}}, {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}}, {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}}, {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}}, {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
      {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}}, {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
      {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}}, {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}}, {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}}, {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}}, {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}}, {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}}, {'\'', {0x0C, 0x04, 0x08, 0x00, 0x00, 0x00, 0x00}},
      {'!', {0x04, 0x04, 0x04, 0x04, 0x04, 0x00, 0x04}}, {'?', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}}, {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}}, {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}}, {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
  };
  return f;
}

}  // namespace

void draw_text(Image& canvas, int x, int y, const std::string& text, double value) {
  int cx = x;
  for (char raw : text) {
    const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    auto it = font().find(ch);
    if (it == font().end()) it = font().find('?');
    for (int gy = 0; gy < kGlyphH; ++gy) {
      for (int gx = 0; gx < kGlyphW; ++gx) {
        if (((it->second[gy] >> (kGlyphW - 1 - gx)) & 1) == 0) continue;
        const int px = cx + gx;
        const int py = y + gy;
        if (px < 0 || py < 0 || px >= canvas.width() || py >= canvas.height()) continue;
        for (int c = 0; c < canvas.channels(); ++c) canvas(c, py, px) = value;
      }
    }
    cx += kAdvance;
  }
}

std::vector<std::string> wrap_text(const std::string& text, int max_chars) {
  if (max_chars < 1) throw ParameterError("wrap_text: width must be positive");
  std::vector<std::string> lines;
  std::string cur;
  for (std::string w : split_tokens(text)) {
    while (static_cast<int>(w.size()) > max_chars) {
      if (!cur.empty()) lines.push_back(std::move(cur));
      cur.clear();
      lines.push_back(w.substr(0, max_chars));
      w = w.substr(max_chars);
    }
    if (w.empty()) continue;
    if (cur.empty()) {
      cur = w;
    } else if (static_cast<int>(cur.size() + 1 + w.size()) <= max_chars) {
      cur += " " + w;
    } else {
      lines.push_back(std::move(cur));
      cur = w;
    }
  }
  if (!cur.empty()) lines.push_back(std::move(cur));
  return lines;
}

Image make_grid(const std::vector<ReportColumn>& columns) {
  if (columns.empty()) throw ParameterError("make_grid: no columns");
  int cell_w = 0;
  int cell_h = 0;
  std::size_t rows = 0;
  for (const auto& col : columns) {
    rows = std::max(rows, col.cells.size());
    for (const auto& img : col.cells) {
      if (img.channels() != 3) throw ShapeError("make_grid: cells must be RGB");
      cell_w = std::max(cell_w, img.width());
      cell_h = std::max(cell_h, img.height());
    }
  }
  if (rows == 0) throw ParameterError("make_grid: no images");
  cell_w = std::max(cell_w, 4 * kAdvance);
  const int chars = std::max(1, (cell_w + 1) / kAdvance);
  std::vector<std::vector<std::string>> captions;
  std::size_t max_lines = 1;
  for (const auto& col : columns) {
    captions.push_back(wrap_text(col.caption, chars));
    max_lines = std::max(max_lines, captions.back().size());
  }
  const int header_h = static_cast<int>(max_lines) * kLineH + kPad;
  const int n_cols = static_cast<int>(columns.size());
  const int width = kPad + n_cols * (cell_w + kPad);
  const int height = kPad + header_h + static_cast<int>(rows) * (cell_h + kPad);
  Image canvas(3, height, width, 1.0);

  for (int ci = 0; ci < n_cols; ++ci) {
    const int x0 = kPad + ci * (cell_w + kPad);
    for (std::size_t li = 0; li < captions[ci].size(); ++li) {
      draw_text(canvas, x0, kPad + static_cast<int>(li) * kLineH, captions[ci][li], 0.0);
    }
    for (std::size_t ri = 0; ri < columns[ci].cells.size(); ++ri) {
      const Image& img = columns[ci].cells[ri];
      const int y0 = kPad + header_h + static_cast<int>(ri) * (cell_h + kPad);
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < img.height(); ++y) {
          for (int x = 0; x < img.width(); ++x) canvas(c, y0 + y, x0 + x) = img(c, y, x);
        }
      }
    }
  }
  return canvas;
}

}  // namespace locedit
