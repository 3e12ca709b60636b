#pragma once

#include <string>
#include <vector>

#include "locedit/tensor.hpp"

namespace locedit {

struct ReportColumn {
  std::string caption;
  std::vector<Image> cells;
};

// One column per entry, one row per cell index, and a header strip with each column's
// caption drawn in a 5x7 bitmap font. Missing cells are left blank.
Image make_grid(const std::vector<ReportColumn>& columns);

// Draws `text` (upper-cased, unknown characters as '?') with its top-left corner at (x, y).
void draw_text(Image& canvas, int x, int y, const std::string& text, double value);

// Greedy word wrap to at most `max_chars` per line; long words are split.
std::vector<std::string> wrap_text(const std::string& text, int max_chars);

}  // namespace locedit
