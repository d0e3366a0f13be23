#include "catpose/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

#include "catpose/image_io.hpp"
#include "catpose/types.hpp"

namespace catpose {

namespace {

constexpr int kWidth = 480, kHeight = 360;
constexpr int kMarginLeft = 48, kMarginBottom = 32, kMarginTop = 16, kMarginRight = 16;

struct Canvas {
  std::vector<uint8_t> pixels;
  Canvas() : pixels(static_cast<size_t>(kWidth) * kHeight * 3, 255) {}

  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || x >= kWidth || y < 0 || y >= kHeight) return;
    const size_t at = (static_cast<size_t>(y) * kWidth + x) * 3;
    pixels[at] = r;
    pixels[at + 1] = g;
    pixels[at + 2] = b;
  }

  void line(double x0, double y0, double x1, double y1, uint8_t r, uint8_t g, uint8_t b) {
    const int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      set(static_cast<int>(std::lround(x0 + t * (x1 - x0))),
          static_cast<int>(std::lround(y0 + t * (y1 - y0))), r, g, b);
    }
  }
};

// 3x5 digit/character glyphs; enough for axis tick labels.
void draw_text(Canvas& c, int x, int y, const std::string& text) {
  static const std::map<char, std::array<uint8_t, 5>> font = {
      {'0', {0b111, 0b101, 0b101, 0b101, 0b111}}, {'1', {0b010, 0b110, 0b010, 0b010, 0b111}},
      {'2', {0b111, 0b001, 0b111, 0b100, 0b111}}, {'3', {0b111, 0b001, 0b111, 0b001, 0b111}},
      {'4', {0b101, 0b101, 0b111, 0b001, 0b001}}, {'5', {0b111, 0b100, 0b111, 0b001, 0b111}},
      {'6', {0b111, 0b100, 0b111, 0b101, 0b111}}, {'7', {0b111, 0b001, 0b010, 0b010, 0b010}},
      {'8', {0b111, 0b101, 0b111, 0b101, 0b111}}, {'9', {0b111, 0b101, 0b111, 0b001, 0b111}},
      {'.', {0b000, 0b000, 0b000, 0b000, 0b010}}, {'-', {0b000, 0b000, 0b111, 0b000, 0b000}},
  };
  int cx = x;
  for (char ch : text) {
    auto it = font.find(ch);
    if (it != font.end()) {
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (it->second[static_cast<size_t>(row)] & (1 << (2 - col))) c.set(cx + col, y + row, 0, 0, 0);
    }
    cx += 4;
  }
}

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), std::abs(v) >= 10.0 || v == 0.0 ? "%.0f" : "%.2f", v);
  return buf;
}

}  // namespace

void plot_curve(const std::vector<double>& x, const std::vector<double>& y,
                const std::string& /*x_label*/, const std::string& /*y_label*/,
                const std::string& path, const std::string& config_hash) {
  if (x.empty() || x.size() != y.size())
    throw Error(ErrorCode::IoFailure, path + ": empty or mismatched plot data");
  Canvas canvas;

  const double x_min = *std::min_element(x.begin(), x.end());
  const double x_max = std::max(*std::max_element(x.begin(), x.end()), x_min + 1e-12);
  double y_min = *std::min_element(y.begin(), y.end());
  double y_max = *std::max_element(y.begin(), y.end());
  if (y_max - y_min < 1e-12) {
    y_min -= 0.5;
    y_max += 0.5;
  }

  const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const int y0 = kHeight - kMarginBottom, y1 = kMarginTop;
  auto px = [&](double v) { return x0 + (v - x_min) / (x_max - x_min) * (x1 - x0); };
  auto py = [&](double v) { return y0 + (v - y_min) / (y_max - y_min) * (y1 - y0); };

  canvas.line(x0, y0, x1, y0, 0, 0, 0);
  canvas.line(x0, y0, x0, y1, 0, 0, 0);
  for (int t = 0; t <= 4; ++t) {
    const double xv = x_min + (x_max - x_min) * t / 4.0;
    const double yv = y_min + (y_max - y_min) * t / 4.0;
    canvas.line(px(xv), y0, px(xv), y0 + 3, 0, 0, 0);
    canvas.line(x0 - 3, py(yv), x0, py(yv), 0, 0, 0);
    draw_text(canvas, static_cast<int>(px(xv)) - 6, y0 + 6, format_tick(xv));
    draw_text(canvas, 8, static_cast<int>(py(yv)) - 2, format_tick(yv));
  }
  for (size_t i = 0; i + 1 < x.size(); ++i)
    canvas.line(px(x[i]), py(y[i]), px(x[i + 1]), py(y[i + 1]), 30, 60, 200);

  write_rgb_png(canvas.pixels, kWidth, kHeight, path, config_hash);
}

}  // namespace catpose
