#include "sitta/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace sitta::plot {
namespace {

// Column-major 5x7 glyphs for ASCII 32..126; bit 0 is the top row.
constexpr std::uint8_t kFont[95][5] = {
    {0x00, 0x00, 0x00, 0x00, 0x00}, {0x00, 0x00, 0x5F, 0x00, 0x00}, {0x00, 0x07, 0x00, 0x07, 0x00},
    {0x14, 0x7F, 0x14, 0x7F, 0x14}, {0x24, 0x2A, 0x7F, 0x2A, 0x12}, {0x23, 0x13, 0x08, 0x64, 0x62},
    {0x36, 0x49, 0x55, 0x22, 0x50}, {0x00, 0x05, 0x03, 0x00, 0x00}, {0x00, 0x1C, 0x22, 0x41, 0x00},
    {0x00, 0x41, 0x22, 0x1C, 0x00}, {0x08, 0x2A, 0x1C, 0x2A, 0x08}, {0x08, 0x08, 0x3E, 0x08, 0x08},
    {0x00, 0x50, 0x30, 0x00, 0x00}, {0x08, 0x08, 0x08, 0x08, 0x08}, {0x00, 0x60, 0x60, 0x00, 0x00},
    {0x20, 0x10, 0x08, 0x04, 0x02}, {0x3E, 0x51, 0x49, 0x45, 0x3E}, {0x00, 0x42, 0x7F, 0x40, 0x00},
    {0x42, 0x61, 0x51, 0x49, 0x46}, {0x21, 0x41, 0x45, 0x4B, 0x31}, {0x18, 0x14, 0x12, 0x7F, 0x10},
    {0x27, 0x45, 0x45, 0x45, 0x39}, {0x3C, 0x4A, 0x49, 0x49, 0x30}, {0x01, 0x71, 0x09, 0x05, 0x03},
    {0x36, 0x49, 0x49, 0x49, 0x36}, {0x06, 0x49, 0x49, 0x29, 0x1E}, {0x00, 0x36, 0x36, 0x00, 0x00},
    {0x00, 0x56, 0x36, 0x00, 0x00}, {0x00, 0x08, 0x14, 0x22, 0x41}, {0x14, 0x14, 0x14, 0x14, 0x14},
    {0x41, 0x22, 0x14, 0x08, 0x00}, {0x02, 0x01, 0x51, 0x09, 0x06}, {0x32, 0x49, 0x79, 0x41, 0x3E},
    {0x7E, 0x11, 0x11, 0x11, 0x7E}, {0x7F, 0x49, 0x49, 0x49, 0x36}, {0x3E, 0x41, 0x41, 0x41, 0x22},
    {0x7F, 0x41, 0x41, 0x22, 0x1C}, {0x7F, 0x49, 0x49, 0x49, 0x41}, {0x7F, 0x09, 0x09, 0x01, 0x01},
    {0x3E, 0x41, 0x41, 0x51, 0x32}, {0x7F, 0x08, 0x08, 0x08, 0x7F}, {0x00, 0x41, 0x7F, 0x41, 0x00},
    {0x20, 0x40, 0x41, 0x3F, 0x01}, {0x7F, 0x08, 0x14, 0x22, 0x41}, {0x7F, 0x40, 0x40, 0x40, 0x40},
    {0x7F, 0x02, 0x04, 0x02, 0x7F}, {0x7F, 0x04, 0x08, 0x10, 0x7F}, {0x3E, 0x41, 0x41, 0x41, 0x3E},
    {0x7F, 0x09, 0x09, 0x09, 0x06}, {0x3E, 0x41, 0x51, 0x21, 0x5E}, {0x7F, 0x09, 0x19, 0x29, 0x46},
    {0x46, 0x49, 0x49, 0x49, 0x31}, {0x01, 0x01, 0x7F, 0x01, 0x01}, {0x3F, 0x40, 0x40, 0x40, 0x3F},
    {0x1F, 0x20, 0x40, 0x20, 0x1F}, {0x7F, 0x20, 0x18, 0x20, 0x7F}, {0x63, 0x14, 0x08, 0x14, 0x63},
    {0x03, 0x04, 0x78, 0x04, 0x03}, {0x61, 0x51, 0x49, 0x45, 0x43}, {0x00, 0x00, 0x7F, 0x41, 0x41},
    {0x02, 0x04, 0x08, 0x10, 0x20}, {0x41, 0x41, 0x7F, 0x00, 0x00}, {0x04, 0x02, 0x01, 0x02, 0x04},
    {0x40, 0x40, 0x40, 0x40, 0x40}, {0x00, 0x01, 0x02, 0x04, 0x00}, {0x20, 0x54, 0x54, 0x54, 0x78},
    {0x7F, 0x48, 0x44, 0x44, 0x38}, {0x38, 0x44, 0x44, 0x44, 0x20}, {0x38, 0x44, 0x44, 0x48, 0x7F},
    {0x38, 0x54, 0x54, 0x54, 0x18}, {0x08, 0x7E, 0x09, 0x01, 0x02}, {0x08, 0x14, 0x54, 0x54, 0x3C},
    {0x7F, 0x08, 0x04, 0x04, 0x78}, {0x00, 0x44, 0x7D, 0x40, 0x00}, {0x20, 0x40, 0x44, 0x3D, 0x00},
    {0x00, 0x7F, 0x10, 0x28, 0x44}, {0x00, 0x41, 0x7F, 0x40, 0x00}, {0x7C, 0x04, 0x18, 0x04, 0x78},
    {0x7C, 0x08, 0x04, 0x04, 0x78}, {0x38, 0x44, 0x44, 0x44, 0x38}, {0x7C, 0x14, 0x14, 0x14, 0x08},
    {0x08, 0x14, 0x14, 0x18, 0x7C}, {0x7C, 0x08, 0x04, 0x04, 0x08}, {0x48, 0x54, 0x54, 0x54, 0x20},
    {0x04, 0x3F, 0x44, 0x40, 0x20}, {0x3C, 0x40, 0x40, 0x20, 0x7C}, {0x1C, 0x20, 0x40, 0x20, 0x1C},
    {0x3C, 0x40, 0x30, 0x40, 0x3C}, {0x44, 0x28, 0x10, 0x28, 0x44}, {0x0C, 0x50, 0x50, 0x50, 0x3C},
    {0x44, 0x64, 0x54, 0x4C, 0x44}, {0x00, 0x08, 0x36, 0x41, 0x00}, {0x00, 0x00, 0x7F, 0x00, 0x00},
    {0x00, 0x41, 0x36, 0x08, 0x00}, {0x08, 0x04, 0x08, 0x10, 0x08},
};

constexpr Color kBlack{0, 0, 0};
constexpr Color kGrid{220, 220, 220};
constexpr Color kAxis{90, 90, 90};

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// Axis range padded to include zero (for bars) and rounded outward.
std::pair<double, double> nice_range(double lo, double hi) {
  if (lo == hi) {
    lo -= 1;
    hi += 1;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

Canvas::Canvas(int width, int height, Color background) {
  raster_.width = width;
  raster_.height = height;
  raster_.channels = 3;
  raster_.pixels.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < raster_.pixels.size(); i += 3) {
    raster_.pixels[i] = background[0];
    raster_.pixels[i + 1] = background[1];
    raster_.pixels[i + 2] = background[2];
  }
}

void Canvas::pixel(int x, int y, Color c) {
  if (x < 0 || y < 0 || x >= raster_.width || y >= raster_.height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * raster_.width + x) * 3;
  raster_.pixels[i] = c[0];
  raster_.pixels[i + 1] = c[1];
  raster_.pixels[i + 2] = c[2];
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Color c) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) pixel(x, y, c);
}

void Canvas::line(int x0, int y0, int x1, int y1, Color c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    pixel(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
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

void Canvas::text(int x, int y, const std::string& s, Color c, int scale) {
  int cx = x;
  for (unsigned char ch : s) {
    const int g = (ch >= 32 && ch <= 126) ? ch - 32 : '?' - 32;
    for (int col = 0; col < 5; ++col)
      for (int row = 0; row < 7; ++row) {
        if ((kFont[g][col] >> row) & 1) {
          fill_rect(cx + col * scale, y + row * scale, cx + col * scale + scale - 1,
                    y + row * scale + scale - 1, c);
        }
      }
    cx += 6 * scale;
  }
}

int Canvas::text_width(const std::string& s, int scale) {
  return static_cast<int>(s.size()) * 6 * scale;
}

void Canvas::save(const std::string& path) const { io::write_png(path, raster_); }

Color palette(std::size_t index) {
  static const Color colors[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                                 {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
                                 {188, 189, 34},  {23, 190, 207}};
  return colors[index % (sizeof(colors) / sizeof(colors[0]))];
}

Canvas bar_chart(const std::string& title, const std::vector<std::string>& categories,
                 const std::vector<Series>& series, const std::string& y_label) {
  const int left = 60, right = 20, top = 40, bottom = 90;
  const int group_w = std::max(40, 14 * static_cast<int>(series.size()) + 16);
  const int width = std::max(480, left + right + group_w * static_cast<int>(categories.size()));
  const int height = 380;
  Canvas cv(width, height);

  double lo = 0, hi = 0;
  for (const auto& s : series)
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  const auto [ymin, ymax] = nice_range(lo, hi);
  const int plot_h = height - top - bottom;
  auto ypix = [&](double v) {
    return top + static_cast<int>(std::lround((ymax - v) / (ymax - ymin) * plot_h));
  };

  for (int k = 0; k <= 4; ++k) {
    const double v = ymin + (ymax - ymin) * k / 4.0;
    const int y = ypix(v);
    cv.line(left, y, width - right, y, kGrid);
    const std::string t = format_tick(v);
    cv.text(left - 4 - Canvas::text_width(t), y - 3, t, kAxis);
  }
  cv.line(left, top, left, top + plot_h, kAxis);
  cv.line(left, ypix(0), width - right, ypix(0), kAxis);

  const int bar_w = std::max(3, (group_w - 16) / std::max<int>(1, static_cast<int>(series.size())));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const int gx = left + 8 + static_cast<int>(c) * group_w;
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].values.size() || !std::isfinite(series[s].values[c])) continue;
      const int x0 = gx + static_cast<int>(s) * bar_w;
      cv.fill_rect(x0, ypix(0), x0 + bar_w - 2, ypix(series[s].values[c]), palette(s));
    }
    // Category labels are written vertically, one glyph per line.
    std::string label = categories[c].substr(0, 10);
    for (std::size_t i = 0; i < label.size(); ++i) {
      cv.text(gx, top + plot_h + 6 + static_cast<int>(i) * 8, std::string(1, label[i]), kBlack);
    }
  }

  cv.text(left, 12, title, kBlack, 2);
  cv.text(4, top - 12, y_label, kAxis);
  int lx = left + 160;
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (lx + 12 + Canvas::text_width(series[s].name) > width) break;
    cv.fill_rect(lx, top - 12, lx + 7, top - 5, palette(s));
    cv.text(lx + 10, top - 12, series[s].name, kBlack);
    lx += 20 + Canvas::text_width(series[s].name);
  }
  return cv;
}

Canvas scatter_plot(const std::string& title, const std::vector<double>& x,
                    const std::vector<double>& y, const std::string& x_label,
                    const std::string& y_label, const double* slope, const double* intercept) {
  const int width = 480, height = 380, left = 60, right = 20, top = 40, bottom = 50;
  Canvas cv(width, height);
  double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  if (!x.empty()) {
    xlo = *std::min_element(x.begin(), x.end());
    xhi = *std::max_element(x.begin(), x.end());
    ylo = *std::min_element(y.begin(), y.end());
    yhi = *std::max_element(y.begin(), y.end());
  }
  const auto [x0, x1] = nice_range(xlo, xhi);
  const auto [y0, y1] = nice_range(std::min(ylo, 0.0), std::max(yhi, 0.0));
  const int pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double v) { return left + static_cast<int>(std::lround((v - x0) / (x1 - x0) * pw)); };
  auto py = [&](double v) { return top + static_cast<int>(std::lround((y1 - v) / (y1 - y0) * ph)); };

  for (int k = 0; k <= 4; ++k) {
    const double vy = y0 + (y1 - y0) * k / 4.0;
    cv.line(left, py(vy), width - right, py(vy), kGrid);
    const std::string ty = format_tick(vy);
    cv.text(left - 4 - Canvas::text_width(ty), py(vy) - 3, ty, kAxis);
    const double vx = x0 + (x1 - x0) * k / 4.0;
    const std::string tx = format_tick(vx);
    cv.text(px(vx) - Canvas::text_width(tx) / 2, top + ph + 6, tx, kAxis);
  }
  cv.line(left, top, left, top + ph, kAxis);
  cv.line(left, top + ph, width - right, top + ph, kAxis);
  cv.line(left, py(0), width - right, py(0), kAxis);

  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    cv.fill_rect(px(x[i]) - 2, py(y[i]) - 2, px(x[i]) + 2, py(y[i]) + 2, palette(0));
  }
  if (slope && intercept) {
    cv.line(px(x0), py(*slope * x0 + *intercept), px(x1), py(*slope * x1 + *intercept),
            palette(3));
  }
  cv.text(left, 12, title, kBlack, 2);
  cv.text(left + pw / 2 - Canvas::text_width(x_label) / 2, height - 18, x_label, kBlack);
  cv.text(4, top - 12, y_label, kBlack);
  return cv;
}

}  // namespace sitta::plot
