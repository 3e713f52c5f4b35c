#ifndef SITTA_PLOT_HPP_
#define SITTA_PLOT_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sitta/image_io.hpp"

namespace sitta::plot {

using Color = std::array<std::uint8_t, 3>;

/// RGB drawing surface with a built-in 5x7 bitmap font (ASCII 32..126).
class Canvas {
 public:
  Canvas(int width, int height, Color background = {255, 255, 255});

  int width() const { return raster_.width; }
  int height() const { return raster_.height; }

  void pixel(int x, int y, Color c);
  void fill_rect(int x0, int y0, int x1, int y1, Color c);
  void line(int x0, int y0, int x1, int y1, Color c);
  /// Text with its top-left corner at (x, y); `scale` multiplies glyph size.
  void text(int x, int y, const std::string& s, Color c, int scale = 1);
  static int text_width(const std::string& s, int scale = 1);

  const io::Raster& raster() const { return raster_; }
  void save(const std::string& path) const;

 private:
  io::Raster raster_;
};

struct Series {
  std::string name;
  std::vector<double> values;  // one per category
};

/// Grouped bar chart with a zero baseline (values may be negative).
Canvas bar_chart(const std::string& title, const std::vector<std::string>& categories,
                 const std::vector<Series>& series, const std::string& y_label);

/// Scatter of (x, y) with an optional fitted line y = slope * x + intercept.
Canvas scatter_plot(const std::string& title, const std::vector<double>& x,
                    const std::vector<double>& y, const std::string& x_label,
                    const std::string& y_label, const double* slope = nullptr,
                    const double* intercept = nullptr);

/// Colors cycled across series.
Color palette(std::size_t index);

}  // namespace sitta::plot

#endif  // SITTA_PLOT_HPP_
