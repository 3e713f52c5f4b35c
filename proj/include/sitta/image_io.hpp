#ifndef SITTA_IMAGE_IO_HPP_
#define SITTA_IMAGE_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "sitta/tensor.hpp"

namespace sitta::io {

/// 8-bit interleaved pixels, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

Raster to_raster(const Image& image);
Image from_raster(const Raster& raster);
/// Rounds every value to the nearest 1/255 step, as a PNG round trip would.
Image quantize(const Image& image);

void write_png(const std::string& path, const Raster& raster);
Raster read_png(const std::string& path);

void write_image_png(const std::string& path, const Image& image);
Image read_image_png(const std::string& path);

/// Masks are single-channel 8-bit PNGs; 255 marks ignored pixels.
void write_mask_png(const std::string& path, const LabelMask& mask);
LabelMask read_mask_png(const std::string& path);

/// Baseline JPEG encode + decode of an 8-bit RGB raster at `quality`.
Raster jpeg_roundtrip(const Raster& rgb, int quality);

/// Gzip-compressed NumPy .npy (float32, shape CxHxW) of sample 0.
void write_npy_gz(const std::string& path, const TensorF& tensor);
TensorF read_npy_gz(const std::string& path);

}  // namespace sitta::io

#endif  // SITTA_IMAGE_IO_HPP_
