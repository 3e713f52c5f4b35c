#include "sitta/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <jpeglib.h>
#include <png.h>
#include <zlib.h>

namespace sitta::io {

Raster to_raster(const Image& image) {
  if (image.n() != 1 || image.c() != 3) {
    throw std::invalid_argument("to_raster: expected a 1x3xHxW image");
  }
  Raster r{image.w(), image.h(), 3, {}};
  r.pixels.resize(static_cast<std::size_t>(r.width) * r.height * 3);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image(0, c, y, x), 0.0f, 1.0f);
        r.pixels[(static_cast<std::size_t>(y) * r.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return r;
}

Image from_raster(const Raster& raster) {
  if (raster.channels != 3) throw std::invalid_argument("from_raster: expected RGB");
  Image image(1, 3, raster.height, raster.width);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        image(0, c, y, x) =
            raster.pixels[(static_cast<std::size_t>(y) * raster.width + x) * 3 + c] /
            255.0f;
      }
    }
  }
  return image;
}

Image quantize(const Image& image) { return from_raster(to_raster(image)); }

void write_png(const std::string& path, const Raster& raster) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(raster.width);
  img.height = static_cast<png_uint_32>(raster.height);
  img.format = raster.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, raster.pixels.data(), 0,
                               nullptr)) {
    throw std::runtime_error("write_png: " + path + ": " + img.message);
  }
}

Raster read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error("read_png: " + path + ": " + img.message);
  }
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raster r{static_cast<int>(img.width), static_cast<int>(img.height), gray ? 1 : 3, {}};
  r.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, r.pixels.data(), 0, nullptr)) {
    throw std::runtime_error("read_png: " + path + ": " + img.message);
  }
  return r;
}

void write_image_png(const std::string& path, const Image& image) {
  write_png(path, to_raster(image));
}

Image read_image_png(const std::string& path) {
  Raster r = read_png(path);
  if (r.channels != 3) throw std::runtime_error("read_image_png: not RGB: " + path);
  return from_raster(r);
}

void write_mask_png(const std::string& path, const LabelMask& mask) {
  Raster r{static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), 1, {}};
  r.pixels.assign(mask.data(), mask.data() + mask.size());
  write_png(path, r);
}

LabelMask read_mask_png(const std::string& path) {
  Raster r = read_png(path);
  if (r.channels != 1) throw std::runtime_error("read_mask_png: not grayscale: " + path);
  LabelMask mask(r.height, r.width);
  std::copy(r.pixels.begin(), r.pixels.end(), mask.data());
  return mask;
}

namespace {

struct JpegError : jpeg_error_mgr {
  static void raise(j_common_ptr cinfo) {
    char buffer[JMSG_LENGTH_MAX];
    (*cinfo->err->format_message)(cinfo, buffer);
    throw std::runtime_error(std::string("jpeg: ") + buffer);
  }
};

}  // namespace

Raster jpeg_roundtrip(const Raster& rgb, int quality) {
  if (rgb.channels != 3) throw std::invalid_argument("jpeg_roundtrip: expected RGB");
  unsigned char* encoded = nullptr;
  unsigned long encoded_size = 0;
  {
    jpeg_compress_struct cinfo;
    JpegError err;
    cinfo.err = jpeg_std_error(&err);
    err.error_exit = &JpegError::raise;
    jpeg_create_compress(&cinfo);
    try {
      jpeg_mem_dest(&cinfo, &encoded, &encoded_size);
      cinfo.image_width = static_cast<JDIMENSION>(rgb.width);
      cinfo.image_height = static_cast<JDIMENSION>(rgb.height);
      cinfo.input_components = 3;
      cinfo.in_color_space = JCS_RGB;
      jpeg_set_defaults(&cinfo);
      jpeg_set_quality(&cinfo, quality, TRUE);
      jpeg_start_compress(&cinfo, TRUE);
      while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(
            rgb.pixels.data() + static_cast<std::size_t>(cinfo.next_scanline) * rgb.width * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
      }
      jpeg_finish_compress(&cinfo);
    } catch (...) {
      jpeg_destroy_compress(&cinfo);
      std::free(encoded);
      throw;
    }
    jpeg_destroy_compress(&cinfo);
  }

  Raster out{rgb.width, rgb.height, 3, {}};
  out.pixels.resize(rgb.pixels.size());
  jpeg_decompress_struct dinfo;
  JpegError err;
  dinfo.err = jpeg_std_error(&err);
  err.error_exit = &JpegError::raise;
  jpeg_create_decompress(&dinfo);
  try {
    jpeg_mem_src(&dinfo, encoded, encoded_size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&dinfo);
    while (dinfo.output_scanline < dinfo.output_height) {
      JSAMPROW row = out.pixels.data() +
                     static_cast<std::size_t>(dinfo.output_scanline) * out.width * 3;
      jpeg_read_scanlines(&dinfo, &row, 1);
    }
    jpeg_finish_decompress(&dinfo);
  } catch (...) {
    jpeg_destroy_decompress(&dinfo);
    std::free(encoded);
    throw;
  }
  jpeg_destroy_decompress(&dinfo);
  std::free(encoded);
  return out;
}

void write_npy_gz(const std::string& path, const TensorF& tensor) {
  std::ostringstream header;
  header << "{'descr': '<f4', 'fortran_order': False, 'shape': (" << tensor.c()
         << ", " << tensor.h() << ", " << tensor.w() << "), }";
  std::string h = header.str();
  // magic(6) + version(2) + len(2) + header, padded to a multiple of 64
  const std::size_t total = 10 + h.size() + 1;
  h.append((64 - total % 64) % 64, ' ');
  h.push_back('\n');

  gzFile file = gzopen(path.c_str(), "wb");
  if (file == nullptr) throw std::runtime_error("write_npy_gz: cannot open " + path);
  const char magic[8] = {'\x93', 'N', 'U', 'M', 'P', 'Y', 1, 0};
  const std::uint16_t len = static_cast<std::uint16_t>(h.size());
  gzwrite(file, magic, 8);
  gzwrite(file, &len, 2);
  gzwrite(file, h.data(), static_cast<unsigned>(h.size()));
  const std::size_t bytes = static_cast<std::size_t>(tensor.c()) * tensor.plane_size() * 4;
  gzwrite(file, tensor.data(), static_cast<unsigned>(bytes));
  if (gzclose(file) != Z_OK) throw std::runtime_error("write_npy_gz: write failed " + path);
}

TensorF read_npy_gz(const std::string& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw std::runtime_error("read_npy_gz: cannot open " + path);
  char magic[8];
  std::uint16_t len = 0;
  if (gzread(file, magic, 8) != 8 || gzread(file, &len, 2) != 2) {
    gzclose(file);
    throw std::runtime_error("read_npy_gz: truncated header " + path);
  }
  std::string h(len, '\0');
  gzread(file, h.data(), len);
  const auto open = h.find("'shape': (");
  if (open == std::string::npos || h.find("<f4") == std::string::npos) {
    gzclose(file);
    throw std::runtime_error("read_npy_gz: unsupported header " + path);
  }
  int c = 0, hh = 0, w = 0;
  std::sscanf(h.c_str() + open + 10, "%d, %d, %d", &c, &hh, &w);
  TensorF out(1, c, hh, w);
  const auto bytes = static_cast<unsigned>(out.size() * 4);
  const int got = gzread(file, out.data(), bytes);
  gzclose(file);
  if (got != static_cast<int>(bytes)) throw std::runtime_error("read_npy_gz: truncated " + path);
  return out;
}

}  // namespace sitta::io
