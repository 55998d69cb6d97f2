#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "vitforge/errors.hpp"
#include "vitforge/tensor.hpp"

namespace vitforge {

// 8-bit interleaved RGB raster, row-major.
struct ImageRGB {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  ImageRGB() = default;
  ImageRGB(int h, int w)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {
    if (h <= 0 || w <= 0) throw DimensionError("image dimensions must be positive");
  }

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

namespace detail {

struct JpegErrorState {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_fail(j_common_ptr cinfo) {
  auto* state = reinterpret_cast<JpegErrorState*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, state->message);
  std::longjmp(state->jump, 1);
}

// Corrupt-data warnings (truncation, bad markers) are promoted to hard
// errors; evaluation must never run on silently patched pixels.
inline void jpeg_warn(j_common_ptr cinfo, int msg_level) {
  if (msg_level < 0) jpeg_fail(cinfo);
}

inline ImageRGB decode_jpeg(std::span<const std::uint8_t> bytes,
                            const std::string& origin) {
  jpeg_decompress_struct cinfo{};
  JpegErrorState err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_fail;
  err.pub.emit_message = jpeg_warn;

  ImageRGB out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError(origin + ": JPEG decode failed: " + err.message);
  }

  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;  // grayscale promoted by replication
  jpeg_start_decompress(&cinfo);

  out.height = static_cast<int>(cinfo.output_height);
  out.width = static_cast<int>(cinfo.output_width);
  out.pixels.resize(static_cast<std::size_t>(out.height) * out.width * 3);
  const std::size_t stride = static_cast<std::size_t>(out.width) * 3;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

inline ImageRGB decode_png(std::span<const std::uint8_t> bytes,
                           const std::string& origin) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DataError(origin + ": PNG decode failed: " + image.message);
  }
  // Read as RGBA (libpng replicates grayscale and expands palettes), then
  // drop the alpha channel.
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw DataError(origin + ": PNG decode failed: " + message);
  }
  ImageRGB out(static_cast<int>(image.height), static_cast<int>(image.width));
  const std::size_t n = static_cast<std::size_t>(out.height) * out.width;
  for (std::size_t i = 0; i < n; ++i) {
    out.pixels[i * 3 + 0] = rgba[i * 4 + 0];
    out.pixels[i * 3 + 1] = rgba[i * 4 + 1];
    out.pixels[i * 3 + 2] = rgba[i * 4 + 2];
  }
  return out;
}

}  // namespace detail

// Decodes PNG or JPEG bytes into 8-bit RGB. Grayscale is promoted by channel
// replication; alpha is dropped. Corrupt or unsupported input raises
// DataError carrying `origin`.
inline ImageRGB decode_image_bytes(std::span<const std::uint8_t> bytes,
                                   const std::string& origin) {
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' &&
      bytes[3] == 'G') {
    return detail::decode_png(bytes, origin);
  }
  if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8) {
    return detail::decode_jpeg(bytes, origin);
  }
  throw DataError(origin + ": not a PNG or JPEG file");
}

inline ImageRGB decode_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open file");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_image_bytes(bytes, path.string());
}

inline void write_png(const ImageRGB& img, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(),
                               0, nullptr)) {
    throw DataError(path.string() + ": PNG encode failed: " + image.message);
  }
}

// Bilinear resize with half-pixel center alignment: the source coordinate of
// destination pixel d is (d + 0.5) * (src/dst) - 0.5, clamped to the image
// rectangle. Channels are interpolated independently; results are rounded to
// nearest with ties away from zero.
inline ImageRGB resize_bilinear(const ImageRGB& img, int out_h = 224,
                                int out_w = 224) {
  if (img.height < 1 || img.width < 1) {
    throw DimensionError("resize: source image is empty");
  }
  if (out_h < 1 || out_w < 1) {
    throw DimensionError("resize: output dimensions must be positive");
  }
  struct Axis {
    int lo, hi;
    double frac;
  };
  const auto make_axis = [](int out_n, int src_n) {
    std::vector<Axis> axis(static_cast<std::size_t>(out_n));
    const double scale = static_cast<double>(src_n) / out_n;
    for (int d = 0; d < out_n; ++d) {
      double s = (d + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
      const int lo = static_cast<int>(std::floor(s));
      axis[static_cast<std::size_t>(d)] = {lo, std::min(lo + 1, src_n - 1), s - lo};
    }
    return axis;
  };
  const std::vector<Axis> ys = make_axis(out_h, img.height);
  const std::vector<Axis> xs = make_axis(out_w, img.width);

  ImageRGB out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const Axis& ay = ys[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      const Axis& ax = xs[static_cast<std::size_t>(x)];
      for (int c = 0; c < 3; ++c) {
        const double v00 = img.at(ay.lo, ax.lo, c);
        const double v01 = img.at(ay.lo, ax.hi, c);
        const double v10 = img.at(ay.hi, ax.lo, c);
        const double v11 = img.at(ay.hi, ax.hi, c);
        const double top = v00 * (1.0 - ax.frac) + v01 * ax.frac;
        const double bot = v10 * (1.0 - ax.frac) + v11 * ax.frac;
        const double v = top * (1.0 - ay.frac) + bot * ay.frac;
        const long r = std::lround(v);  // ties away from zero
        out.at(y, x, c) =
            static_cast<std::uint8_t>(std::clamp<long>(r, 0, 255));
      }
    }
  }
  return out;
}

// Per-channel normalization constants; pixel -> (pixel/255 - mean) / std.
struct NormalizationSpec {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};

  static NormalizationSpec imagenet() { return {}; }
  static NormalizationSpec identity() { return {{0.f, 0.f, 0.f}, {1.f, 1.f, 1.f}}; }

  void validate() const {
    for (const float s : std) {
      if (!(s > 0.0f)) {
        throw ConfigError("normalization std components must be strictly positive");
      }
    }
  }

  float apply(float scaled01, int channel) const {
    return (scaled01 - mean[static_cast<std::size_t>(channel)]) /
           std[static_cast<std::size_t>(channel)];
  }
  float invert(float value, int channel) const {
    return value * std[static_cast<std::size_t>(channel)] +
           mean[static_cast<std::size_t>(channel)];
  }
};

// Converts an RGB image of the expected size into a channel-major float
// tensor [3, H, W], scaling to [0,1] and normalizing per channel.
inline Tensor to_normalized_tensor(const ImageRGB& img, const NormalizationSpec& spec,
                                   int expect_h = 224, int expect_w = 224) {
  if (img.height != expect_h || img.width != expect_w) {
    throw DimensionError("expected image " + std::to_string(expect_h) + "x" +
                         std::to_string(expect_w) + ", got " +
                         std::to_string(img.height) + "x" +
                         std::to_string(img.width));
  }
  spec.validate();
  Tensor out({3, expect_h, expect_w});
  float* dst = out.data();
  const std::size_t plane = static_cast<std::size_t>(expect_h) * expect_w;
  for (int y = 0; y < expect_h; ++y) {
    for (int x = 0; x < expect_w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * expect_w + x;
      for (int c = 0; c < 3; ++c) {
        const float scaled = static_cast<float>(img.pixels[p * 3 + c]) / 255.0f;
        dst[static_cast<std::size_t>(c) * plane + p] = spec.apply(scaled, c);
      }
    }
  }
  return out;
}

}  // namespace vitforge
