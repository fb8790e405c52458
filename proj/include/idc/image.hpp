#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idc/rng.hpp"

namespace idc {

// 8-bit RGB raster, row-major, interleaved channels.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> px;  // height * width * 3

  Raster() = default;
  Raster(int w, int h) : width(w), height(h), px(size_t(w) * h * 3, 0) {}

  uint8_t& at(int x, int y, int c) {
    return px[(size_t(y) * width + x) * 3 + c];
  }
  uint8_t at(int x, int y, int c) const {
    return px[(size_t(y) * width + x) * 3 + c];
  }
  bool operator==(const Raster& o) const {
    return width == o.width && height == o.height && px == o.px;
  }
};

// Binary PPM (P6, maxval 255).
void write_ppm(const std::string& path, const Raster& img);
Raster read_ppm(const std::string& path);

// Bilinear sampling at output pixel centers, channels rounded to nearest.
Raster resize_bilinear(const Raster& img, int out_w, int out_h);

// Reference on top, modified below, then stretched to a square.
Raster vconcat(const Raster& top, const Raster& bottom);
Raster concat_and_resize(const Raster& img_ref, const Raster& img_mod,
                         int out_side);

// Separable Gaussian blur with edge replication.
Raster gaussian_blur(const Raster& img, double sigma);

// Uniform per-channel quantization to q levels (JPEG stand-in).
Raster quantize_levels(const Raster& img, int q);

struct AugmentConfig {
  double blur_prob = 0.5;
  double quant_prob = 0.5;
  double sigma_lo = 0.3;
  double sigma_hi = 1.0;
};

// Non-disruptive pixel augmentation: optional blur and/or quantization.
// Never geometric, never color-semantic; labels are untouched upstream.
Raster augment(const Raster& img, Rng& rng,
               const AugmentConfig& cfg = AugmentConfig{});

}  // namespace idc
