#include "idc/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace idc {

void write_ppm(const std::string& path, const Raster& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.px.data()),
            std::streamsize(img.px.size()));
  if (!out) throw std::runtime_error("write_ppm: short write to " + path);
}

Raster read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6")
    throw std::runtime_error("read_ppm: " + path + " is not binary PPM");
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported header in " + path);
  in.get();  // single whitespace after header
  Raster img(w, h);
  in.read(reinterpret_cast<char*>(img.px.data()),
          std::streamsize(img.px.size()));
  if (in.gcount() != std::streamsize(img.px.size()))
    throw std::runtime_error("read_ppm: truncated pixel data in " + path);
  return img;
}

Raster resize_bilinear(const Raster& img, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0)
    throw std::invalid_argument("resize_bilinear: bad output size");
  if (img.width == out_w && img.height == out_h) return img;
  Raster out(out_w, out_h);
  const double sx = double(img.width) / out_w;
  const double sy = double(img.height) / out_h;
#pragma omp parallel for if (out_h >= 64) schedule(static)
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = int(std::floor(fy));
    const double wy = fy - y0;
    int y1 = std::min(y0 + 1, img.height - 1);
    y0 = std::clamp(y0, 0, img.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = int(std::floor(fx));
      const double wx = fx - x0;
      int x1 = std::min(x0 + 1, img.width - 1);
      x0 = std::clamp(x0, 0, img.width - 1);
      for (int c = 0; c < 3; ++c) {
        const double top =
            img.at(x0, y0, c) * (1.0 - wx) + img.at(x1, y0, c) * wx;
        const double bot =
            img.at(x0, y1, c) * (1.0 - wx) + img.at(x1, y1, c) * wx;
        const double v = top * (1.0 - wy) + bot * wy;
        out.at(x, y, c) = uint8_t(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

Raster vconcat(const Raster& top, const Raster& bottom) {
  if (top.width != bottom.width || top.height != bottom.height)
    throw std::invalid_argument("vconcat: dimension mismatch " +
                                std::to_string(top.width) + "x" +
                                std::to_string(top.height) + " vs " +
                                std::to_string(bottom.width) + "x" +
                                std::to_string(bottom.height));
  Raster out(top.width, top.height + bottom.height);
  std::copy(top.px.begin(), top.px.end(), out.px.begin());
  std::copy(bottom.px.begin(), bottom.px.end(),
            out.px.begin() + std::ptrdiff_t(top.px.size()));
  return out;
}

Raster concat_and_resize(const Raster& img_ref, const Raster& img_mod,
                         int out_side) {
  return resize_bilinear(vconcat(img_ref, img_mod), out_side, out_side);
}

Raster gaussian_blur(const Raster& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (double& k : kernel) k /= ksum;

  const int w = img.width, h = img.height;
  std::vector<double> tmp(size_t(w) * h * 3);
  // horizontal pass, edges replicated
#pragma omp parallel for if (h >= 64) schedule(static)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xi = std::clamp(x + i, 0, w - 1);
          acc += kernel[i + radius] * img.at(xi, y, c);
        }
        tmp[(size_t(y) * w + x) * 3 + c] = acc;
      }
  Raster out(w, h);
#pragma omp parallel for if (h >= 64) schedule(static)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yi = std::clamp(y + i, 0, h - 1);
          acc += kernel[i + radius] * tmp[(size_t(yi) * w + x) * 3 + c];
        }
        out.at(x, y, c) = uint8_t(std::lround(std::clamp(acc, 0.0, 255.0)));
      }
  return out;
}

Raster quantize_levels(const Raster& img, int q) {
  if (q < 2 || q > 256)
    throw std::invalid_argument("quantize_levels: q must be in [2,256]");
  Raster out = img;
  for (uint8_t& v : out.px) {
    const int level = std::min(q - 1, int(v) * q / 256);
    v = uint8_t(std::lround(level * 255.0 / (q - 1)));
  }
  return out;
}

Raster augment(const Raster& img, Rng& rng, const AugmentConfig& cfg) {
  // Draw all decisions up front so the rng stream advances identically
  // whichever branches fire.
  const bool do_blur = rng.bernoulli(cfg.blur_prob);
  const double sigma = rng.uniform(cfg.sigma_lo, cfg.sigma_hi);
  const bool do_quant = rng.bernoulli(cfg.quant_prob);
  const int q = rng.bernoulli(0.5) ? 16 : 32;

  Raster out = img;
  if (do_blur) out = gaussian_blur(out, sigma);
  if (do_quant) out = quantize_levels(out, q);
  return out;
}

}  // namespace idc
