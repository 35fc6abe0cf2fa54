#include "slideseek/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace slideseek {

RasterImage resample_area(const RasterImage& src, double sx0, double sy0, double sx1, double sy1,
                          int out_w, int out_h) {
  if (src.empty()) throw ImageError("resample_area: empty source");
  if (out_w < 1 || out_h < 1) throw ImageError("resample_area: empty output");
  if (!(sx0 < sx1 && sy0 < sy1)) throw ImageError("resample_area: empty source window");

  RasterImage out(out_w, out_h);
  const double step_x = (sx1 - sx0) / out_w;
  const double step_y = (sy1 - sy0) / out_h;

  // Per-row/column coverage weights are separable; precompute the x spans.
  struct Span {
    int first;
    int last;  // inclusive
    std::vector<double> w;
  };
  std::vector<Span> xspans(out_w);
  for (int ox = 0; ox < out_w; ++ox) {
    double a = sx0 + ox * step_x;
    double b = a + step_x;
    int p0 = std::clamp(static_cast<int>(std::floor(a)), 0, src.width - 1);
    int p1 = std::clamp(static_cast<int>(std::ceil(b)) - 1, 0, src.width - 1);
    Span s{p0, p1, {}};
    s.w.resize(static_cast<std::size_t>(p1 - p0 + 1));
    for (int p = p0; p <= p1; ++p) {
      double cov = std::min<double>(b, p + 1) - std::max<double>(a, p);
      s.w[static_cast<std::size_t>(p - p0)] = std::max(cov, 0.0);
    }
    xspans[ox] = std::move(s);
  }

  std::vector<double> acc(static_cast<std::size_t>(out_w) * 3);
  for (int oy = 0; oy < out_h; ++oy) {
    double a = sy0 + oy * step_y;
    double b = a + step_y;
    int q0 = std::clamp(static_cast<int>(std::floor(a)), 0, src.height - 1);
    int q1 = std::clamp(static_cast<int>(std::ceil(b)) - 1, 0, src.height - 1);
    std::fill(acc.begin(), acc.end(), 0.0);
    double wsum_y = 0.0;
    for (int q = q0; q <= q1; ++q) {
      double wy = std::max(std::min<double>(b, q + 1) - std::max<double>(a, q), 0.0);
      if (wy <= 0.0) continue;
      wsum_y += wy;
      const std::uint8_t* row = src.at(0, q);
      for (int ox = 0; ox < out_w; ++ox) {
        const Span& s = xspans[ox];
        double r = 0, g = 0, bch = 0, wsum_x = 0;
        const std::uint8_t* px = row + static_cast<std::size_t>(s.first) * 3;
        for (std::size_t k = 0; k < s.w.size(); ++k, px += 3) {
          double wx = s.w[k];
          r += wx * px[0];
          g += wx * px[1];
          bch += wx * px[2];
          wsum_x += wx;
        }
        double* dst = acc.data() + static_cast<std::size_t>(ox) * 3;
        dst[0] += wy * r / wsum_x;
        dst[1] += wy * g / wsum_x;
        dst[2] += wy * bch / wsum_x;
      }
    }
    std::uint8_t* orow = out.at(0, oy);
    for (int ox = 0; ox < out_w; ++ox) {
      for (int c = 0; c < 3; ++c) {
        double v = acc[static_cast<std::size_t>(ox) * 3 + c] / wsum_y;
        orow[static_cast<std::size_t>(ox) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
      }
    }
  }
  return out;
}

RasterImage resize_area(const RasterImage& src, int out_w, int out_h) {
  if (src.width == out_w && src.height == out_h) return src;
  return resample_area(src, 0, 0, src.width, src.height, out_w, out_h);
}

void draw_rect_outline(RasterImage& img, int x0, int y0, int x1, int y1,
                       std::uint8_t r, std::uint8_t g, std::uint8_t b, int thickness) {
  x0 = std::clamp(x0, 0, img.width);
  x1 = std::clamp(x1, 0, img.width);
  y0 = std::clamp(y0, 0, img.height);
  y1 = std::clamp(y1, 0, img.height);
  if (x0 >= x1 || y0 >= y1) return;
  auto paint = [&](int x, int y) {
    std::uint8_t* p = img.at(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  };
  for (int t = 0; t < thickness; ++t) {
    int top = y0 + t, bot = y1 - 1 - t, left = x0 + t, right = x1 - 1 - t;
    if (top > bot || left > right) break;
    for (int x = left; x <= right; ++x) {
      paint(x, top);
      paint(x, bot);
    }
    for (int y = top; y <= bot; ++y) {
      paint(left, y);
      paint(right, y);
    }
  }
}

std::uint64_t pixel_digest(const RasterImage& img) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (i * 8)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<std::uint64_t>(img.width));
  mix(static_cast<std::uint64_t>(img.height));
  for (std::uint8_t byte : img.rgb) {
    h ^= byte;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  if (img.empty()) throw ImageError("encode_png: empty image");
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    const std::uint8_t* s = img.at(0, y);
    std::uint8_t* d = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      d[x * 3 + 0] = s[x * 3 + 2];
      d[x * 3 + 1] = s[x * 3 + 1];
      d[x * 3 + 2] = s[x * 3 + 0];
    }
  }
  std::vector<std::uint8_t> out;
  // Low compression level: slide fixtures are large and regenerated often.
  if (!cv::imencode(".png", bgr, out, {cv::IMWRITE_PNG_COMPRESSION, 1})) {
    throw ImageError("encode_png: encoder failure");
  }
  return out;
}

RasterImage decode_png(const std::vector<std::uint8_t>& bytes) {
  cv::Mat bgr = cv::imdecode(bytes, cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageError("decode_png: not a decodable image");
  RasterImage img(bgr.cols, bgr.rows);
  for (int y = 0; y < img.height; ++y) {
    const std::uint8_t* s = bgr.ptr<std::uint8_t>(y);
    std::uint8_t* d = img.at(0, y);
    for (int x = 0; x < img.width; ++x) {
      d[x * 3 + 0] = s[x * 3 + 2];
      d[x * 3 + 1] = s[x * 3 + 1];
      d[x * 3 + 2] = s[x * 3 + 0];
    }
  }
  return img;
}

void save_png(const std::filesystem::path& path, const RasterImage& img) {
  auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("save_png: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("save_png: write failure for " + path.string());
}

RasterImage load_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("load_png: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace slideseek
