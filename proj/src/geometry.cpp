#include "plr/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "plr/error.hpp"

namespace plr {

bool BBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x1 <= x2 && y1 <= y2;
}

double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double giou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double enclosing = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
                           (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  if (enclosing <= 0.0) return 0.0;
  const double overlap = uni > 0.0 ? inter / uni : 0.0;
  return overlap - (enclosing - uni) / enclosing;
}

namespace {

void check_image(ImageSize image) {
  if (!(image.width > 0.0) || !(image.height > 0.0) ||
      !std::isfinite(image.width) || !std::isfinite(image.height)) {
    throw ValidationError("image size must be positive and finite");
  }
}

// Everything passes through pixel-space corner form.
BoxCoords to_corner_pixels(const BoxCoords& b, BoxFormat from,
                           ImageSize image) {
  BoxCoords v = b;
  if (from.normalized) {
    check_image(image);
    v = {v[0] * image.width, v[1] * image.height, v[2] * image.width,
         v[3] * image.height};
  }
  switch (from.layout) {
    case BoxLayout::kCorner:
      return v;
    case BoxLayout::kCenter:
      return {v[0] - v[2] / 2.0, v[1] - v[3] / 2.0, v[0] + v[2] / 2.0,
              v[1] + v[3] / 2.0};
    case BoxLayout::kXywh:
      return {v[0], v[1], v[0] + v[2], v[1] + v[3]};
  }
  return v;
}

BoxCoords from_corner_pixels(const BoxCoords& c, BoxFormat to,
                             ImageSize image) {
  BoxCoords v = c;
  switch (to.layout) {
    case BoxLayout::kCorner:
      break;
    case BoxLayout::kCenter:
      v = {(c[0] + c[2]) / 2.0, (c[1] + c[3]) / 2.0, c[2] - c[0], c[3] - c[1]};
      break;
    case BoxLayout::kXywh:
      v = {c[0], c[1], c[2] - c[0], c[3] - c[1]};
      break;
  }
  if (to.normalized) {
    check_image(image);
    v = {v[0] / image.width, v[1] / image.height, v[2] / image.width,
         v[3] / image.height};
  }
  return v;
}

}  // namespace

BoxCoords convert(const BoxCoords& box, BoxFormat from, BoxFormat to,
                  ImageSize image) {
  if (from.layout == to.layout && from.normalized == to.normalized) return box;
  return from_corner_pixels(to_corner_pixels(box, from, image), to, image);
}

BBox to_bbox(const BoxCoords& box, BoxFormat from, ImageSize image) {
  const auto c = to_corner_pixels(box, from, image);
  return {c[0], c[1], c[2], c[3]};
}

BoxCoords from_bbox(const BBox& box, BoxFormat to, ImageSize image) {
  return from_corner_pixels({box.x1, box.y1, box.x2, box.y2}, to, image);
}

FeatureMap::FeatureMap(std::size_t channels, std::size_t height,
                       std::size_t width, std::vector<double> values,
                       double stride)
    : channels_(channels),
      height_(height),
      width_(width),
      stride_(stride),
      values_(std::move(values)) {
  if (channels_ == 0 || height_ == 0 || width_ == 0) {
    throw ValidationError("feature map dimensions must be >= 1");
  }
  if (values_.size() != channels_ * height_ * width_) {
    throw ValidationError("feature map value count does not match C*H*W");
  }
  if (!(stride_ > 0.0) || !std::isfinite(stride_)) {
    throw ValidationError("feature map stride must be positive");
  }
}

FeatureMap::FeatureMap(std::size_t channels, std::size_t height,
                       std::size_t width, double fill, double stride)
    : FeatureMap(channels, height, width,
                 std::vector<double>(channels * height * width, fill),
                 stride) {}

double FeatureMap::bilinear(std::size_t c, double y, double x) const {
  y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
  x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, height_ - 1);
  const std::size_t x1 = std::min(x0 + 1, width_ - 1);
  const double ly = y - static_cast<double>(y0);
  const double lx = x - static_cast<double>(x0);
  const double hy = 1.0 - ly;
  const double hx = 1.0 - lx;
  return hy * hx * at(c, y0, x0) + hy * lx * at(c, y0, x1) +
         ly * hx * at(c, y1, x0) + ly * lx * at(c, y1, x1);
}

std::vector<double> roi_align(const FeatureMap& map, const BBox& box,
                              const RoiAlignParams& params) {
  if (params.out_h == 0 || params.out_w == 0 || params.samples_per_bin == 0) {
    throw ValidationError("roi_align output size and sampling must be >= 1");
  }
  if (!box.valid()) throw ValidationError("roi_align: invalid box");

  const double s = map.stride();
  const double max_x = static_cast<double>(map.width()) * s;
  const double max_y = static_cast<double>(map.height()) * s;
  const double x1 = std::clamp(box.x1, 0.0, max_x);
  const double y1 = std::clamp(box.y1, 0.0, max_y);
  const double x2 = std::clamp(box.x2, 0.0, max_x);
  const double y2 = std::clamp(box.y2, 0.0, max_y);
  if (!(x2 > x1) || !(y2 > y1)) {
    throw DegenerateRegion("roi_align: box has zero area inside feature map");
  }

  const double gx = x1 / s - 0.5;
  const double gy = y1 / s - 0.5;
  const double bin_w = (x2 - x1) / s / static_cast<double>(params.out_w);
  const double bin_h = (y2 - y1) / s / static_cast<double>(params.out_h);
  const std::size_t n = params.samples_per_bin;
  const double inv_count = 1.0 / static_cast<double>(n * n);

  std::vector<double> out(map.channels() * params.out_h * params.out_w);
  std::size_t k = 0;
  for (std::size_t c = 0; c < map.channels(); ++c) {
    for (std::size_t by = 0; by < params.out_h; ++by) {
      for (std::size_t bx = 0; bx < params.out_w; ++bx) {
        double acc = 0.0;
        for (std::size_t iy = 0; iy < n; ++iy) {
          const double y = gy + bin_h * (static_cast<double>(by) +
                                         (static_cast<double>(iy) + 0.5) /
                                             static_cast<double>(n));
          for (std::size_t ix = 0; ix < n; ++ix) {
            const double x = gx + bin_w * (static_cast<double>(bx) +
                                           (static_cast<double>(ix) + 0.5) /
                                               static_cast<double>(n));
            acc += map.bilinear(c, y, x);
          }
        }
        out[k++] = acc * inv_count;
      }
    }
  }
  return out;
}

}  // namespace plr
