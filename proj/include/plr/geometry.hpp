#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace plr {

/// Axis-aligned box in corner form, continuous pixel coordinates.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  /// x1 <= x2, y1 <= y2 and all coordinates finite.
  bool valid() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

enum class BoxLayout {
  kCorner,  // x1, y1, x2, y2
  kCenter,  // cx, cy, w, h
  kXywh,    // x, y, w, h (COCO)
};

struct BoxFormat {
  BoxLayout layout = BoxLayout::kCorner;
  /// Coordinates divided by image width (x, w) and height (y, h).
  bool normalized = false;
};

struct ImageSize {
  double width = 1.0;
  double height = 1.0;
};

using BoxCoords = std::array<double, 4>;

double intersection_area(const BBox& a, const BBox& b);

/// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

/// Generalized IoU, in [-1, 1].
double giou(const BBox& a, const BBox& b);

/// Exact algebraic conversion between layouts. Throws ValidationError when a
/// normalized format is involved and the image size is not positive.
BoxCoords convert(const BoxCoords& box, BoxFormat from, BoxFormat to,
                  ImageSize image = {});

BBox to_bbox(const BoxCoords& box, BoxFormat from, ImageSize image = {});
BoxCoords from_bbox(const BBox& box, BoxFormat to, ImageSize image = {});

/// Dense C x H x W grid, row-major. `stride` is the number of image pixels
/// covered by one cell along each axis.
class FeatureMap {
 public:
  FeatureMap(std::size_t channels, std::size_t height, std::size_t width,
             std::vector<double> values, double stride = 1.0);
  FeatureMap(std::size_t channels, std::size_t height, std::size_t width,
             double fill = 0.0, double stride = 1.0);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  double stride() const { return stride_; }
  std::span<const double> values() const { return values_; }

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * height_ + y) * width_ + x];
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values_[(c * height_ + y) * width_ + x];
  }

  /// Bilinear sample of channel c at continuous grid coordinates, where cell
  /// (iy, ix) sits at (iy, ix). Coordinates are clamped to [0, H-1] x [0, W-1].
  double bilinear(std::size_t c, double y, double x) const;

 private:
  std::size_t channels_;
  std::size_t height_;
  std::size_t width_;
  double stride_;
  std::vector<double> values_;
};

struct RoiAlignParams {
  std::size_t out_h = 7;
  std::size_t out_w = 7;
  std::size_t samples_per_bin = 2;  // per axis
};

/// Average-pooled ROIAlign over a single feature level. The box is given in
/// image pixels, clamped to the map extent, and mapped to grid coordinates
/// with a half-cell offset (cell centers at integer positions).
/// Output layout is channel-major: [c][bin_y][bin_x].
/// Throws DegenerateRegion when the clamped box has zero area.
std::vector<double> roi_align(const FeatureMap& map, const BBox& box,
                              const RoiAlignParams& params = {});

}  // namespace plr
