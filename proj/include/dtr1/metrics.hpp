#pragma once

#include <optional>
#include <vector>

#include "dtr1/geometry.hpp"

namespace dtr1 {

/// |a ∩ b| / |a ∪ b|; two empty masks agree perfectly (1.0). Throws
/// std::invalid_argument on a dimension mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);
double bbox_iou(const BoundingBox& a, const BoundingBox& b);

struct OverlapCounts {
  std::size_t intersection = 0;
  std::size_t uni = 0;
};
OverlapCounts mask_overlap(const BinaryMask& a, const BinaryMask& b);

/// max(1, round(0.0075 * image diagonal)).
int default_boundary_radius(int width, int height);

/// Contour accuracy: boundary pixels are set pixels with a 4-neighbour that is
/// unset or off-canvas; matches use Chebyshev distance <= radius.
double boundary_f(const BinaryMask& pred, const BinaryMask& gt, int radius);

struct MetricReport {
  double j_mean = 0.0;
  double f_mean = 0.0;
  double giou = 0.0;
  double ciou = 0.0;
  std::vector<double> per_sample;  // IoU of each pair
};

struct MaskPair {
  BinaryMask pred;
  BinaryMask gt;
};

struct BoxPair {
  BoundingBox pred;
  BoundingBox gt;
};

/// `radius` defaults to default_boundary_radius of each pair's canvas.
MetricReport aggregate(const std::vector<MaskPair>& pairs, std::optional<int> radius = std::nullopt);
/// Boxes are rasterised on the smallest canvas holding both for the F term.
MetricReport aggregate(const std::vector<BoxPair>& pairs, std::optional<int> radius = std::nullopt);

}  // namespace dtr1
