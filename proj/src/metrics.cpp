#include "dtr1/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dtr1 {

namespace {

void require_same_size(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("masks differ in size: " + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height));
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::vector<std::pair<int, int>> boundary_pixels(const MaskGrid& g) {
  std::vector<std::pair<int, int>> out;
  auto set = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < g.width && y < g.height && g.at(x, y);
  };
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (g.at(x, y) && (!set(x - 1, y) || !set(x + 1, y) || !set(x, y - 1) || !set(x, y + 1))) {
        out.emplace_back(x, y);
      }
    }
  }
  return out;
}

// Fraction of `from` pixels within Chebyshev `radius` of some pixel of `to`.
double matched_fraction(const std::vector<std::pair<int, int>>& from, const MaskGrid& to_grid, int radius) {
  if (from.empty()) return 0.0;
  std::size_t hit = 0;
  for (auto [x, y] : from) {
    bool found = false;
    for (int dy = -radius; dy <= radius && !found; ++dy) {
      for (int dx = -radius; dx <= radius && !found; ++dx) {
        const int nx = x + dx, ny = y + dy;
        found = nx >= 0 && ny >= 0 && nx < to_grid.width && ny < to_grid.height && to_grid.at(nx, ny);
      }
    }
    hit += found;
  }
  return static_cast<double>(hit) / static_cast<double>(from.size());
}

MaskGrid boundary_grid(const MaskGrid& g, const std::vector<std::pair<int, int>>& pts) {
  MaskGrid out(g.width, g.height);
  for (auto [x, y] : pts) out.at(x, y) = 1;
  return out;
}

}  // namespace

OverlapCounts mask_overlap(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b);
  // Merge the two run lists directly.
  OverlapCounts c;
  std::size_t ia = 0, ib = 0;
  std::uint64_t left_a = a.runs.empty() ? 0 : a.runs[0];
  std::uint64_t left_b = b.runs.empty() ? 0 : b.runs[0];
  auto advance = [](const BinaryMask& m, std::size_t& i, std::uint64_t& left) {
    while (left == 0 && i + 1 < m.runs.size()) left = m.runs[++i];
  };
  advance(a, ia, left_a);
  advance(b, ib, left_b);
  while (left_a > 0 && left_b > 0) {
    const auto step = std::min(left_a, left_b);
    const bool va = ia % 2 == 1;
    const bool vb = ib % 2 == 1;
    if (va && vb) c.intersection += step;
    if (va || vb) c.uni += step;
    left_a -= step;
    left_b -= step;
    advance(a, ia, left_a);
    advance(b, ib, left_b);
  }
  return c;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  const auto c = mask_overlap(a, b);
  return ratio(c.intersection, c.uni);
}

double bbox_iou(const BoundingBox& a, const BoundingBox& b) {
  const long long iw = std::max(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const long long ih = std::max(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const long long inter = iw * ih;
  const long long uni = a.area() + b.area() - inter;
  return uni <= 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

int default_boundary_radius(int width, int height) {
  const double diag = std::hypot(static_cast<double>(width), static_cast<double>(height));
  return std::max(1, static_cast<int>(std::lround(0.0075 * diag)));
}

double boundary_f(const BinaryMask& pred, const BinaryMask& gt, int radius) {
  require_same_size(pred, gt);
  if (radius < 0) throw std::invalid_argument("negative boundary radius");
  const auto gp = mask_decode(pred);
  const auto gg = mask_decode(gt);
  const auto bp = boundary_pixels(gp);
  const auto bg = boundary_pixels(gg);
  if (bp.empty() && bg.empty()) return 1.0;
  const double precision = matched_fraction(bp, boundary_grid(gg, bg), radius);
  const double recall = matched_fraction(bg, boundary_grid(gp, bp), radius);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

MetricReport aggregate(const std::vector<MaskPair>& pairs, std::optional<int> radius) {
  if (pairs.empty()) throw std::invalid_argument("aggregate of an empty pair list");
  MetricReport r;
  std::size_t inter = 0, uni = 0;
  double f_sum = 0.0;
  for (const auto& p : pairs) {
    const auto c = mask_overlap(p.pred, p.gt);
    inter += c.intersection;
    uni += c.uni;
    r.per_sample.push_back(ratio(c.intersection, c.uni));
    f_sum += boundary_f(p.pred, p.gt, radius.value_or(default_boundary_radius(p.gt.width, p.gt.height)));
  }
  const auto n = static_cast<double>(pairs.size());
  double iou_sum = 0.0;
  for (double v : r.per_sample) iou_sum += v;
  r.giou = iou_sum / n;
  r.j_mean = r.giou;
  r.ciou = ratio(inter, uni);
  r.f_mean = f_sum / n;
  return r;
}

MetricReport aggregate(const std::vector<BoxPair>& pairs, std::optional<int> radius) {
  if (pairs.empty()) throw std::invalid_argument("aggregate of an empty pair list");
  std::vector<MaskPair> rasterised;
  rasterised.reserve(pairs.size());
  for (const auto& p : pairs) {
    const int w = std::max(p.pred.x_max, p.gt.x_max);
    const int h = std::max(p.pred.y_max, p.gt.y_max);
    rasterised.push_back({box_mask(w, h, p.pred), box_mask(w, h, p.gt)});
  }
  return aggregate(rasterised, radius);
}

}  // namespace dtr1
