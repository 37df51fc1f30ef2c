#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dtr1 {

/// Axis-aligned box in pixel coordinates, half-open on the max edges.
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  long long area() const {
    return static_cast<long long>(x_max - x_min) * static_cast<long long>(y_max - y_min);
  }
  bool valid() const { return x_min >= 0 && y_min >= 0 && x_min < x_max && y_min < y_max; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Row-major run-length encoded binary mask. Runs alternate 0-count, 1-count,
/// ... starting with a (possibly zero) 0-count.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> runs;

  std::size_t pixel_total() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Decoded mask: one byte per pixel, 0 or 1.
struct MaskGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  MaskGrid() = default;
  MaskGrid(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const MaskGrid&, const MaskGrid&) = default;
};

/// Throws std::invalid_argument if the runs do not sum to width*height.
MaskGrid mask_decode(const BinaryMask& mask);
/// Canonical encoding: only the leading run may be zero. Throws on pixels
/// outside {0,1} or a size mismatch.
BinaryMask mask_encode(const MaskGrid& grid);

std::size_t mask_area(const BinaryMask& mask);
/// Tight box around set pixels; nullopt for an empty mask.
std::optional<BoundingBox> mask_bbox(const BinaryMask& mask);
/// Mask with every pixel of `box` set (clipped to the canvas).
BinaryMask box_mask(int width, int height, const BoundingBox& box);
BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);

// Mask files:
//   dtr1-mask/1 <width> <height>
//   <run> <run> ...
std::string mask_to_text(const BinaryMask& mask);
BinaryMask mask_from_text(std::string_view text);
BinaryMask read_mask_file(const std::filesystem::path& path);
void write_mask_file(const std::filesystem::path& path, const BinaryMask& mask);

/// Resolves mask references (paths as written in twins and answers).
class MaskStore {
 public:
  virtual ~MaskStore() = default;
  /// Throws std::runtime_error if the reference cannot be resolved.
  virtual BinaryMask load(std::string_view ref) const = 0;
};

/// Relative references resolve against `root`.
class FileMaskStore final : public MaskStore {
 public:
  explicit FileMaskStore(std::filesystem::path root) : root_(std::move(root)) {}
  BinaryMask load(std::string_view ref) const override;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

class MemoryMaskStore final : public MaskStore {
 public:
  void put(std::string ref, BinaryMask mask) { masks_[std::move(ref)] = std::move(mask); }
  BinaryMask load(std::string_view ref) const override;
  const std::map<std::string, BinaryMask, std::less<>>& all() const { return masks_; }

 private:
  std::map<std::string, BinaryMask, std::less<>> masks_;
};

}  // namespace dtr1
