#include "dtr1/geometry.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dtr1 {

MaskGrid mask_decode(const BinaryMask& mask) {
  if (mask.width < 0 || mask.height < 0) throw std::invalid_argument("negative mask dimensions");
  const auto total = std::accumulate(mask.runs.begin(), mask.runs.end(), std::uint64_t{0});
  if (total != mask.pixel_total()) {
    throw std::invalid_argument("mask runs sum to " + std::to_string(total) + ", expected " +
                                std::to_string(mask.pixel_total()));
  }
  MaskGrid grid(mask.width, mask.height);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (auto run : mask.runs) {
    std::fill_n(grid.pixels.begin() + static_cast<std::ptrdiff_t>(pos), run, value);
    pos += run;
    value ^= 1;
  }
  return grid;
}

BinaryMask mask_encode(const MaskGrid& grid) {
  if (grid.pixels.size() != static_cast<std::size_t>(grid.width) * grid.height) {
    throw std::invalid_argument("grid size does not match its dimensions");
  }
  BinaryMask mask{grid.width, grid.height, {}};
  std::uint8_t value = 0;
  std::uint32_t run = 0;
  for (auto p : grid.pixels) {
    if (p > 1) throw std::invalid_argument("mask pixels must be 0 or 1");
    if (p != value) {
      mask.runs.push_back(run);
      run = 0;
      value = p;
    }
    ++run;
  }
  if (run > 0 || mask.runs.empty()) mask.runs.push_back(run);
  return mask;
}

std::size_t mask_area(const BinaryMask& mask) {
  std::size_t area = 0;
  for (std::size_t i = 1; i < mask.runs.size(); i += 2) area += mask.runs[i];
  return area;
}

std::optional<BoundingBox> mask_bbox(const BinaryMask& mask) {
  if (mask.width == 0) return std::nullopt;
  std::optional<BoundingBox> box;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < mask.runs.size(); ++i) {
    const auto run = mask.runs[i];
    if (i % 2 == 1 && run > 0) {
      // A run of ones may wrap across rows.
      const auto first = pos;
      const auto last = pos + run - 1;
      const int y0 = static_cast<int>(first / mask.width);
      const int y1 = static_cast<int>(last / mask.width);
      // A wrapped run touches both the last and the first column.
      const int x0 = y1 > y0 ? 0 : static_cast<int>(first % mask.width);
      const int x1 = y1 > y0 ? mask.width - 1 : static_cast<int>(last % mask.width);
      BoundingBox b{x0, y0, x1 + 1, y1 + 1};
      if (!box) {
        box = b;
      } else {
        box->x_min = std::min(box->x_min, b.x_min);
        box->y_min = std::min(box->y_min, b.y_min);
        box->x_max = std::max(box->x_max, b.x_max);
        box->y_max = std::max(box->y_max, b.y_max);
      }
    }
    pos += run;
  }
  return box;
}

BinaryMask box_mask(int width, int height, const BoundingBox& box) {
  MaskGrid grid(width, height);
  for (int y = std::max(0, box.y_min); y < std::min(height, box.y_max); ++y) {
    for (int x = std::max(0, box.x_min); x < std::min(width, box.x_max); ++x) grid.at(x, y) = 1;
  }
  return mask_encode(grid);
}

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("mask union of different dimensions");
  }
  auto ga = mask_decode(a);
  const auto gb = mask_decode(b);
  for (std::size_t i = 0; i < ga.pixels.size(); ++i) ga.pixels[i] |= gb.pixels[i];
  return mask_encode(ga);
}

std::string mask_to_text(const BinaryMask& mask) {
  std::ostringstream out;
  out << "dtr1-mask/1 " << mask.width << ' ' << mask.height << '\n';
  for (std::size_t i = 0; i < mask.runs.size(); ++i) {
    if (i) out << ' ';
    out << mask.runs[i];
  }
  out << '\n';
  return out.str();
}

BinaryMask mask_from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic;
  BinaryMask mask;
  if (!(in >> magic) || magic != "dtr1-mask/1") throw std::runtime_error("not a dtr1-mask/1 file");
  if (!(in >> mask.width >> mask.height) || mask.width < 0 || mask.height < 0) {
    throw std::runtime_error("bad mask header");
  }
  long long run = 0;
  while (in >> run) {
    if (run < 0) throw std::runtime_error("negative run length");
    mask.runs.push_back(static_cast<std::uint32_t>(run));
  }
  if (!in.eof()) throw std::runtime_error("non-numeric run in mask file");
  const auto total = std::accumulate(mask.runs.begin(), mask.runs.end(), std::uint64_t{0});
  if (total != mask.pixel_total()) throw std::runtime_error("mask runs do not cover the canvas");
  return mask;
}

BinaryMask read_mask_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read mask file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return mask_from_text(buf.str());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_mask_file(const std::filesystem::path& path, const BinaryMask& mask) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mask file " + path.string());
  out << mask_to_text(mask);
}

BinaryMask FileMaskStore::load(std::string_view ref) const {
  std::filesystem::path p{std::string(ref)};
  if (p.is_relative()) p = root_ / p;
  return read_mask_file(p);
}

BinaryMask MemoryMaskStore::load(std::string_view ref) const {
  auto it = masks_.find(ref);
  if (it == masks_.end()) throw std::runtime_error("no mask stored under \"" + std::string(ref) + "\"");
  return it->second;
}

}  // namespace dtr1
