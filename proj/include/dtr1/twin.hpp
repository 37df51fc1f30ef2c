#pragma once

// Three-level digital-twin representation (video / frame / instance) and the
// per-node output bundle it is assembled from.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dtr1/geometry.hpp"
#include "dtr1/plan.hpp"

namespace dtr1 {

inline constexpr std::string_view kTwinSchema = "dtr1-twin/1";

/// Relative (unitless) depth, row-major.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  DepthMap() = default;
  DepthMap(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

struct DepthStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  std::size_t pixel_count = 0;
  friend bool operator==(const DepthStats&, const DepthStats&) = default;
};

/// Statistics of the depth values under the mask. Throws std::invalid_argument
/// on a dimension mismatch, an empty mask, or non-finite depth.
DepthStats depth_stats(const BinaryMask& mask, const DepthMap& depth);

struct InstanceRecord {
  int instance_id = 0;
  std::string label;
  std::string description;
  std::variant<std::string, BinaryMask> mask;  // path reference or inline
  BoundingBox bbox;
  std::optional<DepthStats> depth;
  std::optional<std::string> feature_ref;

  const std::string* mask_path() const { return std::get_if<std::string>(&mask); }
  const BinaryMask* inline_mask() const { return std::get_if<BinaryMask>(&mask); }
  friend bool operator==(const InstanceRecord&, const InstanceRecord&) = default;
};

struct FrameRecord {
  int t = 0;
  std::string scene_description;
  std::string spatial_description;
  std::vector<InstanceRecord> instances;

  const InstanceRecord* find(int instance_id) const;
  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct DigitalTwin {
  std::string global_description;
  int frame_count = 1;  // 1 for a still image
  std::vector<FrameRecord> frames;
  std::vector<std::string> source_refs;

  const FrameRecord* frame(int t) const;
  friend bool operator==(const DigitalTwin&, const DigitalTwin&) = default;
};

/// Canonical JSON: sorted keys, shortest round-trip numbers, no whitespace.
std::string dt_to_text(const DigitalTwin& dt);
/// Throws SchemaError naming the offending field.
DigitalTwin dt_from_text(std::string_view text);

// ---------------------------------------------------------------------------
// Node outputs
// ---------------------------------------------------------------------------

struct SegmentedInstance {
  int instance_id = 0;
  std::string label;
  BinaryMask mask;
  std::optional<std::string> mask_path;  // when set, the twin carries only the path
};

struct InstanceMasks {
  std::vector<std::vector<SegmentedInstance>> frames;
};

struct DepthMaps {
  std::vector<DepthMap> frames;
};

struct InstanceDepthStats {
  std::vector<std::map<int, DepthStats>> frames;
};

struct FrameSemantics {
  std::string scene;
  std::string spatial;
  std::map<int, std::string> instances;
};

struct SemanticDescriptions {
  std::string global;
  std::vector<FrameSemantics> frames;
};

struct InstanceFeatures {
  std::vector<std::map<int, std::string>> frames;
};

struct Detection {
  int instance_id = 0;
  std::string label;
  BoundingBox box;
};

struct Detections {
  std::vector<std::vector<Detection>> frames;
};

struct FrameMeasurements {
  std::vector<std::string> frames;
};

using NodeOutput = std::variant<InstanceMasks, DepthMaps, InstanceDepthStats, SemanticDescriptions,
                                InstanceFeatures, Detections, FrameMeasurements>;

struct OutputBundle {
  int width = 0;
  int height = 0;
  std::vector<std::string> frame_refs;
  std::map<std::string, NodeOutput> outputs;  // keyed by plan node name
};

/// Maps executed node outputs onto the three twin levels. Throws
/// std::invalid_argument naming the node when an output is missing, a
/// prerequisite's output is absent, or frame counts disagree.
DigitalTwin assemble_digital_twin(const PlanGraph& plan, const OutputBundle& outputs);

}  // namespace dtr1
