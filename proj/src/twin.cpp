#include "dtr1/twin.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace dtr1 {

using json = nlohmann::json;

DepthStats depth_stats(const BinaryMask& mask, const DepthMap& depth) {
  if (mask.width != depth.width || mask.height != depth.height) {
    throw std::invalid_argument("mask is " + std::to_string(mask.width) + "x" +
                                std::to_string(mask.height) + " but depth map is " +
                                std::to_string(depth.width) + "x" + std::to_string(depth.height));
  }
  if (depth.values.size() != static_cast<std::size_t>(depth.width) * depth.height) {
    throw std::invalid_argument("depth map size does not match its dimensions");
  }
  const auto grid = mask_decode(mask);
  DepthStats s;
  double sum = 0.0;
  for (std::size_t i = 0; i < grid.pixels.size(); ++i) {
    if (!grid.pixels[i]) continue;
    const double z = depth.values[i];
    if (!std::isfinite(z)) throw std::invalid_argument("non-finite depth under mask");
    if (s.pixel_count == 0) {
      s.min = s.max = z;
    } else {
      s.min = std::min(s.min, z);
      s.max = std::max(s.max, z);
    }
    sum += z;
    ++s.pixel_count;
  }
  if (s.pixel_count == 0) throw std::invalid_argument("depth statistics of an empty mask");

  const auto n = static_cast<double>(s.pixel_count);
  s.mean = std::clamp(sum / n, s.min, s.max);
  double sq = 0.0;
  for (std::size_t i = 0; i < grid.pixels.size(); ++i) {
    if (!grid.pixels[i]) continue;
    const double d = depth.values[i] - s.mean;
    sq += d * d;
  }
  s.std = std::sqrt(sq / n);
  return s;
}

const InstanceRecord* FrameRecord::find(int instance_id) const {
  auto it = std::find_if(instances.begin(), instances.end(),
                         [&](const InstanceRecord& r) { return r.instance_id == instance_id; });
  return it == instances.end() ? nullptr : &*it;
}

const FrameRecord* DigitalTwin::frame(int t) const {
  if (t < 0 || t >= static_cast<int>(frames.size())) return nullptr;
  return &frames[static_cast<std::size_t>(t)];
}

// ---------------------------------------------------------------------------
// Canonical text
// ---------------------------------------------------------------------------

namespace {

json mask_json(const BinaryMask& m) {
  return json{{"width", m.width}, {"height", m.height}, {"runs", m.runs}};
}

json instance_json(const InstanceRecord& r) {
  json j;
  j["instance_id"] = r.instance_id;
  j["label"] = r.label;
  j["description"] = r.description;
  if (const auto* p = r.mask_path()) j["mask_path"] = *p;
  else j["mask_rle"] = mask_json(*r.inline_mask());
  j["bbox"] = {r.bbox.x_min, r.bbox.y_min, r.bbox.x_max, r.bbox.y_max};
  if (r.depth) {
    j["depth"] = {{"mean", r.depth->mean},
                  {"std", r.depth->std},
                  {"min", r.depth->min},
                  {"max", r.depth->max},
                  {"pixel_count", r.depth->pixel_count}};
  }
  if (r.feature_ref) j["feature_ref"] = *r.feature_ref;
  return j;
}

class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {}

  const json& require(const char* key, json::value_t type) const {
    const auto at = sub(key);
    if (!node_.contains(key)) throw SchemaError(at, "missing field");
    const auto& v = node_.at(key);
    const bool ok = type == json::value_t::number_float ? v.is_number()
                    : type == json::value_t::number_integer ? v.is_number_integer()
                                                            : v.type() == type;
    if (!ok) throw SchemaError(at, std::string("expected ") + json(type).type_name());
    return v;
  }
  std::string str(const char* key) const { return require(key, json::value_t::string).get<std::string>(); }
  int integer(const char* key) const {
    return require(key, json::value_t::number_integer).get<int>();
  }
  double number(const char* key) const {
    return require(key, json::value_t::number_float).get<double>();
  }
  const json& array(const char* key) const { return require(key, json::value_t::array); }
  bool has(const char* key) const { return node_.contains(key); }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& node_;
  std::string path_;
};

std::string indexed(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

BinaryMask read_mask(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected object");
  Reader r(j, path);
  BinaryMask m;
  m.width = r.integer("width");
  m.height = r.integer("height");
  const auto& runs = r.array("runs");
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i].is_number_unsigned()) {
      throw SchemaError(indexed(r.sub("runs"), i), "expected non-negative integer");
    }
    m.runs.push_back(runs[i].get<std::uint32_t>());
  }
  try {
    (void)mask_decode(m);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(r.sub("runs"), e.what());
  }
  return m;
}

InstanceRecord read_instance(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected object");
  Reader r(j, path);
  InstanceRecord rec;
  rec.instance_id = r.integer("instance_id");
  rec.label = r.str("label");
  rec.description = r.str("description");
  const bool has_path = r.has("mask_path");
  const bool has_rle = r.has("mask_rle");
  if (has_path == has_rle) throw SchemaError(r.sub("mask_path"), "exactly one of mask_path, mask_rle required");
  if (has_path) rec.mask = r.str("mask_path");
  else rec.mask = read_mask(j.at("mask_rle"), r.sub("mask_rle"));

  const auto& bb = r.array("bbox");
  if (bb.size() != 4 || !std::all_of(bb.begin(), bb.end(), [](const json& v) { return v.is_number_integer(); })) {
    throw SchemaError(r.sub("bbox"), "expected four integers");
  }
  rec.bbox = {bb[0].get<int>(), bb[1].get<int>(), bb[2].get<int>(), bb[3].get<int>()};
  if (!rec.bbox.valid()) throw SchemaError(r.sub("bbox"), "empty or negative box");
  if (const auto* m = rec.inline_mask()) {
    if (mask_bbox(*m) != std::optional<BoundingBox>(rec.bbox)) {
      throw SchemaError(r.sub("bbox"), "does not match the tight box of the mask");
    }
  }
  if (r.has("depth")) {
    const auto& dj = j.at("depth");
    if (!dj.is_object()) throw SchemaError(r.sub("depth"), "expected object");
    Reader d(dj, r.sub("depth"));
    DepthStats s;
    s.mean = d.number("mean");
    s.std = d.number("std");
    s.min = d.number("min");
    s.max = d.number("max");
    const auto& count = d.require("pixel_count", json::value_t::number_integer);
    if (!count.is_number_unsigned() || count.get<std::size_t>() == 0) {
      throw SchemaError(d.sub("pixel_count"), "must be at least 1");
    }
    s.pixel_count = count.get<std::size_t>();
    if (!(s.min <= s.mean && s.mean <= s.max) || s.std < 0) {
      throw SchemaError(r.sub("depth"), "inconsistent statistics");
    }
    rec.depth = s;
  }
  if (r.has("feature_ref")) rec.feature_ref = r.str("feature_ref");
  return rec;
}

}  // namespace

std::string dt_to_text(const DigitalTwin& dt) {
  json j;
  j["schema"] = kTwinSchema;
  j["global_description"] = dt.global_description;
  j["frame_count"] = dt.frame_count;
  j["source_refs"] = dt.source_refs;
  j["frames"] = json::array();
  for (const auto& f : dt.frames) {
    json fj;
    fj["t"] = f.t;
    fj["scene_description"] = f.scene_description;
    fj["spatial_description"] = f.spatial_description;
    fj["instances"] = json::array();
    for (const auto& inst : f.instances) fj["instances"].push_back(instance_json(inst));
    j["frames"].push_back(std::move(fj));
  }
  return j.dump();
}

DigitalTwin dt_from_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("twin is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("", "twin must be an object");
  Reader r(j, "");
  if (r.str("schema") != kTwinSchema) throw SchemaError("schema", "expected " + std::string(kTwinSchema));

  DigitalTwin dt;
  dt.global_description = r.str("global_description");
  dt.frame_count = r.integer("frame_count");
  if (dt.frame_count < 1) throw SchemaError("frame_count", "must be at least 1");
  const auto& refs = r.array("source_refs");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (!refs[i].is_string()) throw SchemaError(indexed("source_refs", i), "expected string");
    dt.source_refs.push_back(refs[i].get<std::string>());
  }
  if (!dt.source_refs.empty() && dt.source_refs.size() != static_cast<std::size_t>(dt.frame_count)) {
    throw SchemaError("source_refs", "length differs from frame_count");
  }
  const auto& frames = r.array("frames");
  if (frames.size() != static_cast<std::size_t>(dt.frame_count)) {
    throw SchemaError("frames", "has " + std::to_string(frames.size()) + " entries but frame_count is " +
                                    std::to_string(dt.frame_count));
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto path = indexed("frames", i);
    if (!frames[i].is_object()) throw SchemaError(path, "expected object");
    Reader fr(frames[i], path);
    FrameRecord f;
    f.t = fr.integer("t");
    if (f.t != static_cast<int>(i)) throw SchemaError(fr.sub("t"), "frame indices must be 0..T-1 in order");
    f.scene_description = fr.str("scene_description");
    f.spatial_description = fr.str("spatial_description");
    const auto& insts = fr.array("instances");
    std::set<int> ids;
    for (std::size_t k = 0; k < insts.size(); ++k) {
      const auto ipath = indexed(fr.sub("instances"), k);
      auto rec = read_instance(insts[k], ipath);
      if (!ids.insert(rec.instance_id).second) {
        throw SchemaError(ipath + ".instance_id", "duplicate instance id in frame");
      }
      f.instances.push_back(std::move(rec));
    }
    dt.frames.push_back(std::move(f));
  }
  return dt;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

namespace {

template <typename T>
const T* output_as(const OutputBundle& b, const std::string& node) {
  auto it = b.outputs.find(node);
  return it == b.outputs.end() ? nullptr : std::get_if<T>(&it->second);
}

template <typename T>
const T* prerequisite_output(const PlanGraph& plan, const OutputBundle& b, const std::string& node) {
  for (const auto& p : plan.prerequisites_of(node)) {
    if (const auto* out = output_as<T>(b, p)) return out;
  }
  return nullptr;
}

void check_frames(const std::string& node, std::size_t got, std::size_t want) {
  if (got != want) {
    throw std::invalid_argument("output of node \"" + node + "\" covers " + std::to_string(got) +
                                " frames, expected " + std::to_string(want));
  }
}

InstanceRecord* find_instance(FrameRecord& f, int id) {
  auto it = std::find_if(f.instances.begin(), f.instances.end(),
                         [&](const InstanceRecord& r) { return r.instance_id == id; });
  return it == f.instances.end() ? nullptr : &*it;
}

}  // namespace

DigitalTwin assemble_digital_twin(const PlanGraph& plan, const OutputBundle& bundle) {
  auto order = topological_order(plan);
  if (!order) throw std::invalid_argument("plan is cyclic: " + order.error().describe());
  if (bundle.frame_refs.empty()) throw std::invalid_argument("bundle has no frames");
  const auto T = bundle.frame_refs.size();

  for (const auto& node : *order) {
    if (!bundle.outputs.count(node)) {
      throw std::invalid_argument("missing output for node \"" + node + "\"");
    }
  }

  DigitalTwin dt;
  dt.frame_count = static_cast<int>(T);
  dt.source_refs = bundle.frame_refs;
  for (std::size_t t = 0; t < T; ++t) dt.frames.push_back(FrameRecord{static_cast<int>(t), "", "", {}});

  bool have_instances = false;
  auto add_instance = [&](std::size_t t, InstanceRecord rec, const std::string& node) {
    auto& f = dt.frames[t];
    if (find_instance(f, rec.instance_id)) {
      throw std::invalid_argument("node \"" + node + "\" repeats instance " +
                                  std::to_string(rec.instance_id) + " in frame " + std::to_string(t));
    }
    f.instances.push_back(std::move(rec));
  };

  // Instances come from the first segmentation node, or detections if no
  // node segments.
  for (const auto& node : *order) {
    const auto* seg = output_as<InstanceMasks>(bundle, node);
    if (!seg || have_instances) continue;
    check_frames(node, seg->frames.size(), T);
    for (std::size_t t = 0; t < T; ++t) {
      for (const auto& si : seg->frames[t]) {
        auto box = mask_bbox(si.mask);
        if (!box) {
          throw std::invalid_argument("node \"" + node + "\" produced an empty mask for instance " +
                                      std::to_string(si.instance_id));
        }
        InstanceRecord rec;
        rec.instance_id = si.instance_id;
        rec.label = si.label;
        if (si.mask_path) rec.mask = *si.mask_path;
        else rec.mask = si.mask;
        rec.bbox = *box;
        add_instance(t, std::move(rec), node);
      }
    }
    have_instances = true;
  }
  for (const auto& node : *order) {
    const auto* det = output_as<Detections>(bundle, node);
    if (!det) continue;
    check_frames(node, det->frames.size(), T);
    for (std::size_t t = 0; t < T; ++t) {
      for (const auto& d : det->frames[t]) {
        if (auto* rec = find_instance(dt.frames[t], d.instance_id)) {
          if (rec->label.empty()) rec->label = d.label;
        } else if (!have_instances) {
          InstanceRecord r;
          r.instance_id = d.instance_id;
          r.label = d.label;
          r.mask = box_mask(bundle.width, bundle.height, d.box);
          r.bbox = d.box;
          add_instance(t, std::move(r), node);
        }
      }
    }
  }

  for (const auto& node : *order) {
    const auto& out = bundle.outputs.at(node);
    if (const auto* stats = std::get_if<InstanceDepthStats>(&out)) {
      if (!prerequisite_output<InstanceMasks>(plan, bundle, node)) {
        throw std::invalid_argument("node \"" + node + "\" needs a segmentation prerequisite output");
      }
      if (!prerequisite_output<DepthMaps>(plan, bundle, node)) {
        throw std::invalid_argument("node \"" + node + "\" needs a depth map prerequisite output");
      }
      check_frames(node, stats->frames.size(), T);
      for (std::size_t t = 0; t < T; ++t) {
        for (const auto& [id, s] : stats->frames[t]) {
          auto* rec = find_instance(dt.frames[t], id);
          if (!rec) {
            throw std::invalid_argument("node \"" + node + "\" reports unknown instance " +
                                        std::to_string(id) + " in frame " + std::to_string(t));
          }
          rec->depth = s;
        }
      }
    } else if (const auto* sem = std::get_if<SemanticDescriptions>(&out)) {
      check_frames(node, sem->frames.size(), T);
      if (!sem->global.empty()) dt.global_description = sem->global;
      for (std::size_t t = 0; t < T; ++t) {
        const auto& fs = sem->frames[t];
        if (!fs.scene.empty()) dt.frames[t].scene_description = fs.scene;
        if (!fs.spatial.empty()) dt.frames[t].spatial_description = fs.spatial;
        for (const auto& [id, text] : fs.instances) {
          if (auto* rec = find_instance(dt.frames[t], id)) rec->description = text;
        }
      }
    } else if (const auto* feats = std::get_if<InstanceFeatures>(&out)) {
      check_frames(node, feats->frames.size(), T);
      for (std::size_t t = 0; t < T; ++t) {
        for (const auto& [id, ref] : feats->frames[t]) {
          if (auto* rec = find_instance(dt.frames[t], id)) rec->feature_ref = ref;
        }
      }
    } else if (const auto* meas = std::get_if<FrameMeasurements>(&out)) {
      check_frames(node, meas->frames.size(), T);
      for (std::size_t t = 0; t < T; ++t) {
        auto& spatial = dt.frames[t].spatial_description;
        if (meas->frames[t].empty()) continue;
        if (!spatial.empty()) spatial += ' ';
        spatial += meas->frames[t];
      }
    } else if (const auto* depth = std::get_if<DepthMaps>(&out)) {
      check_frames(node, depth->frames.size(), T);
    }
  }
  return dt;
}

}  // namespace dtr1
