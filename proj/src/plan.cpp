#include "dtr1/plan.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dtr1 {

using ojson = nlohmann::ordered_json;

bool PlanGraph::has_vertex(std::string_view name) const {
  return std::find(vertices.begin(), vertices.end(), name) != vertices.end();
}

void PlanGraph::add_vertex(std::string name) {
  if (!has_vertex(name)) vertices.push_back(std::move(name));
}

void PlanGraph::add_edge(std::string prerequisite, std::string dependent) {
  add_vertex(prerequisite);
  add_vertex(dependent);
  PlanEdge e{std::move(prerequisite), std::move(dependent)};
  if (std::find(edges.begin(), edges.end(), e) == edges.end()) edges.push_back(std::move(e));
}

std::vector<std::string> PlanGraph::prerequisites_of(std::string_view name) const {
  std::vector<std::string> out;
  for (const auto& e : edges) {
    if (e.dependent == name) out.push_back(e.prerequisite);
  }
  return out;
}

Result<PlanGraph, PlanFormatError> parse_plan(std::string_view text) {
  std::set<std::string> root_keys;
  std::optional<std::string> duplicate;
  ojson doc;
  try {
    doc = ojson::parse(text, [&](int depth, ojson::parse_event_t event, ojson& parsed) {
      if (event == ojson::parse_event_t::key && depth == 1) {
        auto key = parsed.get<std::string>();
        if (!root_keys.insert(key).second && !duplicate) duplicate = key;
      }
      return true;
    });
  } catch (const ojson::parse_error& e) {
    return PlanFormatError{std::string("malformed plan: ") + e.what()};
  }
  if (duplicate) return PlanFormatError{"duplicate node \"" + *duplicate + "\""};
  if (!doc.is_object()) return PlanFormatError{"plan must be an object mapping nodes to prerequisites"};

  PlanGraph g;
  std::set<std::string> declared;
  for (const auto& [node, prereqs] : doc.items()) {
    if (node.empty()) return PlanFormatError{"empty node name"};
    if (!prereqs.is_array()) {
      return PlanFormatError{"prerequisites of \"" + node + "\" must be a list"};
    }
    declared.insert(node);
    g.add_vertex(node);
    for (const auto& p : prereqs) {
      if (!p.is_string() || p.get<std::string>().empty()) {
        return PlanFormatError{"prerequisites of \"" + node + "\" must be non-empty names"};
      }
      g.add_edge(p.get<std::string>(), node);
    }
  }
  for (const auto& v : g.vertices) {
    if (!declared.count(v)) g.implicit_vertices.push_back(v);
  }
  return g;
}

std::string plan_to_text(const PlanGraph& g) {
  ojson doc = ojson::object();
  for (const auto& v : g.vertices) {
    if (std::find(g.implicit_vertices.begin(), g.implicit_vertices.end(), v) !=
        g.implicit_vertices.end()) {
      continue;
    }
    doc[v] = g.prerequisites_of(v);
  }
  return doc.dump();
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

ModelRegistry::ModelRegistry(std::vector<RegistryEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> names;
  for (const auto& e : entries_) {
    if (e.name.empty()) throw std::invalid_argument("registry entry with empty name");
    if (!names.insert(e.name).second) {
      throw std::invalid_argument("duplicate registry entry \"" + e.name + "\"");
    }
  }
}

const RegistryEntry* ModelRegistry::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const RegistryEntry& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

ModelRegistry ModelRegistry::defaults() {
  using K = NodeKind;
  return ModelRegistry({
      {"SAM2", K::Foundation, "instance segmentation", "video frames",
       "per-frame instance mask collections, encoded as mask file paths"},
      {"DepthAnything2", K::Foundation, "depth estimation", "video frames",
       "dense relative depth map per frame"},
      {"Qwen2.5-VL", K::Foundation, "semantic analysis", "video frames",
       "scene, frame and instance descriptions"},
      {"DINO-2", K::Foundation, "visual feature extraction", "video frames",
       "per-instance feature vectors, encoded as file paths"},
      {"OWLv2", K::Foundation, "object detection", "video frames and text labels",
       "labelled bounding boxes per frame"},
      {"OpenCV", K::Foundation, "frame-level processing", "video frames",
       "frame-level measurements"},
      {"DepthStats", K::DerivedOperator, "per-instance depth statistics",
       "SAM2 masks and DepthAnything2 depth maps",
       "mean, standard deviation, min and max depth over each instance mask"},
      {"SemanticAnalysis", K::DerivedOperator, "multi-level semantic descriptions",
       "SAM2 masks and video frames", "instance, frame and video level descriptions"},
  });
}

namespace {

std::string_view kind_text(NodeKind k) {
  return k == NodeKind::Foundation ? "foundation" : "derived";
}

}  // namespace

ModelRegistry ModelRegistry::from_text(std::string_view text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw SchemaError("", std::string("registry is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
    throw SchemaError("entries", "missing entry list");
  }
  std::vector<RegistryEntry> entries;
  std::size_t i = 0;
  for (const auto& item : doc["entries"]) {
    const auto path = "entries[" + std::to_string(i++) + "]";
    auto field = [&](const char* key) -> std::string {
      if (!item.contains(key) || !item[key].is_string()) {
        throw SchemaError(path + "." + key, "expected a string");
      }
      return item[key].get<std::string>();
    };
    RegistryEntry e;
    e.name = field("name");
    const auto kind = field("kind");
    if (kind == "foundation") e.kind = NodeKind::Foundation;
    else if (kind == "derived") e.kind = NodeKind::DerivedOperator;
    else throw SchemaError(path + ".kind", "expected \"foundation\" or \"derived\"");
    e.capability = field("capability");
    e.input_spec = field("input_spec");
    e.output_spec = field("output_spec");
    entries.push_back(std::move(e));
  }
  try {
    return ModelRegistry(std::move(entries));
  } catch (const std::invalid_argument& e) {
    throw SchemaError("entries", e.what());
  }
}

ModelRegistry ModelRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open registry file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::string ModelRegistry::to_text() const {
  ojson doc;
  doc["schema"] = "dtr1-registry/1";
  doc["entries"] = ojson::array();
  for (const auto& e : entries_) {
    doc["entries"].push_back({{"name", e.name},
                              {"kind", kind_text(e.kind)},
                              {"capability", e.capability},
                              {"input_spec", e.input_spec},
                              {"output_spec", e.output_spec}});
  }
  return doc.dump(2) + "\n";
}

std::string ModelRegistry::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::string CycleError::describe() const {
  std::string out = "cycle: ";
  for (const auto& n : cycle) out += n + " -> ";
  if (!cycle.empty()) out += cycle.front();
  return out;
}

Result<std::vector<std::string>, CycleError> topological_order(const PlanGraph& g) {
  std::map<std::string, std::size_t> indegree;
  std::map<std::string, std::vector<std::string>> dependents;
  for (const auto& v : g.vertices) indegree[v] = 0;
  for (const auto& e : g.edges) {
    ++indegree[e.dependent];
    dependents[e.prerequisite].push_back(e.dependent);
  }

  std::set<std::string> ready;
  for (const auto& [v, d] : indegree) {
    if (d == 0) ready.insert(v);
  }
  std::vector<std::string> order;
  order.reserve(indegree.size());
  while (!ready.empty()) {
    auto v = *ready.begin();
    ready.erase(ready.begin());
    for (const auto& w : dependents[v]) {
      if (--indegree[w] == 0) ready.insert(w);
    }
    order.push_back(std::move(v));
  }
  if (order.size() == indegree.size()) return order;

  // Every unplaced node still has an unplaced prerequisite, so walking
  // prerequisites from any of them must revisit a node.
  std::set<std::string> remaining;
  for (const auto& [v, d] : indegree) {
    if (d > 0) remaining.insert(v);
  }
  std::vector<std::string> walk;
  std::map<std::string, std::size_t> index;
  std::string cur = *remaining.begin();
  while (!index.count(cur)) {
    index[cur] = walk.size();
    walk.push_back(cur);
    std::string next;
    for (const auto& e : g.edges) {
      if (e.dependent == cur && remaining.count(e.prerequisite) &&
          (next.empty() || e.prerequisite < next)) {
        next = e.prerequisite;
      }
    }
    cur = next;
  }
  // walk[index[cur]..] follows prerequisite links; reverse into edge order.
  std::vector<std::string> cycle(walk.begin() + static_cast<std::ptrdiff_t>(index[cur]), walk.end());
  std::reverse(cycle.begin(), cycle.end());
  return CycleError{std::move(cycle)};
}

DagVerdict validate_plan(const PlanGraph& g, const ModelRegistry& reg) {
  DagVerdict v;
  v.valid_format = true;

  auto order = topological_order(g);
  v.acyclic = order.ok();
  if (!order) v.violations.push_back(order.error().describe());

  v.valid_dependencies = true;
  auto fail = [&](std::string msg) {
    v.valid_dependencies = false;
    v.violations.push_back(std::move(msg));
  };
  if (g.vertices.empty()) fail("no nodes selected");
  for (const auto& name : g.vertices) {
    const auto* entry = reg.find(name);
    if (!entry) {
      fail("unknown node \"" + name + "\"");
      continue;
    }
    const auto prereqs = g.prerequisites_of(name);
    if (entry->kind == NodeKind::Foundation && !prereqs.empty()) {
      fail("foundation node \"" + name + "\" must not have prerequisites");
    }
    if (entry->kind == NodeKind::DerivedOperator && prereqs.empty()) {
      fail("derived operator \"" + name + "\" requires at least one prerequisite");
    }
  }
  for (const auto& name : g.implicit_vertices) {
    v.notes.push_back("\"" + name + "\" is only listed as a prerequisite; treated as a root node");
  }
  return v;
}

DagVerdict validate_plan_text(std::string_view text, const ModelRegistry& reg) {
  auto g = parse_plan(text);
  if (!g) {
    DagVerdict v;
    v.violations.push_back(g.error().message);
    return v;
  }
  return validate_plan(*g, reg);
}

}  // namespace dtr1
