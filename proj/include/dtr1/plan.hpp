#pragma once

// Digital-twin construction plans: a dependency map naming which vision
// model nodes to run, validated against a registry of available nodes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dtr1/result.hpp"

namespace dtr1 {

/// Edge `prerequisite -> dependent`.
struct PlanEdge {
  std::string prerequisite;
  std::string dependent;
  friend bool operator==(const PlanEdge&, const PlanEdge&) = default;
};

/// Vertices keep insertion order; edges are unique. Self-loops are kept so
/// validation can report them as cycles.
struct PlanGraph {
  std::vector<std::string> vertices;
  std::vector<PlanEdge> edges;
  // Vertices that were only ever listed as prerequisites, never declared.
  std::vector<std::string> implicit_vertices;

  bool has_vertex(std::string_view name) const;
  void add_vertex(std::string name);
  void add_edge(std::string prerequisite, std::string dependent);
  std::vector<std::string> prerequisites_of(std::string_view name) const;
};

struct PlanFormatError {
  std::string message;
};

/// Parses `{"node": ["prereq", ...], ...}`. Duplicate keys, non-object roots,
/// non-array values and empty names are format errors.
Result<PlanGraph, PlanFormatError> parse_plan(std::string_view text);

/// Inverse of parse_plan for graphs without implicit vertices.
std::string plan_to_text(const PlanGraph& g);

enum class NodeKind { Foundation, DerivedOperator };

struct RegistryEntry {
  std::string name;
  NodeKind kind = NodeKind::Foundation;
  std::string capability;
  std::string input_spec;
  std::string output_spec;
  friend bool operator==(const RegistryEntry&, const RegistryEntry&) = default;
};

class ModelRegistry {
 public:
  ModelRegistry() = default;
  /// Throws std::invalid_argument on duplicate or empty names.
  explicit ModelRegistry(std::vector<RegistryEntry> entries);

  const std::vector<RegistryEntry>& entries() const { return entries_; }
  const RegistryEntry* find(std::string_view name) const;

  /// The six foundation models and two derived operators offered to the policy.
  static ModelRegistry defaults();
  /// JSON document `{"schema": "dtr1-registry/1", "entries": [...]}`.
  static ModelRegistry load(const std::filesystem::path& path);
  static ModelRegistry from_text(std::string_view text);
  std::string to_text() const;
  /// Stable FNV-1a digest of to_text(), hex encoded.
  std::string digest() const;

 private:
  std::vector<RegistryEntry> entries_;
};

struct DagVerdict {
  bool valid_format = false;
  bool acyclic = false;
  bool valid_dependencies = false;
  std::vector<std::string> violations;
  // Non-fatal observations (e.g. undeclared prerequisite-only nodes).
  std::vector<std::string> notes;

  bool all_ok() const { return valid_format && acyclic && valid_dependencies; }
};

DagVerdict validate_plan(const PlanGraph& g, const ModelRegistry& reg);
/// Parses then validates; a parse failure yields valid_format = false and the
/// other indicators false.
DagVerdict validate_plan_text(std::string_view text, const ModelRegistry& reg);

struct CycleError {
  std::vector<std::string> cycle;  // first node repeated implicitly
  std::string describe() const;
};

/// Kahn's algorithm with lexicographic tie-breaking.
Result<std::vector<std::string>, CycleError> topological_order(const PlanGraph& g);

/// The example plan used throughout the docs and fixtures.
inline constexpr std::string_view kExamplePlanText =
    R"({"SAM2": [], "DepthAnything2": [], "DepthStats": ["SAM2", "DepthAnything2"], "SemanticAnalysis": ["SAM2"]})";

}  // namespace dtr1
