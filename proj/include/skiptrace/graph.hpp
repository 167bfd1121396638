// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "skiptrace/trace.hpp"

namespace skiptrace {

using EventIndex = std::size_t;  // position in Trace::events()
using NodeIndex = std::size_t;   // position in DependencyGraph::nodes

// A CpuOp or launch RuntimeCall on the analyzed process.
struct OpNode {
  EventIndex event = 0;
  std::optional<NodeIndex> parent;
  std::vector<NodeIndex> children;          // ordered by begin
  std::optional<EventIndex> launched_kernel;  // RuntimeCall nodes only
};

struct LaunchPair {
  EventIndex launch = 0;
  EventIndex kernel = 0;
  bool operator==(const LaunchPair&) const = default;
};

struct GraphOptions {
  // Process to analyze; defaults to the pid with the most CpuOp events
  // (smallest pid on ties).
  std::optional<std::int64_t> pid;
};

struct GraphWarnings {
  std::size_t ambiguous_nesting = 0;  // child shares its parent's begin tick
  std::size_t ragged_nesting = 0;     // child ends after its parent
  std::size_t duplicate_launch_correlation = 0;
  bool operator==(const GraphWarnings&) const = default;
};

// Forest of operator -> child operator -> launch call, plus launch -> kernel
// links. Holds the trace it indexes into; immutable once built.
struct DependencyGraph {
  std::shared_ptr<const Trace> trace;
  std::int64_t pid = 0;
  std::vector<OpNode> nodes;
  std::vector<NodeIndex> roots;  // parentless CpuOps, in begin order
  std::vector<LaunchPair> launch_pairs;
  std::vector<EventIndex> orphan_kernels;
  std::vector<EventIndex> orphan_launches;
  std::vector<EventIndex> kernels;      // every Kernel event, in begin order
  std::vector<Tick> sync_points;        // host-side sync / device-to-host copy begins
  std::vector<std::int64_t> launch_tids;  // threads on pid that issue launches
  bool no_kernels = false;
  GraphWarnings warnings;

  const TraceEvent& event(EventIndex i) const { return (*trace)[i]; }
  const TraceEvent& node_event(NodeIndex n) const { return event(nodes[n].event); }
  std::optional<NodeIndex> node_of(EventIndex i) const;

  bool same_structure(const DependencyGraph& other) const;

 private:
  friend DependencyGraph build_graph(std::shared_ptr<const Trace>, const GraphOptions&);
  std::map<EventIndex, NodeIndex> node_by_event_;
};

DependencyGraph build_graph(std::shared_ptr<const Trace> trace, const GraphOptions& options = {});
DependencyGraph build_graph(Trace trace, const GraphOptions& options = {});

// Kernels per stream, sorted by begin with ties broken by correlation.
std::map<std::int64_t, std::vector<EventIndex>> kernels_in_stream_order(const DependencyGraph& graph);

// Debug exports.
void write_text_tree(const DependencyGraph& graph, std::ostream& out);
void write_dot(const DependencyGraph& graph, std::ostream& out);

}  // namespace skiptrace
