// SPDX-License-Identifier: Apache-2.0
#include "skiptrace/graph.hpp"

#include <algorithm>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "json.hpp"

namespace skiptrace {
namespace {

std::int64_t pick_pid(const Trace& trace) {
  std::map<std::int64_t, std::size_t> cpu_ops;
  std::map<std::int64_t, std::size_t> launches;
  for (const auto& ev : trace.events()) {
    if (ev.kind == EventKind::CpuOp) ++cpu_ops[ev.pid];
    if (ev.kind == EventKind::RuntimeCall) ++launches[ev.pid];
  }
  const auto& counts = cpu_ops.empty() ? launches : cpu_ops;
  std::int64_t best = 0;
  std::size_t best_count = 0;
  for (const auto& [pid, n] : counts) {
    if (n > best_count) {
      best = pid;
      best_count = n;
    }
  }
  return best;
}

bool is_device_to_host(const TraceEvent& ev) {
  return ev.name.find("DtoH") != std::string::npos || ev.name.find("Device -> Pageable") != std::string::npos ||
         ev.name.find("Device -> Pinned") != std::string::npos;
}

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace

std::optional<NodeIndex> DependencyGraph::node_of(EventIndex i) const {
  auto it = node_by_event_.find(i);
  if (it == node_by_event_.end()) return std::nullopt;
  return it->second;
}

bool DependencyGraph::same_structure(const DependencyGraph& other) const {
  auto node_eq = [](const OpNode& a, const OpNode& b) {
    return a.event == b.event && a.parent == b.parent && a.children == b.children &&
           a.launched_kernel == b.launched_kernel;
  };
  return pid == other.pid && std::equal(nodes.begin(), nodes.end(), other.nodes.begin(), other.nodes.end(), node_eq) &&
         roots == other.roots && launch_pairs == other.launch_pairs && orphan_kernels == other.orphan_kernels &&
         orphan_launches == other.orphan_launches && kernels == other.kernels && sync_points == other.sync_points &&
         launch_tids == other.launch_tids && no_kernels == other.no_kernels && warnings == other.warnings;
}

DependencyGraph build_graph(Trace trace, const GraphOptions& options) {
  return build_graph(std::make_shared<const Trace>(std::move(trace)), options);
}

DependencyGraph build_graph(std::shared_ptr<const Trace> trace, const GraphOptions& options) {
  DependencyGraph g;
  g.trace = std::move(trace);
  const auto events = g.trace->events();
  g.pid = options.pid ? *options.pid : pick_pid(*g.trace);

  // Interval nesting per thread. The sort order puts an enclosing operator
  // before anything it contains, so the innermost open operator whose
  // half-open extent holds the new begin is the parent.
  std::unordered_map<std::int64_t, std::vector<NodeIndex>> open_by_tid;
  std::unordered_map<std::int64_t, EventIndex> kernel_by_corr;
  std::vector<NodeIndex> launch_nodes;
  std::vector<std::int64_t> tids;

  for (EventIndex i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    if (ev.kind == EventKind::Kernel) {
      g.kernels.push_back(i);
      if (ev.correlation) kernel_by_corr.emplace(*ev.correlation, i);
      continue;
    }
    if (ev.pid != g.pid) continue;
    if (ev.kind == EventKind::Sync) g.sync_points.push_back(ev.begin);
    if (ev.kind != EventKind::CpuOp && ev.kind != EventKind::RuntimeCall) continue;

    NodeIndex n = g.nodes.size();
    OpNode node;
    node.event = i;
    g.nodes.push_back(std::move(node));
    g.node_by_event_.emplace(i, n);

    auto& open = open_by_tid[ev.tid];
    while (!open.empty() && g.node_event(open.back()).end() <= ev.begin) open.pop_back();
    if (!open.empty()) {
      NodeIndex parent = open.back();
      const auto& pe = g.node_event(parent);
      g.nodes[n].parent = parent;
      g.nodes[parent].children.push_back(n);
      if (pe.begin == ev.begin) ++g.warnings.ambiguous_nesting;
      if (ev.end() > pe.end()) ++g.warnings.ragged_nesting;
    }
    if (ev.kind == EventKind::CpuOp) {
      open.push_back(n);
      if (!g.nodes[n].parent) g.roots.push_back(n);
    } else {
      launch_nodes.push_back(n);
      tids.push_back(ev.tid);
    }
  }

  std::unordered_map<EventIndex, bool> claimed;
  for (NodeIndex n : launch_nodes) {
    EventIndex li = g.nodes[n].event;
    auto it = kernel_by_corr.find(*events[li].correlation);
    if (it == kernel_by_corr.end()) {
      g.orphan_launches.push_back(li);
    } else if (claimed[it->second]) {
      ++g.warnings.duplicate_launch_correlation;
      g.orphan_launches.push_back(li);
    } else {
      claimed[it->second] = true;
      g.nodes[n].launched_kernel = it->second;
      g.launch_pairs.push_back({li, it->second});
    }
  }
  for (EventIndex k : g.kernels) {
    if (!claimed[k]) g.orphan_kernels.push_back(k);
  }

  // Device-to-host copies block the host; their boundary is the host call
  // that issued them when it can be found.
  std::unordered_map<std::int64_t, Tick> host_call_by_corr;
  for (const auto& ev : events) {
    if (ev.pid == g.pid && ev.correlation && ev.kind != EventKind::Kernel && ev.kind != EventKind::Memcpy) {
      host_call_by_corr.emplace(*ev.correlation, ev.begin);
    }
  }
  for (const auto& ev : events) {
    if (ev.kind != EventKind::Memcpy || !is_device_to_host(ev)) continue;
    auto it = ev.correlation ? host_call_by_corr.find(*ev.correlation) : host_call_by_corr.end();
    g.sync_points.push_back(it != host_call_by_corr.end() ? it->second : ev.begin);
  }
  std::sort(g.sync_points.begin(), g.sync_points.end());

  std::sort(tids.begin(), tids.end());
  tids.erase(std::unique(tids.begin(), tids.end()), tids.end());
  g.launch_tids = std::move(tids);

  g.no_kernels = g.kernels.empty();
  if (g.no_kernels) spdlog::warn("trace has no kernel events");
  if (g.warnings.ambiguous_nesting > 0) {
    spdlog::debug("{} operator(s) share a begin tick with their parent", g.warnings.ambiguous_nesting);
  }
  if (g.warnings.ragged_nesting > 0) {
    spdlog::warn("{} operator(s) end after their parent", g.warnings.ragged_nesting);
  }
  if (g.warnings.duplicate_launch_correlation > 0) {
    spdlog::warn("{} launch call(s) reuse a correlation id", g.warnings.duplicate_launch_correlation);
  }
  return g;
}

std::map<std::int64_t, std::vector<EventIndex>> kernels_in_stream_order(const DependencyGraph& graph) {
  std::map<std::int64_t, std::vector<EventIndex>> out;
  for (EventIndex k : graph.kernels) out[*graph.event(k).stream].push_back(k);
  for (auto& [stream, list] : out) {
    std::stable_sort(list.begin(), list.end(), [&](EventIndex a, EventIndex b) {
      const auto& ea = graph.event(a);
      const auto& eb = graph.event(b);
      if (ea.begin != eb.begin) return ea.begin < eb.begin;
      return ea.correlation < eb.correlation;
    });
  }
  return out;
}

void write_text_tree(const DependencyGraph& graph, std::ostream& out) {
  auto emit = [&](auto&& self, NodeIndex n, int depth) -> void {
    const auto& node = graph.nodes[n];
    const auto& ev = graph.event(node.event);
    out << std::string(static_cast<std::size_t>(depth) * 2, ' ') << ev.name << " [" << ev.begin << ", " << ev.end()
        << ") tid=" << ev.tid;
    if (node.launched_kernel) {
      const auto& k = graph.event(*node.launched_kernel);
      out << " -> " << k.name << " [" << k.begin << ", " << k.end() << ") stream=" << *k.stream;
    } else if (ev.kind == EventKind::RuntimeCall) {
      out << " -> (no kernel)";
    }
    out << '\n';
    for (NodeIndex c : node.children) self(self, c, depth + 1);
  };
  out << "pid " << graph.pid << ": " << graph.nodes.size() << " nodes, " << graph.roots.size() << " roots, "
      << graph.launch_pairs.size() << " launch pairs, " << graph.orphan_launches.size() << " orphan launches, "
      << graph.orphan_kernels.size() << " orphan kernels\n";
  for (NodeIndex r : graph.roots) emit(emit, r, 0);
}

void write_dot(const DependencyGraph& graph, std::ostream& out) {
  out << "digraph dependencies {\n  rankdir=LR;\n";
  for (NodeIndex n = 0; n < graph.nodes.size(); ++n) {
    const auto& ev = graph.node_event(n);
    out << "  n" << n << " [label=" << quoted(ev.name) << ", shape="
        << (ev.kind == EventKind::CpuOp ? "box" : "ellipse") << "];\n";
  }
  for (EventIndex k : graph.kernels) {
    out << "  k" << k << " [label=" << quoted(graph.event(k).name) << ", shape=octagon];\n";
  }
  for (NodeIndex n = 0; n < graph.nodes.size(); ++n) {
    for (NodeIndex c : graph.nodes[n].children) out << "  n" << n << " -> n" << c << ";\n";
    if (graph.nodes[n].launched_kernel) out << "  n" << n << " -> k" << *graph.nodes[n].launched_kernel << ";\n";
  }
  out << "}\n";
}

}  // namespace skiptrace
