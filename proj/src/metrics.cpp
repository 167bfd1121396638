// SPDX-License-Identifier: Apache-2.0
#include "skiptrace/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <tuple>
#include <utility>

#include <fmt/format.h>

#include "skiptrace/error.hpp"

namespace skiptrace {
namespace {

using Interval = std::pair<Tick, Tick>;

// Length of the union of [begin, end) intervals clipped to [lo, hi).
Tick union_length(std::vector<Interval> intervals, Tick lo, Tick hi) {
  std::sort(intervals.begin(), intervals.end());
  Tick total = 0;
  Tick cursor = lo;
  for (auto [b, e] : intervals) {
    b = std::max(b, cursor);
    e = std::min(e, hi);
    if (e > b) {
      total += e - b;
      cursor = e;
    }
  }
  return total;
}

Tick first_root_begin(const DependencyGraph& graph) {
  if (graph.roots.empty()) throw Error(ErrorCode::NoRoots, "no parent operators on pid " + std::to_string(graph.pid));
  Tick first = graph.node_event(graph.roots.front()).begin;
  for (NodeIndex r : graph.roots) first = std::min(first, graph.node_event(r).begin);
  return first;
}

Tick last_kernel_end(const DependencyGraph& graph) {
  if (graph.kernels.empty()) throw Error(ErrorCode::NoKernels, "trace has no kernel events");
  Tick last = graph.event(graph.kernels.front()).end();
  for (EventIndex k : graph.kernels) last = std::max(last, graph.event(k).end());
  return last;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string label_or_empty(const MetricReport& r, const std::string& key) {
  auto it = r.labels.find(key);
  return it == r.labels.end() ? std::string() : it->second;
}

}  // namespace

std::string_view to_string(TopKKey key) noexcept {
  switch (key) {
    case TopKKey::Count: return "count";
    case TopKKey::TotalDuration: return "total_duration";
    case TopKKey::TotalLaunchLatency: return "total_launch_latency";
  }
  return "count";
}

std::optional<TopKKey> top_k_key_from_string(std::string_view text) noexcept {
  for (auto key : {TopKKey::Count, TopKKey::TotalDuration, TopKKey::TotalLaunchLatency}) {
    if (to_string(key) == text) return key;
  }
  return std::nullopt;
}

std::vector<LaunchRecord> launch_records(const DependencyGraph& graph) {
  std::vector<LaunchRecord> out;
  out.reserve(graph.launch_pairs.size());
  for (const auto& pair : graph.launch_pairs) {
    const auto& launch = graph.event(pair.launch);
    const auto& kernel = graph.event(pair.kernel);
    Tick latency = kernel.begin - launch.begin;
    if (latency < 0) {
      throw Error(ErrorCode::ClockSkew, "kernel '" + kernel.name + "' begins " + std::to_string(-latency) +
                                            " ns before its launch call (correlation " +
                                            std::to_string(*kernel.correlation) + ")");
    }
    out.push_back({kernel.name, *kernel.correlation, launch.begin, kernel.begin, kernel.duration, latency});
  }
  std::stable_sort(out.begin(), out.end(), [](const LaunchRecord& a, const LaunchRecord& b) {
    return std::tie(a.kernel_begin, a.correlation) < std::tie(b.kernel_begin, b.correlation);
  });
  return out;
}

Tick tklqt(std::span<const LaunchRecord> records) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no matched launch/kernel pairs");
  Tick total = 0;
  for (const auto& r : records) total += r.launch_latency;
  return total;
}

Rational akd(std::span<const LaunchRecord> records) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no matched launch/kernel pairs");
  Tick total = 0;
  for (const auto& r : records) total += r.kernel_duration;
  return Rational(total, static_cast<std::int64_t>(records.size()));
}

Tick inference_latency(const DependencyGraph& graph) {
  Tick end = last_kernel_end(graph);
  return end - first_root_begin(graph);
}

GpuIdle gpu_idle(const DependencyGraph& graph) {
  Tick end = last_kernel_end(graph);
  Tick begin = first_root_begin(graph);
  GpuIdle out;
  Tick busy = 0;
  std::set<std::int64_t> streams;
  std::vector<Interval> intervals;
  for (EventIndex k : graph.kernels) {
    const auto& ev = graph.event(k);
    busy += ev.duration;
    streams.insert(*ev.stream);
    intervals.emplace_back(ev.begin, ev.end());
  }
  out.idle = (end - begin) - busy;
  out.streams = streams.size();
  out.multi_stream = streams.size() > 1;
  if (out.multi_stream) out.union_idle = (end - begin) - union_length(std::move(intervals), begin, end);
  return out;
}

Tick cpu_idle(const DependencyGraph& graph) {
  Tick end = last_kernel_end(graph);
  Tick begin = first_root_begin(graph);
  std::vector<Interval> busy;
  for (const auto& node : graph.nodes) {
    const auto& ev = graph.event(node.event);
    if (std::binary_search(graph.launch_tids.begin(), graph.launch_tids.end(), ev.tid)) {
      busy.emplace_back(ev.begin, ev.end());
    }
  }
  Tick idle = (end - begin) - union_length(std::move(busy), begin, end);
  return std::max<Tick>(idle, 0);
}

std::vector<KernelAggregate> top_k_kernels(std::span<const LaunchRecord> records, std::size_t k, TopKKey key) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no launch records to aggregate");
  if (k == 0) throw Error(ErrorCode::Usage, "top-k requires k >= 1");
  std::map<std::string, KernelAggregate> by_name;
  for (const auto& r : records) {
    auto& agg = by_name[r.kernel_name];
    agg.name = r.kernel_name;
    ++agg.count;
    agg.total_duration += r.kernel_duration;
    agg.total_launch_latency += r.launch_latency;
  }
  std::vector<KernelAggregate> out;
  out.reserve(by_name.size());
  for (auto& [name, agg] : by_name) {
    agg.mean_duration = Rational(agg.total_duration, static_cast<std::int64_t>(agg.count));
    out.push_back(std::move(agg));
  }
  auto metric = [key](const KernelAggregate& a) -> std::int64_t {
    switch (key) {
      case TopKKey::Count: return static_cast<std::int64_t>(a.count);
      case TopKKey::TotalDuration: return a.total_duration;
      case TopKKey::TotalLaunchLatency: return a.total_launch_latency;
    }
    return 0;
  };
  // by_name iteration is already name-ascending, so a stable sort keeps ties ordered.
  std::stable_sort(out.begin(), out.end(),
                   [&](const KernelAggregate& a, const KernelAggregate& b) { return metric(a) > metric(b); });
  if (out.size() > k) out.resize(k);
  return out;
}

MetricReport compute_report(const DependencyGraph& graph, const ReportOptions& options) {
  MetricReport r;
  r.labels = graph.trace->meta().labels;
  r.il = inference_latency(graph);
  auto records = launch_records(graph);
  r.tklqt = tklqt(records);
  r.akd = akd(records);
  auto idle = gpu_idle(graph);
  r.gpu_idle = idle.idle;
  r.gpu_idle_union = idle.union_idle;
  r.multi_stream = idle.multi_stream;
  r.n_streams = idle.streams;
  r.cpu_idle = cpu_idle(graph);
  r.n_kernels = graph.kernels.size();
  r.n_launches = records.size();
  r.total_kernel_duration = r.il - r.gpu_idle;
  r.top_k_key = options.key;
  r.top_k = top_k_kernels(records, options.top_k, options.key);
  r.warnings = {
      {"ambiguous_nesting", graph.warnings.ambiguous_nesting},
      {"ragged_nesting", graph.warnings.ragged_nesting},
      {"duplicate_launch_correlation", graph.warnings.duplicate_launch_correlation},
      {"duration_clamped", graph.trace->meta().duration_warnings},
      {"orphan_kernels", graph.orphan_kernels.size()},
      {"orphan_launches", graph.orphan_launches.size()},
  };
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["labels"] = r.labels;
  j["tklqt_ns"] = r.tklqt;
  j["akd_ns"] = format_decimal(r.akd, kDecimalPlaces);
  j["akd_exact"] = {r.akd.numerator(), r.akd.denominator()};
  j["il_ns"] = r.il;
  j["gpu_idle_ns"] = r.gpu_idle;
  j["gpu_idle_union_ns"] = r.gpu_idle_union ? nlohmann::json(*r.gpu_idle_union) : nlohmann::json(nullptr);
  j["cpu_idle_ns"] = r.cpu_idle;
  j["cpu_idle_definition"] = "union of CpuOp/RuntimeCall busy intervals on launching threads";
  j["total_kernel_duration_ns"] = r.total_kernel_duration;
  j["n_kernels"] = r.n_kernels;
  j["n_launches"] = r.n_launches;
  j["n_streams"] = r.n_streams;
  j["multi_stream"] = r.multi_stream;
  j["top_k_key"] = std::string(to_string(r.top_k_key));
  auto& top = j["top_k"] = nlohmann::json::array();
  for (const auto& a : r.top_k) {
    top.push_back({{"name", a.name},
                   {"count", a.count},
                   {"total_duration_ns", a.total_duration},
                   {"total_launch_latency_ns", a.total_launch_latency},
                   {"mean_duration_ns", format_decimal(a.mean_duration, kDecimalPlaces)}});
  }
  j["warnings"] = r.warnings;
  return j;
}

std::string csv_header() {
  return "label,model,batch_size,n_kernels,n_launches,n_streams,tklqt_ns,akd_ns,il_ns,gpu_idle_ns,"
         "gpu_idle_union_ns,cpu_idle_ns,total_kernel_duration_ns,multi_stream";
}

std::string to_csv_row(const MetricReport& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}", csv_field(label_or_empty(r, "label")),
                     csv_field(label_or_empty(r, "model")), csv_field(label_or_empty(r, "batch_size")), r.n_kernels,
                     r.n_launches, r.n_streams, r.tklqt, format_decimal(r.akd, kDecimalPlaces), r.il, r.gpu_idle,
                     r.gpu_idle_union ? std::to_string(*r.gpu_idle_union) : std::string(), r.cpu_idle,
                     r.total_kernel_duration, r.multi_stream ? 1 : 0);
}

void write_table(const MetricReport& r, std::ostream& out) {
  auto row = [&](std::string_view name, const std::string& value) { out << fmt::format("{:<30} {:>20}\n", name, value); };
  if (auto it = r.labels.find("label"); it != r.labels.end()) out << "trace: " << it->second << '\n';
  row("kernels", std::to_string(r.n_kernels));
  row("matched launches", std::to_string(r.n_launches));
  row("streams", std::to_string(r.n_streams));
  row("TKLQT (ns)", std::to_string(r.tklqt));
  row("AKD (ns)", format_decimal(r.akd, kDecimalPlaces));
  row("inference latency (ns)", std::to_string(r.il));
  row("gpu_idle (ns)", std::to_string(r.gpu_idle));
  if (r.gpu_idle_union) row("gpu_idle, interval union (ns)", std::to_string(*r.gpu_idle_union));
  row("cpu_idle (union definition)", std::to_string(r.cpu_idle));
  out << fmt::format("\ntop {} kernels by {}:\n", r.top_k.size(), to_string(r.top_k_key));
  out << fmt::format("{:>8} {:>16} {:>16} {:>16}  {}\n", "count", "total dur", "total t_l", "mean dur", "name");
  for (const auto& a : r.top_k) {
    out << fmt::format("{:>8} {:>16} {:>16} {:>16}  {}\n", a.count, a.total_duration, a.total_launch_latency,
                       format_decimal(a.mean_duration, 1), a.name);
  }
}

}  // namespace skiptrace
