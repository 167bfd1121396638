// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "skiptrace/graph.hpp"
#include "skiptrace/rational.hpp"

namespace skiptrace {

// One matched launch call / kernel pair. launch_latency is kernel begin
// minus launch begin: launch overhead plus any queuing delay.
struct LaunchRecord {
  std::string kernel_name;
  std::int64_t correlation = 0;
  Tick launch_begin = 0;
  Tick kernel_begin = 0;
  Tick kernel_duration = 0;
  Tick launch_latency = 0;
};

struct KernelAggregate {
  std::string name;
  std::size_t count = 0;
  Tick total_duration = 0;
  Tick total_launch_latency = 0;
  Rational mean_duration;
};

enum class TopKKey { Count, TotalDuration, TotalLaunchLatency };
std::string_view to_string(TopKKey key) noexcept;
std::optional<TopKKey> top_k_key_from_string(std::string_view text) noexcept;

struct GpuIdle {
  Tick idle = 0;                      // IL minus the summed kernel durations
  std::optional<Tick> union_idle;     // IL minus the union of kernel intervals; multi-stream only
  bool multi_stream = false;
  std::size_t streams = 0;
};

struct MetricReport {
  Tick tklqt = 0;
  Rational akd;
  Tick il = 0;
  Tick gpu_idle = 0;
  std::optional<Tick> gpu_idle_union;
  Tick cpu_idle = 0;
  Tick total_kernel_duration = 0;
  std::size_t n_kernels = 0;
  std::size_t n_launches = 0;
  std::size_t n_streams = 0;
  bool multi_stream = false;
  TopKKey top_k_key = TopKKey::Count;
  std::vector<KernelAggregate> top_k;
  std::map<std::string, std::string> labels;
  std::map<std::string, std::size_t> warnings;
};

// Records in kernel begin order. Throws ClockSkew when a kernel begins
// before its launch call.
std::vector<LaunchRecord> launch_records(const DependencyGraph& graph);

// Total kernel launch and queuing time. Throws EmptyInput.
Tick tklqt(std::span<const LaunchRecord> records);

// Average kernel duration over the matched kernels. Throws EmptyInput.
Rational akd(std::span<const LaunchRecord> records);

// Last kernel end minus first root operator begin. Throws NoKernels / NoRoots.
Tick inference_latency(const DependencyGraph& graph);

GpuIdle gpu_idle(const DependencyGraph& graph);

// IL minus the union of CpuOp/RuntimeCall busy intervals on the threads
// that issue launches, clamped at zero. The profiler gives no definition of
// CPU idle time; this union form is the one used throughout.
Tick cpu_idle(const DependencyGraph& graph);

std::vector<KernelAggregate> top_k_kernels(std::span<const LaunchRecord> records, std::size_t k, TopKKey key);

struct ReportOptions {
  std::size_t top_k = 10;
  TopKKey key = TopKKey::Count;
};

MetricReport compute_report(const DependencyGraph& graph, const ReportOptions& options = {});

inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kDecimalPlaces = 6;

nlohmann::json to_json(const MetricReport& report);
std::string csv_header();
std::string to_csv_row(const MetricReport& report);
void write_table(const MetricReport& report, std::ostream& out);

}  // namespace skiptrace
