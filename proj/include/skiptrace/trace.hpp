// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace skiptrace {

// Nanoseconds since the trace epoch. All downstream arithmetic is integer.
using Tick = std::int64_t;

enum class EventKind : std::uint8_t { CpuOp, RuntimeCall, Kernel, Sync, Memcpy, Other };
inline constexpr std::size_t kEventKindCount = 6;

std::string_view to_string(EventKind kind) noexcept;
std::optional<EventKind> event_kind_from_string(std::string_view text) noexcept;

struct TraceEvent {
  EventKind kind = EventKind::Other;
  std::string name;
  std::string category;  // as found in the source file
  std::int64_t pid = 0;
  std::int64_t tid = 0;  // CPU thread, or stream id for kernels
  Tick begin = 0;
  Tick duration = 0;
  std::optional<std::int64_t> correlation;
  std::optional<std::int64_t> stream;
  std::optional<std::int64_t> device;

  Tick end() const noexcept { return begin + duration; }
  bool operator==(const TraceEvent&) const = default;
};

// Total order used for every Trace: begin, then CpuOp < RuntimeCall < Kernel,
// then longer events first so an enclosing operator precedes its children.
bool event_order(const TraceEvent& a, const TraceEvent& b);

struct TraceMeta {
  std::map<std::string, std::string> labels;  // label, model, batch_size, ...
  std::array<std::size_t, kEventKindCount> kind_counts{};
  std::size_t duration_warnings = 0;  // negative or missing "dur", clamped to 0
  std::size_t skipped_records = 0;    // non-duration records (metadata, flows, counters)

  std::size_t count(EventKind kind) const noexcept {
    return kind_counts[static_cast<std::size_t>(kind)];
  }
};

// Immutable, sorted, validated event collection.
class Trace {
 public:
  Trace() = default;
  // Sorts the events and checks the invariants. Throws EmptyTrace for no
  // events and MalformedTrace for duplicate kernel correlations or
  // overflowing extents.
  explicit Trace(std::vector<TraceEvent> events, TraceMeta meta = {});

  std::span<const TraceEvent> events() const noexcept { return events_; }
  const TraceEvent& operator[](std::size_t i) const { return events_[i]; }
  std::size_t size() const noexcept { return events_.size(); }
  const TraceMeta& meta() const noexcept { return meta_; }
  std::optional<std::string> label(const std::string& key) const;

  // Events and labels; parse statistics are diagnostics and not compared.
  bool operator==(const Trace& other) const {
    return events_ == other.events_ && meta_.labels == other.meta_.labels;
  }

 private:
  std::vector<TraceEvent> events_;
  TraceMeta meta_;
};

// Source-format key names and classification tables. The defaults match
// PyTorch profiler exports; a mapping file can override any of them.
struct FieldMapping {
  std::vector<std::string> correlation_keys{"correlation", "Correlation Id", "External id"};
  std::vector<std::string> stream_keys{"stream"};
  std::vector<std::string> device_keys{"device"};
  std::vector<std::string> launch_names{"cudaLaunchKernel", "cuLaunchKernel",
                                        "cudaLaunchKernelExC"};
  std::vector<std::string> sync_names{"cudaDeviceSynchronize", "cudaStreamSynchronize",
                                      "cudaEventSynchronize"};
  std::map<std::string, EventKind, std::less<>> category_overrides;

  // Fallbacks used when a mapped event lacks the field.
  std::optional<std::int64_t> default_pid;
  std::optional<std::int64_t> default_tid;
  std::optional<std::int64_t> default_stream;
  bool stream_from_tid = false;

  static FieldMapping from_json(const nlohmann::json& doc);
  static FieldMapping from_file(const std::filesystem::path& path);
};

EventKind classify_event(std::string_view category, std::string_view name);
EventKind classify_event(std::string_view category, std::string_view name,
                         const FieldMapping& mapping);

// Reads a Chrome Trace Event file (optionally gzip-compressed). The file
// stem becomes the "label" unless the file carries one.
Trace parse_trace(const std::filesystem::path& path, const FieldMapping& mapping = {});
Trace parse_trace_text(std::string_view text, const FieldMapping& mapping = {});

// Writes the trace back out in the same format with exact microsecond
// decimals, so parse(write(t)) == t.
void write_trace(const Trace& trace, std::ostream& out);
void write_trace(const Trace& trace, const std::filesystem::path& path);

// 12345 -> "12.345"
std::string format_microseconds(Tick ns);

}  // namespace skiptrace
