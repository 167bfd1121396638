// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skiptrace/graph.hpp"
#include "skiptrace/metrics.hpp"
#include "skiptrace/rational.hpp"
#include "skiptrace/trace.hpp"

namespace skiptrace {

struct SweepPoint {
  std::int64_t batch_size = 0;
  Tick tklqt = 0;
  std::shared_ptr<const MetricReport> report;  // required by sweet_spot only
};

// Points ordered by strictly increasing batch size.
struct SweepSeries {
  std::string label;
  std::vector<SweepPoint> points;
};

enum class Boundedness { CpuBound, GpuBound };
std::string_view to_string(Boundedness b) noexcept;

struct BoundednessVerdict {
  std::optional<std::int64_t> transition_batch;
  std::vector<Boundedness> labels;  // one per point, never CpuBound after GpuBound
  Rational plateau_level;           // median TKLQT of the leading plateau points
  std::optional<Rational> ratio_at_transition;  // transition TKLQT / plateau level
};

struct ClassifyOptions {
  Rational epsilon{1, 4};
  std::size_t min_plateau = 2;
};

// Knee detection on a TKLQT-vs-batch-size series. The plateau level is the
// median of the first min_plateau points; the transition is the first point
// above (1 + epsilon) x plateau whose successors keep growing above that
// bound. All comparisons are exact.
BoundednessVerdict classify(const SweepSeries& series, const ClassifyOptions& options = {});

struct SweetSpotOptions {
  Rational theta_gpu{3, 10};
  Rational theta_cpu{3, 10};
};

// Longest contiguous batch-size range whose points keep both gpu_idle and
// cpu_idle at or below theta x IL (first such range on ties). nullopt when
// no point qualifies.
std::optional<std::pair<std::int64_t, std::int64_t>> sweet_spot(const SweepSeries& series,
                                                                 const SweetSpotOptions& options = {});

// Sweep inputs: a manifest file, or a directory holding either
// manifest.json or trace files whose names contain bs<INT>.
struct SweepEntry {
  std::filesystem::path file;
  std::int64_t batch_size = 0;
  std::optional<std::filesystem::path> truth;  // generator sidecar, if any
};

struct SweepManifest {
  std::string label;
  std::vector<SweepEntry> entries;  // sorted by batch size
  std::optional<std::int64_t> expected_transition;
};

inline constexpr const char* kManifestName = "manifest.json";

SweepManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const SweepManifest& manifest, const std::filesystem::path& path);
SweepManifest discover_sweep(const std::filesystem::path& dir_or_manifest);

struct SweepLoadOptions {
  FieldMapping mapping;
  GraphOptions graph;
  ReportOptions report;
  bool parallel = true;
};

// Parses every trace (concurrently when allowed) and computes its report.
SweepSeries load_sweep(const SweepManifest& manifest, const SweepLoadOptions& options = {});

}  // namespace skiptrace
