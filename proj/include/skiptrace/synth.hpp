// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "skiptrace/boundedness.hpp"
#include "skiptrace/fusion.hpp"
#include "skiptrace/rational.hpp"
#include "skiptrace/trace.hpp"

namespace skiptrace {

// Integer distributions only, so every ground-truth number stays exact.
// JSON forms: 42, {"fixed": 42}, {"uniform": [lo, hi]}, {"choice": [a, b, ...]}.
class Dist {
 public:
  enum class Kind { Fixed, Uniform, Choice };

  static Dist fixed(std::int64_t v) { return Dist(Kind::Fixed, {v}); }
  static Dist uniform(std::int64_t lo, std::int64_t hi) { return Dist(Kind::Uniform, {lo, hi}); }
  static Dist choice(std::vector<std::int64_t> values) { return Dist(Kind::Choice, std::move(values)); }
  static Dist from_json(const nlohmann::json& j);

  std::int64_t draw(std::mt19937_64& rng) const;
  std::int64_t min() const;
  Dist shifted(std::int64_t delta) const;
  nlohmann::json to_json() const;
  Kind kind() const { return kind_; }

 private:
  Dist(Kind kind, std::vector<std::int64_t> values) : kind_(kind), values_(std::move(values)) {}
  Kind kind_;
  std::vector<std::int64_t> values_;
};

enum class Placement { Spread, Block };

struct PlantedChain {
  std::vector<std::string> names;
  std::size_t repeat = 1;
  Placement placement = Placement::Spread;
};

struct GenSpec {
  std::uint64_t seed = 1;
  std::size_t n_ops = 10;
  Dist kernels_per_op = Dist::fixed(1);
  Dist launch_overhead = Dist::fixed(2500);  // kernel begin - launch begin when nothing queues
  Dist kernel_duration = Dist::fixed(1000);
  Dist launch_call_duration = Dist::fixed(400);
  Dist cpu_gap = Dist::fixed(200);  // host time between consecutive launch calls
  Dist op_gap = Dist::fixed(500);   // host time between top-level operators
  // From this offset on the host stops waiting for the device and kernels
  // queue back to back; nullopt means no queuing at all.
  std::optional<Tick> saturate_after;
  std::vector<PlantedChain> planted_chains;
  std::size_t noise_alphabet = 16;
  std::size_t n_streams = 1;
  Rational sync_probability{0};
  std::size_t side_thread_ops = 0;  // operators on a thread that never launches
  Tick time_origin = 0;
  std::vector<std::size_t> truth_lengths;  // chain lengths recorded in the sidecar
  std::string label = "synthetic";
  std::string model = "synthetic";
  std::optional<std::int64_t> batch_size;

  static GenSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;  // throws InvalidSpec
};

struct FusionTruth {
  std::size_t length = 0;
  std::size_t unique_candidates = 0;
  std::size_t total_instances = 0;
  std::size_t c_fused = 0;
  std::size_t k_eager = 0;
  std::size_t k_fused = 0;
  Rational speedup{1};
  bool operator==(const FusionTruth&) const = default;
};

// Expected analyzer outputs, accumulated while the trace is emitted.
struct GroundTruth {
  std::uint64_t seed = 0;
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
  std::size_t sync_points = 0;
  Rational threshold{1};
  std::map<std::size_t, FusionTruth> fusion;             // split_on_sync sequences
  std::map<std::size_t, FusionTruth> fusion_per_stream;  // per_stream sequences
  std::vector<PlantedChain> planted;

  nlohmann::json to_json() const;
  static GroundTruth from_json(const nlohmann::json& j);
  bool operator==(const GroundTruth& other) const { return to_json() == other.to_json(); }
};

struct Generated {
  Trace trace;
  GroundTruth truth;
};

Generated generate(const GenSpec& spec);

// "<dir>/<stem>.json" -> "<dir>/<stem>.truth.json"
std::filesystem::path sidecar_path(const std::filesystem::path& trace_path);
void write_generated(const Generated& generated, const std::filesystem::path& trace_path);
GroundTruth read_ground_truth(const std::filesystem::path& path);

struct SweepSpec {
  std::string label = "sweep";
  std::vector<std::int64_t> batch_sizes;
  Tick duration_per_batch = 0;  // added to every kernel duration per unit of batch size
  std::optional<std::int64_t> saturate_batch;

  static SweepSpec from_json(const nlohmann::json& j);
};

// One trace + sidecar per batch size and a manifest recording the batch
// size at which queuing was switched on.
SweepManifest generate_sweep(const GenSpec& base, const SweepSpec& sweep, const std::filesystem::path& dir);

}  // namespace skiptrace
