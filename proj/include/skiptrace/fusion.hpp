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

// Kernel names in execution order on one stream, between two host-side
// dependency points.
struct KernelSequence {
  std::int64_t stream = 0;
  std::vector<std::string> names;
};

enum class SegmentPolicy { PerStream, SplitOnSync };
std::string_view to_string(SegmentPolicy policy) noexcept;
std::optional<SegmentPolicy> segment_policy_from_string(std::string_view text) noexcept;

// PerStream: one sequence per stream. SplitOnSync: additionally cut between
// consecutive kernels whose launch calls straddle a host sync or a
// device-to-host copy. Throws NoKernels.
std::vector<KernelSequence> segment_sequences(const DependencyGraph& graph,
                                              SegmentPolicy policy = SegmentPolicy::SplitOnSync);

using Chain = std::vector<std::string>;

struct FusionCandidate {
  Chain chain;
  std::size_t f_chain = 0;   // windows equal to the chain, overlaps counted
  std::size_t f_head = 0;    // windows of the same length starting with chain[0]
  std::size_t head_occurrences = 0;  // raw occurrences of chain[0]
  Rational ps;               // f_chain / f_head
  Rational ps_raw;           // f_chain / head_occurrences
  std::size_t nonoverlap_count = 0;

  std::size_t length() const noexcept { return chain.size(); }
};

// f_head counts only positions with at least L-1 successors, so ps == 1
// exactly when every opportunity realizes the chain. Raw switches the
// threshold test to ps_raw.
enum class HeadCounting { WindowStart, Raw };

struct MineOptions {
  HeadCounting head = HeadCounting::WindowStart;
};

// Candidates of every requested length with score >= threshold, sorted by
// score desc, f_chain desc, then chain names. Throws BadLength (L < 2) and
// BadThreshold (threshold outside (0, 1]).
std::vector<FusionCandidate> mine_chains(std::span<const KernelSequence> seqs, std::span<const std::size_t> lengths,
                                         const Rational& threshold, const MineOptions& options = {});

// Greedy left-to-right count of disjoint occurrences of `chain`.
std::size_t select_nonoverlapping(std::span<const KernelSequence> seqs, const Chain& chain);

struct FusionPlan {
  std::size_t length = 0;
  std::size_t k_eager = 0;
  std::size_t c_fused = 0;
  std::size_t k_fused = 0;
  Rational speedup{1};
  std::size_t unique_candidates = 0;  // chains passing the threshold
  std::size_t total_instances = 0;    // summed f_chain over those chains
  std::vector<FusionCandidate> chains;
  std::vector<std::size_t> fused_per_chain;  // occurrences each chain won after overlap resolution
};

// Launch-count model: K_fused = K_eager - C_fused * (L - 1), speedup =
// K_eager / K_fused. Throws BadLength and DegenerateEager.
FusionPlan apply_fusion(std::size_t k_eager, std::size_t c_fused, std::size_t length);

// Selects every length-L chain with score >= threshold and resolves overlaps
// between chains in sequence order (first match wins).
FusionPlan fusion_plan(std::span<const KernelSequence> seqs, std::size_t length, const Rational& threshold = Rational(1),
                       const MineOptions& options = {});

struct Recommendations {
  std::map<std::string, std::string> labels;
  SegmentPolicy policy = SegmentPolicy::SplitOnSync;
  Rational threshold{1};
  HeadCounting head = HeadCounting::WindowStart;
  std::vector<FusionPlan> plans;
};

nlohmann::json to_json(const Recommendations& recs);
std::string fusion_csv_header();
std::vector<std::string> to_csv_rows(const Recommendations& recs);
void write_table(const Recommendations& recs, std::ostream& out);
// One line per selected chain: length, fused count, names joined by ';'.
void write_chain_manifest(const Recommendations& recs, std::ostream& out);

}  // namespace skiptrace
