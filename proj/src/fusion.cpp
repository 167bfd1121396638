// SPDX-License-Identifier: Apache-2.0
#include "skiptrace/fusion.hpp"

#include <algorithm>
#include <tuple>
#include <unordered_map>

#include <fmt/format.h>

#include "skiptrace/error.hpp"

namespace skiptrace {
namespace {

using KernelId = std::uint32_t;

struct Occurrence {
  std::size_t seq;
  std::size_t pos;
};

// All windows of one length that hold the same kernel ids.
struct WindowGroup {
  std::vector<Occurrence> occurrences;  // in (seq, pos) order
};

// Kernel names interned to dense ids, with prefix hashes so any window
// hashes in O(1).
class InternedSequences {
 public:
  explicit InternedSequences(std::span<const KernelSequence> seqs) {
    for (const auto& s : seqs) {
      auto& ids = seqs_.emplace_back();
      ids.reserve(s.names.size());
      for (const auto& name : s.names) {
        auto [it, inserted] = ids_.try_emplace(name, static_cast<KernelId>(names_.size()));
        if (inserted) names_.push_back(name);
        ids.push_back(it->second);
      }
      auto& prefix = prefix_.emplace_back(ids.size() + 1, 0);
      for (std::size_t i = 0; i < ids.size(); ++i) prefix[i + 1] = prefix[i] * kBase + ids[i] + 1;
      while (powers_.size() <= ids.size()) powers_.push_back(powers_.back() * kBase);
    }
    occurrences_.assign(names_.size(), 0);
    for (const auto& ids : seqs_) {
      for (KernelId id : ids) ++occurrences_[id];
    }
  }

  std::size_t size() const { return seqs_.size(); }
  std::span<const KernelId> seq(std::size_t s) const { return seqs_[s]; }
  const std::string& name(KernelId id) const { return names_[id]; }
  std::size_t name_count() const { return names_.size(); }
  std::size_t occurrences(KernelId id) const { return occurrences_[id]; }
  std::size_t total_kernels() const {
    std::size_t n = 0;
    for (const auto& s : seqs_) n += s.size();
    return n;
  }

  std::uint64_t hash(std::size_t s, std::size_t pos, std::size_t len) const {
    return prefix_[s][pos + len] - prefix_[s][pos] * powers_[len];
  }
  std::span<const KernelId> window(Occurrence o, std::size_t len) const { return seq(o.seq).subspan(o.pos, len); }

  Chain chain(Occurrence o, std::size_t len) const {
    Chain out;
    out.reserve(len);
    for (KernelId id : window(o, len)) out.push_back(names_[id]);
    return out;
  }

 private:
  static constexpr std::uint64_t kBase = 0x9E3779B97F4A7C15ull;
  std::vector<std::string> names_;
  std::unordered_map<std::string, KernelId> ids_;
  std::vector<std::vector<KernelId>> seqs_;
  std::vector<std::vector<std::uint64_t>> prefix_;
  std::vector<std::uint64_t> powers_{1};
  std::vector<std::size_t> occurrences_;
};

struct LengthIndex {
  std::vector<WindowGroup> groups;
  std::vector<std::size_t> window_starts;  // per kernel id: windows beginning with it
};

LengthIndex index_windows(const InternedSequences& seqs, std::size_t len) {
  LengthIndex index;
  index.window_starts.assign(seqs.name_count(), 0);
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_hash;
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    auto ids = seqs.seq(s);
    if (ids.size() < len) continue;
    for (std::size_t pos = 0; pos + len <= ids.size(); ++pos) {
      ++index.window_starts[ids[pos]];
      Occurrence occ{s, pos};
      auto window = seqs.window(occ, len);
      auto& bucket = by_hash[seqs.hash(s, pos, len)];
      auto match = std::find_if(bucket.begin(), bucket.end(), [&](std::size_t g) {
        auto other = seqs.window(index.groups[g].occurrences.front(), len);
        return std::equal(window.begin(), window.end(), other.begin());
      });
      if (match == bucket.end()) {
        bucket.push_back(index.groups.size());
        index.groups.push_back({{occ}});
      } else {
        index.groups[*match].occurrences.push_back(occ);
      }
    }
  }
  return index;
}

std::size_t greedy_disjoint(const std::vector<Occurrence>& occurrences, std::size_t len) {
  std::size_t count = 0;
  std::size_t seq = static_cast<std::size_t>(-1);
  std::size_t next_free = 0;
  for (const auto& o : occurrences) {
    if (o.seq != seq) {
      seq = o.seq;
      next_free = 0;
    }
    if (o.pos >= next_free) {
      ++count;
      next_free = o.pos + len;
    }
  }
  return count;
}

void check_length(std::size_t len) {
  if (len < 2) throw Error(ErrorCode::BadLength, "chain length must be >= 2 (got " + std::to_string(len) + ")");
}

void check_threshold(const Rational& t) {
  if (t <= Rational(0) || t > Rational(1)) throw Error(ErrorCode::BadThreshold, "threshold must lie in (0, 1]");
}

struct MinedGroup {
  std::size_t group;
  FusionCandidate candidate;
};

std::vector<MinedGroup> mine_length(const InternedSequences& seqs, const LengthIndex& index, std::size_t len,
                                    const Rational& threshold, const MineOptions& options) {
  std::vector<MinedGroup> out;
  for (std::size_t g = 0; g < index.groups.size(); ++g) {
    const auto& group = index.groups[g];
    KernelId head = seqs.window(group.occurrences.front(), len).front();
    FusionCandidate c;
    c.f_chain = group.occurrences.size();
    c.f_head = index.window_starts[head];
    c.head_occurrences = seqs.occurrences(head);
    c.ps = Rational(static_cast<std::int64_t>(c.f_chain), static_cast<std::int64_t>(c.f_head));
    c.ps_raw = Rational(static_cast<std::int64_t>(c.f_chain), static_cast<std::int64_t>(c.head_occurrences));
    const Rational& score = options.head == HeadCounting::Raw ? c.ps_raw : c.ps;
    if (score < threshold) continue;
    c.chain = seqs.chain(group.occurrences.front(), len);
    c.nonoverlap_count = greedy_disjoint(group.occurrences, len);
    out.push_back({g, std::move(c)});
  }
  return out;
}

bool candidate_order(const FusionCandidate& a, const FusionCandidate& b, HeadCounting head) {
  const Rational& sa = head == HeadCounting::Raw ? a.ps_raw : a.ps;
  const Rational& sb = head == HeadCounting::Raw ? b.ps_raw : b.ps;
  if (sa != sb) return sa > sb;
  if (a.f_chain != b.f_chain) return a.f_chain > b.f_chain;
  return a.chain < b.chain;
}

}  // namespace

std::string_view to_string(SegmentPolicy policy) noexcept {
  return policy == SegmentPolicy::PerStream ? "per_stream" : "split_on_sync";
}

std::optional<SegmentPolicy> segment_policy_from_string(std::string_view text) noexcept {
  if (text == "per_stream") return SegmentPolicy::PerStream;
  if (text == "split_on_sync") return SegmentPolicy::SplitOnSync;
  return std::nullopt;
}

std::vector<KernelSequence> segment_sequences(const DependencyGraph& graph, SegmentPolicy policy) {
  if (graph.kernels.empty()) throw Error(ErrorCode::NoKernels, "trace has no kernel events");
  std::unordered_map<EventIndex, Tick> launch_time;
  for (const auto& p : graph.launch_pairs) launch_time.emplace(p.kernel, graph.event(p.launch).begin);
  auto issued_at = [&](EventIndex k) {
    auto it = launch_time.find(k);
    return it != launch_time.end() ? it->second : graph.event(k).begin;
  };
  auto sync_between = [&](Tick lo, Tick hi) {
    auto it = std::upper_bound(graph.sync_points.begin(), graph.sync_points.end(), lo);
    return it != graph.sync_points.end() && *it < hi;
  };

  std::vector<KernelSequence> out;
  for (const auto& [stream, kernels] : kernels_in_stream_order(graph)) {
    KernelSequence current{stream, {}};
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      if (i > 0 && policy == SegmentPolicy::SplitOnSync && sync_between(issued_at(kernels[i - 1]), issued_at(kernels[i]))) {
        out.push_back(std::move(current));
        current = KernelSequence{stream, {}};
      }
      current.names.push_back(graph.event(kernels[i]).name);
    }
    out.push_back(std::move(current));
  }
  return out;
}

std::vector<FusionCandidate> mine_chains(std::span<const KernelSequence> seqs, std::span<const std::size_t> lengths,
                                         const Rational& threshold, const MineOptions& options) {
  if (lengths.empty()) throw Error(ErrorCode::BadLength, "no chain lengths requested");
  for (std::size_t len : lengths) check_length(len);
  check_threshold(threshold);
  InternedSequences interned(seqs);
  std::vector<FusionCandidate> out;
  for (std::size_t len : lengths) {
    auto index = index_windows(interned, len);
    for (auto& mined : mine_length(interned, index, len, threshold, options)) out.push_back(std::move(mined.candidate));
  }
  std::sort(out.begin(), out.end(),
            [&](const FusionCandidate& a, const FusionCandidate& b) { return candidate_order(a, b, options.head); });
  return out;
}

std::size_t select_nonoverlapping(std::span<const KernelSequence> seqs, const Chain& chain) {
  if (chain.empty()) return 0;
  std::size_t count = 0;
  for (const auto& s : seqs) {
    std::size_t i = 0;
    while (i + chain.size() <= s.names.size()) {
      if (std::equal(chain.begin(), chain.end(), s.names.begin() + static_cast<std::ptrdiff_t>(i))) {
        ++count;
        i += chain.size();
      } else {
        ++i;
      }
    }
  }
  return count;
}

FusionPlan apply_fusion(std::size_t k_eager, std::size_t c_fused, std::size_t length) {
  check_length(length);
  if (k_eager == 0) throw Error(ErrorCode::DegenerateEager, "no kernels launched in eager mode");
  std::size_t removed = c_fused * (length - 1);
  if (c_fused * length > k_eager) {
    throw Error(ErrorCode::DegenerateEager, "cannot fuse " + std::to_string(c_fused) + " chains of length " +
                                            std::to_string(length) + " out of " + std::to_string(k_eager) +
                                            " kernels");
  }
  FusionPlan plan;
  plan.length = length;
  plan.k_eager = k_eager;
  plan.c_fused = c_fused;
  plan.k_fused = k_eager - removed;
  plan.speedup = Rational(static_cast<std::int64_t>(k_eager), static_cast<std::int64_t>(plan.k_fused));
  return plan;
}

FusionPlan fusion_plan(std::span<const KernelSequence> seqs, std::size_t length, const Rational& threshold,
                       const MineOptions& options) {
  check_length(length);
  check_threshold(threshold);
  InternedSequences interned(seqs);
  auto index = index_windows(interned, length);
  auto mined = mine_length(interned, index, length, threshold, options);
  std::sort(mined.begin(), mined.end(), [&](const MinedGroup& a, const MinedGroup& b) {
    return candidate_order(a.candidate, b.candidate, options.head);
  });

  // Every window belongs to exactly one group, so walking all selected
  // occurrences in (seq, pos) order reproduces a left-to-right scan.
  struct Hit {
    Occurrence at;
    std::size_t chain;
  };
  std::vector<Hit> hits;
  for (std::size_t c = 0; c < mined.size(); ++c) {
    for (const auto& o : index.groups[mined[c].group].occurrences) hits.push_back({o, c});
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    return std::tie(a.at.seq, a.at.pos) < std::tie(b.at.seq, b.at.pos);
  });
  std::vector<std::size_t> fused(mined.size(), 0);
  std::size_t c_fused = 0;
  std::size_t seq = static_cast<std::size_t>(-1);
  std::size_t next_free = 0;
  for (const auto& h : hits) {
    if (h.at.seq != seq) {
      seq = h.at.seq;
      next_free = 0;
    }
    if (h.at.pos < next_free) continue;
    ++fused[h.chain];
    ++c_fused;
    next_free = h.at.pos + length;
  }

  FusionPlan plan = apply_fusion(interned.total_kernels(), c_fused, length);
  plan.unique_candidates = mined.size();
  for (auto& m : mined) {
    plan.total_instances += m.candidate.f_chain;
    plan.chains.push_back(std::move(m.candidate));
  }
  plan.fused_per_chain = std::move(fused);
  return plan;
}

nlohmann::json to_json(const Recommendations& recs) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["labels"] = recs.labels;
  j["policy"] = std::string(to_string(recs.policy));
  j["threshold"] = format_decimal(recs.threshold, 6);
  j["head_counting"] = recs.head == HeadCounting::Raw ? "raw" : "window_start";
  auto& plans = j["plans"] = nlohmann::json::array();
  for (const auto& p : recs.plans) {
    nlohmann::json jp{{"length", p.length},
                      {"unique_candidates", p.unique_candidates},
                      {"total_instances", p.total_instances},
                      {"c_fused", p.c_fused},
                      {"k_eager", p.k_eager},
                      {"k_fused", p.k_fused},
                      {"speedup", format_decimal(p.speedup, 6)},
                      {"speedup_exact", {p.speedup.numerator(), p.speedup.denominator()}}};
    auto& chains = jp["chains"] = nlohmann::json::array();
    for (std::size_t i = 0; i < p.chains.size(); ++i) {
      const auto& c = p.chains[i];
      chains.push_back({{"kernels", c.chain},
                        {"f_chain", c.f_chain},
                        {"f_head", c.f_head},
                        {"ps", format_decimal(c.ps, 6)},
                        {"ps_raw", format_decimal(c.ps_raw, 6)},
                        {"nonoverlap_count", c.nonoverlap_count},
                        {"fused", p.fused_per_chain[i]}});
    }
    plans.push_back(std::move(jp));
  }
  return j;
}

std::string fusion_csv_header() { return "length,unique_candidates,total_instances,c_fused,k_eager,k_fused,speedup"; }

std::vector<std::string> to_csv_rows(const Recommendations& recs) {
  std::vector<std::string> rows;
  for (const auto& p : recs.plans) {
    rows.push_back(fmt::format("{},{},{},{},{},{},{}", p.length, p.unique_candidates, p.total_instances, p.c_fused,
                               p.k_eager, p.k_fused, format_decimal(p.speedup, 6)));
  }
  return rows;
}

void write_table(const Recommendations& recs, std::ostream& out) {
  out << fmt::format("policy {}, threshold {}\n", to_string(recs.policy), format_decimal(recs.threshold, 6));
  out << fmt::format("{:>6} {:>10} {:>10} {:>8} {:>8} {:>8} {:>10}\n", "L", "unique", "instances", "C_fused",
                     "K_eager", "K_fused", "speedup");
  for (const auto& p : recs.plans) {
    out << fmt::format("{:>6} {:>10} {:>10} {:>8} {:>8} {:>8} {:>10}\n", p.length, p.unique_candidates,
                       p.total_instances, p.c_fused, p.k_eager, p.k_fused, format_decimal(p.speedup, 4));
  }
}

void write_chain_manifest(const Recommendations& recs, std::ostream& out) {
  for (const auto& p : recs.plans) {
    for (std::size_t i = 0; i < p.chains.size(); ++i) {
      out << p.length << '\t' << p.fused_per_chain[i] << '\t';
      const auto& names = p.chains[i].chain;
      for (std::size_t k = 0; k < names.size(); ++k) out << (k ? ";" : "") << names[k];
      out << '\n';
    }
  }
}

}  // namespace skiptrace
