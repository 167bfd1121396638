// SPDX-License-Identifier: Apache-2.0
// Slow, obviously-correct reference implementations used by the tests.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "skiptrace/trace.hpp"

namespace oracle {

using skiptrace::EventKind;
using skiptrace::Tick;
using skiptrace::Trace;
using skiptrace::TraceEvent;

// Smallest CpuOp on the same pid and tid that precedes event i in trace
// order and whose interval holds i entirely (begin inside, half-open).
// Ties on duration go to the later one.
inline std::optional<std::size_t> parent_of(const Trace& trace, std::size_t i) {
  const auto& c = trace[i];
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < i; ++j) {
    const auto& p = trace[j];
    if (p.kind != EventKind::CpuOp || p.pid != c.pid || p.tid != c.tid) continue;
    if (!(p.begin <= c.begin && c.begin < p.end() && c.end() <= p.end())) continue;
    if (!best || p.duration <= trace[*best].duration) best = j;
  }
  return best;
}

inline Tick union_length(std::vector<std::pair<Tick, Tick>> spans) {
  // Tick-by-tick would be too slow for real spans; sort and sweep instead,
  // but without any clipping shortcuts.
  std::sort(spans.begin(), spans.end());
  Tick total = 0;
  std::optional<std::pair<Tick, Tick>> cur;
  for (auto s : spans) {
    if (s.second <= s.first) continue;
    if (cur && s.first <= cur->second) {
      cur->second = std::max(cur->second, s.second);
    } else {
      if (cur) total += cur->second - cur->first;
      cur = s;
    }
  }
  if (cur) total += cur->second - cur->first;
  return total;
}

using Seq = std::vector<std::string>;

struct WindowCounts {
  std::map<Seq, std::size_t> f_chain;
  std::map<std::string, std::size_t> f_head;  // window starts
  std::map<std::string, std::size_t> raw;     // all occurrences
};

inline WindowCounts count_windows(const std::vector<Seq>& seqs, std::size_t length) {
  WindowCounts w;
  for (const auto& s : seqs) {
    for (const auto& name : s) ++w.raw[name];
    for (std::size_t i = 0; i + length <= s.size(); ++i) {
      Seq window;
      for (std::size_t k = 0; k < length; ++k) window.push_back(s[i + k]);
      ++w.f_chain[window];
      ++w.f_head[s[i]];
    }
  }
  return w;
}

inline std::size_t greedy_nonoverlapping(const std::vector<Seq>& seqs, const Seq& chain) {
  std::size_t n = 0;
  for (const auto& s : seqs) {
    std::size_t i = 0;
    while (i + chain.size() <= s.size()) {
      if (std::equal(chain.begin(), chain.end(), s.begin() + static_cast<std::ptrdiff_t>(i))) {
        ++n;
        i += chain.size();
      } else {
        ++i;
      }
    }
  }
  return n;
}

// Randomly generated operator forest. Operators nest properly (every child
// lies inside its parent), launch calls sit inside operators or at top
// level, and kernels land on a device pid. Some launches have no kernel and
// some kernels no launch.
struct RandomTraceOptions {
  std::size_t max_events = 200;
  int max_depth = 4;
  int n_tids = 3;
  bool second_pid = true;
};

inline std::vector<TraceEvent> random_forest(std::mt19937_64& rng, const RandomTraceOptions& opt = {}) {
  std::vector<TraceEvent> out;
  auto pick = [&](std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  std::int64_t corr = 1;
  const std::size_t budget = opt.max_events;
  auto host = [&](EventKind kind, std::int64_t pid, std::int64_t tid, Tick b, Tick e) {
    TraceEvent ev;
    ev.kind = kind;
    ev.pid = pid;
    ev.tid = tid;
    ev.begin = b;
    ev.duration = e - b;
    if (kind == EventKind::CpuOp) {
      ev.category = "cpu_op";
      ev.name = "op" + std::to_string(pick(0, 6));
    } else {
      ev.category = "cuda_runtime";
      ev.name = "cudaLaunchKernel";
      ev.correlation = corr++;
    }
    return ev;
  };
  auto kernel_for = [&](const TraceEvent& launch) {
    TraceEvent k;
    k.kind = EventKind::Kernel;
    k.category = "kernel";
    k.name = "k" + std::to_string(pick(0, 4));
    k.pid = 0;
    k.stream = pick(7, 8);
    k.tid = *k.stream;
    k.begin = launch.begin + pick(0, 50);
    k.duration = pick(0, 30);
    k.correlation = launch.correlation;
    return k;
  };
  // Fills [b, e) on (pid, tid) with disjoint children, recursing.
  auto fill = [&](auto&& self, std::int64_t pid, std::int64_t tid, Tick b, Tick e, int depth) -> void {
    Tick t = b;
    while (t < e && out.size() + 2 < budget) {
      Tick start = t + (pick(0, 2) == 0 ? 0 : pick(0, 5));  // zero gap makes ties with the parent begin
      if (start >= e) break;
      Tick stop = std::min<Tick>(e, start + pick(0, std::max<Tick>(1, (e - b) / 2)));
      if (pick(0, 3) == 0) {
        auto l = host(EventKind::RuntimeCall, pid, tid, start, stop);
        int fate = static_cast<int>(pick(0, 9));
        if (fate < 8) out.push_back(kernel_for(l));
        if (fate == 9) l.correlation = 1000000 + *l.correlation;  // launch without kernel
        out.push_back(std::move(l));
      } else {
        out.push_back(host(EventKind::CpuOp, pid, tid, start, stop));
        if (depth < opt.max_depth && stop > start) self(self, pid, tid, start, stop, depth + 1);
      }
      t = stop + pick(0, 3);
      if (pick(0, 4) == 0) break;
    }
  };
  std::int64_t pids = opt.second_pid ? 2 : 1;
  for (std::int64_t p = 0; p < pids; ++p) {
    for (int tid = 1; tid <= opt.n_tids; ++tid) fill(fill, 100 + p, tid, pick(0, 20), pick(200, 400), 0);
  }
  // A few kernels nobody launched.
  for (int i = 0, n = static_cast<int>(pick(0, 2)); i < n; ++i) {
    TraceEvent k;
    k.kind = EventKind::Kernel;
    k.category = "kernel";
    k.name = "stray";
    k.pid = 0;
    k.stream = 7;
    k.tid = 7;
    k.begin = pick(0, 400);
    k.duration = pick(1, 10);
    k.correlation = 2000000 + corr++;
    out.push_back(std::move(k));
  }
  if (out.empty()) {
    auto op = host(EventKind::CpuOp, 100, 1, 0, 10);
    out.push_back(op);
  }
  return out;
}

}  // namespace oracle
