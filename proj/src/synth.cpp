// SPDX-License-Identifier: Apache-2.0
#include "skiptrace/synth.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "skiptrace/error.hpp"

namespace skiptrace {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::int64_t kHostPid = 100;
constexpr std::int64_t kMainTid = 1;
constexpr std::int64_t kSideTid = 2;
constexpr std::int64_t kDevicePid = 0;
constexpr std::int64_t kFirstStream = 7;
constexpr Tick kOpPrologue = 100;
constexpr Tick kChildPrologue = 50;
constexpr Tick kSyncTail = 10;

[[noreturn]] void invalid(const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); }

// Portable draws: the standard distributions differ between library
// implementations, mt19937_64 itself does not.
std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) { return n == 0 ? 0 : rng() % n; }

template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(rng, i)]);
}

bool bernoulli(std::mt19937_64& rng, const Rational& p) {
  if (p <= 0) return false;
  if (p >= 1) return true;
  return below(rng, static_cast<std::uint64_t>(p.denominator())) < static_cast<std::uint64_t>(p.numerator());
}

std::string rational_text(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

json exact(const Rational& r) { return json::array({r.numerator(), r.denominator()}); }

Rational rational_from(const json& j, const char* what) {
  std::optional<Rational> r;
  if (j.is_string()) r = parse_rational(j.get<std::string>());
  if (j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[1].is_number_integer() &&
      j[1].get<std::int64_t>() != 0) {
    r = Rational(j[0].get<std::int64_t>(), j[1].get<std::int64_t>());
  }
  if (j.is_number()) r = parse_rational(j.dump());
  if (!r) invalid(std::string("unreadable ") + what);
  return *r;
}

std::int64_t int_from(const json& j, const char* what) {
  if (!j.is_number_integer()) invalid(std::string(what) + " must be an integer");
  return j.get<std::int64_t>();
}

std::size_t count_from(const json& j, const char* what) {
  auto v = int_from(j, what);
  if (v < 0) invalid(std::string(what) + " must be >= 0");
  return static_cast<std::size_t>(v);
}

std::string_view to_string(Placement p) { return p == Placement::Spread ? "spread" : "block"; }

PlantedChain chain_from(const json& j) {
  if (!j.is_object()) invalid("planted chain must be an object");
  PlantedChain c;
  if (auto n = j.find("names"); n != j.end()) {
    if (!n->is_array()) invalid("planted chain \"names\" must be an array");
    for (const auto& s : *n) {
      if (!s.is_string()) invalid("planted chain names must be strings");
      c.names.push_back(s.get<std::string>());
    }
  } else if (j.contains("prefix") && j.contains("length")) {
    if (!j["prefix"].is_string()) invalid("planted chain \"prefix\" must be a string");
    auto prefix = j["prefix"].get<std::string>();
    auto length = count_from(j["length"], "planted chain length");
    for (std::size_t i = 0; i < length; ++i) c.names.push_back(prefix + "_" + std::to_string(i));
  } else {
    invalid("planted chain needs \"names\" or \"prefix\" + \"length\"");
  }
  if (auto r = j.find("repeat"); r != j.end()) c.repeat = count_from(*r, "planted chain repeat");
  if (auto p = j.find("placement"); p != j.end()) {
    if (*p == "spread") {
      c.placement = Placement::Spread;
    } else if (*p == "block") {
      c.placement = Placement::Block;
    } else {
      invalid("placement must be \"spread\" or \"block\"");
    }
  }
  return c;
}

json chain_json(const PlantedChain& c) {
  return json{{"names", c.names}, {"repeat", c.repeat}, {"placement", std::string(to_string(c.placement))}};
}

json fusion_truth_json(const FusionTruth& f) {
  return json{{"length", f.length},
              {"unique_candidates", f.unique_candidates},
              {"total_instances", f.total_instances},
              {"c_fused", f.c_fused},
              {"k_eager", f.k_eager},
              {"k_fused", f.k_fused},
              {"speedup", format_decimal(f.speedup)},
              {"speedup_exact", exact(f.speedup)}};
}

FusionTruth fusion_truth_from(const json& j) {
  FusionTruth f;
  f.length = j.at("length").get<std::size_t>();
  f.unique_candidates = j.at("unique_candidates").get<std::size_t>();
  f.total_instances = j.at("total_instances").get<std::size_t>();
  f.c_fused = j.at("c_fused").get<std::size_t>();
  f.k_eager = j.at("k_eager").get<std::size_t>();
  f.k_fused = j.at("k_fused").get<std::size_t>();
  const auto& s = j.at("speedup_exact");
  f.speedup = Rational(s.at(0).get<std::int64_t>(), s.at(1).get<std::int64_t>());
  return f;
}

// Straight enumeration of every window, kept apart from the miner on purpose.
FusionTruth naive_fusion(const std::vector<std::vector<std::string>>& seqs, std::size_t length) {
  using Window = std::vector<std::string>;
  std::map<Window, std::size_t> windows;
  std::map<std::string, std::size_t> heads;
  std::size_t k_eager = 0;
  for (const auto& seq : seqs) {
    k_eager += seq.size();
    for (std::size_t i = 0; i + length <= seq.size(); ++i) {
      ++windows[Window(seq.begin() + static_cast<std::ptrdiff_t>(i),
                       seq.begin() + static_cast<std::ptrdiff_t>(i + length))];
      ++heads[seq[i]];
    }
  }
  FusionTruth f;
  f.length = length;
  f.k_eager = k_eager;
  std::set<Window> selected;
  for (const auto& [w, n] : windows) {
    if (n == heads[w.front()]) {
      selected.insert(w);
      ++f.unique_candidates;
      f.total_instances += n;
    }
  }
  for (const auto& seq : seqs) {
    std::size_t i = 0;
    while (i + length <= seq.size()) {
      Window w(seq.begin() + static_cast<std::ptrdiff_t>(i), seq.begin() + static_cast<std::ptrdiff_t>(i + length));
      if (selected.contains(w)) {
        ++f.c_fused;
        i += length;
      } else {
        ++i;
      }
    }
  }
  f.k_fused = k_eager - f.c_fused * (length - 1);
  f.speedup = k_eager == 0 ? Rational(1)
                           : Rational(static_cast<std::int64_t>(k_eager), static_cast<std::int64_t>(f.k_fused));
  return f;
}

Tick union_length(std::vector<std::pair<Tick, Tick>> spans) {
  std::sort(spans.begin(), spans.end());
  Tick total = 0;
  Tick reach = std::numeric_limits<Tick>::min();
  for (auto [b, e] : spans) {
    if (e <= reach) continue;
    total += e - std::max(b, reach);
    reach = e;
  }
  return total;
}

TraceEvent host_event(EventKind kind, std::string name, std::string category, std::int64_t tid, Tick begin,
                      Tick end) {
  TraceEvent ev;
  ev.kind = kind;
  ev.name = std::move(name);
  ev.category = std::move(category);
  ev.pid = kHostPid;
  ev.tid = tid;
  ev.begin = begin;
  ev.duration = end - begin;
  return ev;
}

const std::vector<std::string>& op_names() {
  static const std::vector<std::string> names{"aten::linear", "aten::layer_norm", "aten::softmax", "aten::gelu",
                                              "aten::add"};
  return names;
}

const std::set<std::string>& spec_keys() {
  static const std::set<std::string> keys{
      "seed",          "n_ops",        "kernels_per_op",   "launch_overhead", "kernel_duration",
      "launch_call_duration", "cpu_gap", "op_gap",         "queuing",         "planted_chains",
      "noise_alphabet", "n_streams",   "sync_probability", "side_thread_ops", "time_origin_ns",
      "truth_lengths", "label",        "model",            "batch_size",      "sweep"};
  return keys;
}

}  // namespace

// ---- Dist -------------------------------------------------------------------

Dist Dist::from_json(const json& j) {
  if (j.is_number_integer()) return fixed(j.get<std::int64_t>());
  if (!j.is_object() || j.size() != 1) invalid("distribution must be an integer or a one-key object");
  const auto& [key, v] = *j.items().begin();
  if (key == "fixed") return fixed(int_from(v, "fixed value"));
  if (key == "uniform") {
    if (!v.is_array() || v.size() != 2) invalid("uniform needs [lo, hi]");
    auto lo = int_from(v[0], "uniform bound");
    auto hi = int_from(v[1], "uniform bound");
    if (lo > hi) invalid("uniform lower bound exceeds upper bound");
    return uniform(lo, hi);
  }
  if (key == "choice") {
    if (!v.is_array() || v.empty()) invalid("choice needs a non-empty array");
    std::vector<std::int64_t> values;
    for (const auto& x : v) values.push_back(int_from(x, "choice value"));
    return choice(std::move(values));
  }
  invalid("unknown distribution '" + key + "'");
}

std::int64_t Dist::draw(std::mt19937_64& rng) const {
  switch (kind_) {
    case Kind::Fixed: return values_[0];
    case Kind::Uniform:
      return values_[0] + static_cast<std::int64_t>(below(rng, static_cast<std::uint64_t>(values_[1] - values_[0]) + 1));
    case Kind::Choice: return values_[below(rng, values_.size())];
  }
  return values_[0];
}

std::int64_t Dist::min() const { return *std::min_element(values_.begin(), values_.end()); }

Dist Dist::shifted(std::int64_t delta) const {
  Dist d = *this;
  for (auto& v : d.values_) v += delta;
  return d;
}

json Dist::to_json() const {
  switch (kind_) {
    case Kind::Fixed: return json{{"fixed", values_[0]}};
    case Kind::Uniform: return json{{"uniform", values_}};
    case Kind::Choice: return json{{"choice", values_}};
  }
  return nullptr;
}

// ---- GenSpec ----------------------------------------------------------------

GenSpec GenSpec::from_json(const json& j) {
  if (!j.is_object()) invalid("generator spec must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!spec_keys().contains(key)) invalid("unknown generator spec key '" + key + "'");
  }
  GenSpec s;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) invalid("seed must be a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("n_ops")) s.n_ops = count_from(j["n_ops"], "n_ops");
  auto dist = [&](const char* key, Dist& out) {
    if (j.contains(key)) out = Dist::from_json(j[key]);
  };
  dist("kernels_per_op", s.kernels_per_op);
  dist("launch_overhead", s.launch_overhead);
  dist("kernel_duration", s.kernel_duration);
  dist("launch_call_duration", s.launch_call_duration);
  dist("cpu_gap", s.cpu_gap);
  dist("op_gap", s.op_gap);
  if (auto q = j.find("queuing"); q != j.end()) {
    if (*q == "none") {
      s.saturate_after.reset();
    } else if (q->is_object() && q->contains("saturate_after")) {
      s.saturate_after = int_from((*q)["saturate_after"], "saturate_after");
    } else {
      invalid("queuing must be \"none\" or {\"saturate_after\": ns}");
    }
  }
  if (auto p = j.find("planted_chains"); p != j.end()) {
    if (!p->is_array()) invalid("planted_chains must be an array");
    for (const auto& c : *p) s.planted_chains.push_back(chain_from(c));
  }
  if (j.contains("noise_alphabet")) s.noise_alphabet = count_from(j["noise_alphabet"], "noise_alphabet");
  if (j.contains("n_streams")) s.n_streams = count_from(j["n_streams"], "n_streams");
  if (j.contains("sync_probability")) s.sync_probability = rational_from(j["sync_probability"], "sync_probability");
  if (j.contains("side_thread_ops")) s.side_thread_ops = count_from(j["side_thread_ops"], "side_thread_ops");
  if (j.contains("time_origin_ns")) s.time_origin = int_from(j["time_origin_ns"], "time_origin_ns");
  if (auto t = j.find("truth_lengths"); t != j.end()) {
    if (!t->is_array()) invalid("truth_lengths must be an array");
    for (const auto& v : *t) s.truth_lengths.push_back(count_from(v, "truth length"));
  }
  if (j.contains("label")) {
    if (!j["label"].is_string()) invalid("label must be a string");
    s.label = j["label"].get<std::string>();
  }
  if (j.contains("model")) {
    if (!j["model"].is_string()) invalid("model must be a string");
    s.model = j["model"].get<std::string>();
  }
  if (j.contains("batch_size") && !j["batch_size"].is_null()) s.batch_size = int_from(j["batch_size"], "batch_size");
  s.validate();
  return s;
}

json GenSpec::to_json() const {
  json j{{"seed", seed},
         {"n_ops", n_ops},
         {"kernels_per_op", kernels_per_op.to_json()},
         {"launch_overhead", launch_overhead.to_json()},
         {"kernel_duration", kernel_duration.to_json()},
         {"launch_call_duration", launch_call_duration.to_json()},
         {"cpu_gap", cpu_gap.to_json()},
         {"op_gap", op_gap.to_json()},
         {"queuing", saturate_after ? json{{"saturate_after", *saturate_after}} : json("none")},
         {"noise_alphabet", noise_alphabet},
         {"n_streams", n_streams},
         {"sync_probability", rational_text(sync_probability)},
         {"side_thread_ops", side_thread_ops},
         {"time_origin_ns", time_origin},
         {"truth_lengths", truth_lengths},
         {"label", label},
         {"model", model}};
  auto& chains = j["planted_chains"] = json::array();
  for (const auto& c : planted_chains) chains.push_back(chain_json(c));
  if (batch_size) j["batch_size"] = *batch_size;
  return j;
}

void GenSpec::validate() const {
  if (n_ops == 0) invalid("n_ops must be >= 1");
  if (n_streams == 0) invalid("n_streams must be >= 1");
  if (kernels_per_op.min() < 0) invalid("kernels_per_op must be >= 0");
  if (launch_overhead.min() < 0 || kernel_duration.min() < 0 || cpu_gap.min() < 0 || op_gap.min() < 0) {
    invalid("durations must be >= 0");
  }
  if (launch_call_duration.min() < 1) invalid("launch_call_duration must be >= 1");
  if (sync_probability < Rational(0) || sync_probability > Rational(1)) invalid("sync_probability must lie in [0, 1]");
  for (const auto& c : planted_chains) {
    if (c.names.empty()) invalid("planted chains must not be empty");
    for (const auto& n : c.names) {
      if (n.empty() || n.starts_with("noise_k")) invalid("planted kernel names must be non-empty and not noise_k*");
    }
  }
  for (auto l : truth_lengths) {
    if (l < 2) invalid("truth lengths must be >= 2");
  }
}

// ---- GroundTruth ------------------------------------------------------------

json GroundTruth::to_json() const {
  json metrics{{"tklqt_ns", tklqt},
               {"akd_ns", format_decimal(akd)},
               {"akd_exact", exact(akd)},
               {"il_ns", il},
               {"gpu_idle_ns", gpu_idle},
               {"gpu_idle_union_ns", gpu_idle_union ? json(*gpu_idle_union) : json(nullptr)},
               {"cpu_idle_ns", cpu_idle},
               {"total_kernel_duration_ns", total_kernel_duration},
               {"n_kernels", n_kernels},
               {"n_launches", n_launches},
               {"n_streams", n_streams},
               {"multi_stream", multi_stream},
               {"sync_points", sync_points}};
  json split = json::object();
  for (const auto& [l, f] : fusion) split[std::to_string(l)] = fusion_truth_json(f);
  json per_stream = json::object();
  for (const auto& [l, f] : fusion_per_stream) per_stream[std::to_string(l)] = fusion_truth_json(f);
  json chains = json::array();
  for (const auto& c : planted) chains.push_back(chain_json(c));
  return json{{"schema_version", 1},
              {"seed", seed},
              {"metrics", std::move(metrics)},
              {"fusion",
               {{"threshold", rational_text(threshold)},
                {"split_on_sync", std::move(split)},
                {"per_stream", std::move(per_stream)}}},
              {"planted", std::move(chains)}};
}

GroundTruth GroundTruth::from_json(const json& j) {
  try {
    GroundTruth t;
    t.seed = j.at("seed").get<std::uint64_t>();
    const auto& m = j.at("metrics");
    t.tklqt = m.at("tklqt_ns").get<Tick>();
    const auto& a = m.at("akd_exact");
    t.akd = Rational(a.at(0).get<std::int64_t>(), a.at(1).get<std::int64_t>());
    t.il = m.at("il_ns").get<Tick>();
    t.gpu_idle = m.at("gpu_idle_ns").get<Tick>();
    if (!m.at("gpu_idle_union_ns").is_null()) t.gpu_idle_union = m["gpu_idle_union_ns"].get<Tick>();
    t.cpu_idle = m.at("cpu_idle_ns").get<Tick>();
    t.total_kernel_duration = m.at("total_kernel_duration_ns").get<Tick>();
    t.n_kernels = m.at("n_kernels").get<std::size_t>();
    t.n_launches = m.at("n_launches").get<std::size_t>();
    t.n_streams = m.at("n_streams").get<std::size_t>();
    t.multi_stream = m.at("multi_stream").get<bool>();
    t.sync_points = m.at("sync_points").get<std::size_t>();
    const auto& f = j.at("fusion");
    t.threshold = rational_from(f.at("threshold"), "threshold");
    for (const auto& [k, v] : f.at("split_on_sync").items()) t.fusion[std::stoull(k)] = fusion_truth_from(v);
    for (const auto& [k, v] : f.at("per_stream").items()) t.fusion_per_stream[std::stoull(k)] = fusion_truth_from(v);
    for (const auto& c : j.at("planted")) t.planted.push_back(chain_from(c));
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("unreadable ground truth: ") + e.what());
  }
}

// ---- generation ---------------------------------------------------------------

Generated generate(const GenSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  std::vector<std::size_t> per_op(spec.n_ops);
  std::size_t total = 0;
  for (auto& n : per_op) total += n = static_cast<std::size_t>(spec.kernels_per_op.draw(rng));

  // Kernel names in launch order: planted chains as indivisible units, the
  // rest single noise kernels.
  std::vector<std::vector<std::string>> units;
  std::size_t planted = 0;
  for (const auto& c : spec.planted_chains) {
    planted += c.names.size() * c.repeat;
    if (c.placement == Placement::Block) {
      std::vector<std::string> block;
      for (std::size_t r = 0; r < c.repeat; ++r) block.insert(block.end(), c.names.begin(), c.names.end());
      if (!block.empty()) units.push_back(std::move(block));
    } else {
      for (std::size_t r = 0; r < c.repeat; ++r) units.push_back(c.names);
    }
  }
  if (planted > total) {
    invalid("planted chains need " + std::to_string(planted) + " kernels but only " + std::to_string(total) +
            " are launched");
  }
  if (total == 0) invalid("the spec launches no kernels");
  if (total > planted && spec.noise_alphabet == 0) invalid("noise_alphabet must be >= 1");
  for (std::size_t i = planted; i < total; ++i) {
    units.push_back({"noise_k" + std::to_string(below(rng, spec.noise_alphabet))});
  }
  shuffle(units, rng);
  std::vector<std::string> names;
  names.reserve(total);
  for (auto& u : units) {
    for (auto& n : u) names.push_back(std::move(n));
  }

  std::vector<TraceEvent> events;
  GroundTruth truth;
  truth.seed = spec.seed;
  truth.planted = spec.planted_chains;

  std::map<std::int64_t, Tick> stream_free;
  std::map<std::int64_t, std::vector<std::string>> open_segment;
  std::map<std::int64_t, std::vector<std::string>> whole_stream;
  std::vector<std::vector<std::string>> segments;
  std::vector<std::pair<Tick, Tick>> kernel_spans;
  std::vector<std::pair<Tick, Tick>> busy;
  auto flush = [&] {
    for (auto& [s, seq] : open_segment) {
      if (!seq.empty()) segments.push_back(std::move(seq));
    }
    open_segment.clear();
  };

  const Tick origin = spec.time_origin;
  Tick t = origin;
  Tick last_kernel_end = origin;
  std::int64_t correlation = 1;
  std::size_t cursor = 0;
  for (std::size_t op = 0; op < spec.n_ops; ++op) {
    const std::int64_t stream = kFirstStream + static_cast<std::int64_t>(below(rng, spec.n_streams));
    const Tick op_begin = t;
    t += kOpPrologue;
    const Tick child_begin = t;
    t += kChildPrologue;
    for (std::size_t k = 0; k < per_op[op]; ++k) {
      const Tick overhead = spec.launch_overhead.draw(rng);
      const Tick duration = spec.kernel_duration.draw(rng);
      const Tick call = spec.launch_call_duration.draw(rng);
      const Tick gap = spec.cpu_gap.draw(rng);
      auto free_it = stream_free.find(stream);
      const bool saturated = spec.saturate_after && t - origin >= *spec.saturate_after;
      if (!saturated && free_it != stream_free.end()) t = std::max(t, free_it->second - overhead);
      const Tick launch_begin = t;
      Tick kernel_begin = launch_begin + overhead;
      if (free_it != stream_free.end()) kernel_begin = std::max(kernel_begin, free_it->second);

      auto launch = host_event(EventKind::RuntimeCall, "cudaLaunchKernel", "cuda_runtime", kMainTid, launch_begin,
                               launch_begin + call);
      launch.correlation = correlation;
      events.push_back(std::move(launch));

      TraceEvent kernel;
      kernel.kind = EventKind::Kernel;
      kernel.name = names[cursor];
      kernel.category = "kernel";
      kernel.pid = kDevicePid;
      kernel.tid = stream;
      kernel.begin = kernel_begin;
      kernel.duration = duration;
      kernel.correlation = correlation;
      kernel.stream = stream;
      kernel.device = 0;
      events.push_back(std::move(kernel));

      truth.tklqt += kernel_begin - launch_begin;
      truth.total_kernel_duration += duration;
      stream_free[stream] = kernel_begin + duration;
      last_kernel_end = std::max(last_kernel_end, kernel_begin + duration);
      kernel_spans.emplace_back(kernel_begin, kernel_begin + duration);
      open_segment[stream].push_back(names[cursor]);
      whole_stream[stream].push_back(names[cursor]);
      ++cursor;
      ++correlation;
      t += call + gap;
    }
    t += kChildPrologue;
    const auto& op_name = op_names()[op % op_names().size()];
    events.push_back(host_event(EventKind::CpuOp, op_name, "cpu_op", kMainTid, op_begin, t + kOpPrologue));
    events.push_back(host_event(EventKind::CpuOp, op_name + "_impl", "cpu_op", kMainTid, child_begin, t));
    t += kOpPrologue;
    busy.emplace_back(op_begin, t);

    if (bernoulli(rng, spec.sync_probability)) {
      Tick drained = t;
      for (const auto& [s, free] : stream_free) drained = std::max(drained, free);
      events.push_back(
          host_event(EventKind::Sync, "cudaDeviceSynchronize", "cuda_runtime", kMainTid, t, drained + kSyncTail));
      t = drained + kSyncTail;
      ++truth.sync_points;
      flush();
    }
    t += spec.op_gap.draw(rng);
  }
  flush();

  for (std::size_t i = 0; i < spec.side_thread_ops; ++i) {
    const Tick begin = origin + kOpPrologue * static_cast<Tick>(i + 1);
    events.push_back(host_event(EventKind::CpuOp, "aten::to", "cpu_op", kSideTid, begin, begin + kOpPrologue / 2));
  }
  events.push_back(host_event(EventKind::Other, "ProfilerStep#0", "user_annotation", kMainTid, origin,
                              std::max(t, last_kernel_end)));

  truth.n_kernels = total;
  truth.n_launches = total;
  truth.n_streams = whole_stream.size();
  truth.multi_stream = truth.n_streams > 1;
  truth.akd = Rational(truth.total_kernel_duration, static_cast<std::int64_t>(total));
  truth.il = last_kernel_end - origin;
  truth.gpu_idle = truth.il - truth.total_kernel_duration;
  if (truth.multi_stream) truth.gpu_idle_union = truth.il - union_length(kernel_spans);
  Tick busy_total = 0;
  for (auto [b, e] : busy) busy_total += std::max<Tick>(0, std::min(e, last_kernel_end) - b);
  truth.cpu_idle = std::max<Tick>(0, truth.il - busy_total);

  std::set<std::size_t> lengths(spec.truth_lengths.begin(), spec.truth_lengths.end());
  if (lengths.empty()) {
    lengths = {2, 4, 8};
    for (const auto& c : spec.planted_chains) {
      if (c.names.size() >= 2) lengths.insert(c.names.size());
    }
  }
  std::vector<std::vector<std::string>> per_stream;
  for (auto& [s, seq] : whole_stream) per_stream.push_back(std::move(seq));
  for (auto l : lengths) {
    truth.fusion[l] = naive_fusion(segments, l);
    truth.fusion_per_stream[l] = naive_fusion(per_stream, l);
  }

  TraceMeta meta;
  meta.labels["label"] = spec.label;
  meta.labels["model"] = spec.model;
  meta.labels["seed"] = std::to_string(spec.seed);
  if (spec.batch_size) meta.labels["batch_size"] = std::to_string(*spec.batch_size);
  return {Trace(std::move(events), std::move(meta)), std::move(truth)};
}

fs::path sidecar_path(const fs::path& trace_path) {
  auto name = trace_path.filename().string();
  for (const char* ext : {".json.gz", ".json"}) {
    if (name.ends_with(ext)) {
      name.resize(name.size() - std::char_traits<char>::length(ext));
      break;
    }
  }
  return trace_path.parent_path() / (name + ".truth.json");
}

void write_generated(const Generated& generated, const fs::path& trace_path) {
  write_trace(generated.trace, trace_path);
  std::ofstream out(sidecar_path(trace_path), std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + sidecar_path(trace_path).string() + "'");
  out << generated.truth.to_json().dump(2) << '\n';
}

GroundTruth read_ground_truth(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::InvalidSpec, "'" + path.string() + "' is not JSON");
  return GroundTruth::from_json(doc);
}

// ---- sweeps -------------------------------------------------------------------

SweepSpec SweepSpec::from_json(const json& j) {
  if (!j.is_object()) invalid("sweep must be an object");
  SweepSpec s;
  if (j.contains("label")) {
    if (!j["label"].is_string()) invalid("sweep label must be a string");
    s.label = j["label"].get<std::string>();
  }
  if (!j.contains("batch_sizes") || !j["batch_sizes"].is_array()) invalid("sweep needs a \"batch_sizes\" array");
  for (const auto& b : j["batch_sizes"]) s.batch_sizes.push_back(int_from(b, "batch size"));
  if (j.contains("duration_per_batch")) s.duration_per_batch = int_from(j["duration_per_batch"], "duration_per_batch");
  if (j.contains("saturate_batch") && !j["saturate_batch"].is_null()) {
    s.saturate_batch = int_from(j["saturate_batch"], "saturate_batch");
  }
  return s;
}

SweepManifest generate_sweep(const GenSpec& base, const SweepSpec& sweep, const fs::path& dir) {
  if (sweep.batch_sizes.empty()) invalid("sweep has no batch sizes");
  for (std::size_t i = 0; i < sweep.batch_sizes.size(); ++i) {
    if (sweep.batch_sizes[i] <= 0 || (i > 0 && sweep.batch_sizes[i] <= sweep.batch_sizes[i - 1])) {
      invalid("sweep batch sizes must be positive and strictly increasing");
    }
  }
  if (sweep.duration_per_batch < 0) invalid("duration_per_batch must be >= 0");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());

  SweepManifest manifest;
  manifest.label = sweep.label;
  for (auto bs : sweep.batch_sizes) {
    GenSpec spec = base;
    spec.kernel_duration = base.kernel_duration.shifted(sweep.duration_per_batch * bs);
    const bool saturated = sweep.saturate_batch && bs >= *sweep.saturate_batch;
    spec.saturate_after = saturated ? std::optional<Tick>(0) : std::nullopt;
    spec.batch_size = bs;
    spec.label = sweep.label + "_bs" + std::to_string(bs);
    if (saturated && !manifest.expected_transition) manifest.expected_transition = bs;
    auto path = dir / (spec.label + ".json");
    write_generated(generate(spec), path);
    manifest.entries.push_back({path, bs, sidecar_path(path)});
  }
  write_manifest(manifest, dir / kManifestName);
  return manifest;
}

}  // namespace skiptrace
