// SPDX-License-Identifier: Apache-2.0
#include "skiptrace/trace.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include <spdlog/spdlog.h>
#include <zlib.h>

#include "skiptrace/error.hpp"
#include "skiptrace/rational.hpp"

namespace skiptrace {

using nlohmann::json;

namespace {

int kind_priority(EventKind kind) {
  switch (kind) {
    case EventKind::CpuOp: return 0;
    case EventKind::RuntimeCall: return 1;
    case EventKind::Sync: return 2;
    case EventKind::Kernel: return 3;
    case EventKind::Memcpy: return 4;
    case EventKind::Other: return 5;
  }
  return 6;
}

// Builds a DOM in which every floating-point number is kept as its source
// lexeme (a JSON string), so timestamps never pass through a double.
class LexemeDomBuilder {
 public:
  explicit LexemeDomBuilder(json& root) : root_(root) {}

  bool null() { return put(nullptr) != nullptr; }
  bool boolean(bool v) { return put(v) != nullptr; }
  bool number_integer(json::number_integer_t v) { return put(v) != nullptr; }
  bool number_unsigned(json::number_unsigned_t v) { return put(v) != nullptr; }
  bool number_float(json::number_float_t, const std::string& lexeme) {
    return put(lexeme) != nullptr;
  }
  bool string(std::string& v) { return put(std::move(v)) != nullptr; }
  bool binary(json::binary_t& v) { return put(json::binary(std::move(v))) != nullptr; }
  bool start_object(std::size_t) {
    stack_.push_back(put(json::object()));
    return true;
  }
  bool key(std::string& k) {
    key_ = std::move(k);
    return true;
  }
  bool end_object() {
    stack_.pop_back();
    return true;
  }
  bool start_array(std::size_t) {
    stack_.push_back(put(json::array()));
    return true;
  }
  bool end_array() {
    stack_.pop_back();
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception& ex) {
    error_ = ex.what();
    return false;
  }

  const std::string& error() const { return error_; }

 private:
  json* put(json value) {
    if (stack_.empty()) {
      root_ = std::move(value);
      return &root_;
    }
    json& top = *stack_.back();
    if (top.is_array()) {
      top.push_back(std::move(value));
      return &top.back();
    }
    json& slot = top[key_];
    slot = std::move(value);
    return &slot;
  }

  json& root_;
  std::vector<json*> stack_;
  std::string key_;
  std::string error_;
};

std::optional<std::int64_t> as_integer(const json& v) {
  if (v.is_number_integer() && !v.is_number_unsigned()) return v.get<std::int64_t>();
  if (v.is_number_unsigned()) {
    auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      return std::nullopt;
    }
    return static_cast<std::int64_t>(u);
  }
  if (v.is_string()) return scale_decimal(v.get_ref<const std::string&>(), 0);
  return std::nullopt;
}

// pid/tid may be strings such as "stream 7" in some exports.
std::optional<std::int64_t> as_id(const json& v) {
  if (auto n = as_integer(v)) return n;
  if (!v.is_string()) return std::nullopt;
  const auto& s = v.get_ref<const std::string&>();
  auto last = s.find_last_not_of(' ');
  if (last == std::string::npos) return 0;
  auto first = last + 1;
  while (first > 0 && std::isdigit(static_cast<unsigned char>(s[first - 1]))) --first;
  if (first <= last) {
    if (auto n = scale_decimal(std::string_view(s).substr(first, last + 1 - first), 0)) return n;
  }
  std::uint32_t hash = 2166136261u;  // FNV-1a, stable across platforms
  for (unsigned char c : s) {
    hash ^= c;
    hash *= 16777619u;
  }
  return static_cast<std::int64_t>(hash & 0x7fffffffu);
}

std::optional<Tick> as_ticks(const json& v) {
  if (v.is_string()) return scale_decimal(v.get_ref<const std::string&>(), 3);
  auto n = as_integer(v);
  if (!n) return std::nullopt;
  if (*n > std::numeric_limits<Tick>::max() / 1000 || *n < std::numeric_limits<Tick>::min() / 1000) {
    return std::nullopt;
  }
  return *n * 1000;
}

const json* find_key(const json& obj, const std::vector<std::string>& keys) {
  if (!obj.is_object()) return nullptr;
  for (const auto& k : keys) {
    auto it = obj.find(k);
    if (it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

bool contains(const std::vector<std::string>& names, std::string_view name) {
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::string label_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

[[noreturn]] void missing(const std::string& field, std::size_t index, const std::string& name) {
  throw Error(ErrorCode::MissingField, "event #" + std::to_string(index) + " (" + name +
                                           ") lacks required field '" + field + "'");
}

Trace build_trace(const json& doc, const FieldMapping& mapping, const std::string& default_label) {
  const json* records = nullptr;
  TraceMeta meta;
  if (doc.is_array()) {
    records = &doc;
  } else if (doc.is_object()) {
    auto it = doc.find("traceEvents");
    if (it == doc.end() || !it->is_array()) {
      throw Error(ErrorCode::MalformedTrace, "top-level object has no \"traceEvents\" array");
    }
    records = &*it;
    if (auto other = doc.find("otherData"); other != doc.end() && other->is_object()) {
      for (const auto& [k, v] : other->items()) meta.labels[k] = label_text(v);
    }
  } else {
    throw Error(ErrorCode::MalformedTrace, "trace must be an object or an array of events");
  }
  if (!default_label.empty() && !meta.labels.contains("label")) {
    meta.labels["label"] = default_label;
  }

  std::vector<TraceEvent> events;
  events.reserve(records->size());
  std::size_t index = 0;
  for (const auto& rec : *records) {
    ++index;
    if (!rec.is_object()) throw Error(ErrorCode::MalformedTrace, "event #" + std::to_string(index) + " is not an object");
    if (auto ph = rec.find("ph"); ph != rec.end() && (!ph->is_string() || ph->get_ref<const std::string&>() != "X")) {
      ++meta.skipped_records;
      continue;
    }
    TraceEvent ev;
    if (auto cat = rec.find("cat"); cat != rec.end() && cat->is_string()) ev.category = cat->get<std::string>();
    auto name = rec.find("name");
    bool has_name = name != rec.end() && name->is_string();
    if (has_name) ev.name = name->get<std::string>();
    ev.kind = classify_event(ev.category, ev.name, mapping);
    bool mapped = ev.kind != EventKind::Other;
    if (mapped && !has_name) missing("name", index, ev.category);

    auto ts = rec.find("ts");
    if (ts == rec.end() || ts->is_null()) {
      if (mapped) missing("ts", index, ev.name);
      ++meta.skipped_records;
      continue;
    }
    auto begin = as_ticks(*ts);
    if (!begin) throw Error(ErrorCode::MalformedTrace, "event #" + std::to_string(index) + " has unreadable ts");
    ev.begin = *begin;

    auto dur = rec.find("dur");
    std::optional<Tick> duration;
    if (dur != rec.end() && !dur->is_null()) {
      duration = as_ticks(*dur);
      if (!duration) throw Error(ErrorCode::MalformedTrace, "event #" + std::to_string(index) + " has unreadable dur");
    }
    if (!duration || *duration < 0) {
      ++meta.duration_warnings;
      duration = 0;
    }
    ev.duration = *duration;
    if (ev.begin > std::numeric_limits<Tick>::max() - ev.duration) {
      throw Error(ErrorCode::MalformedTrace, "event #" + std::to_string(index) + " extent overflows");
    }

    auto id_field = [&](const char* key, const std::optional<std::int64_t>& fallback) -> std::int64_t {
      auto it = rec.find(key);
      if (it != rec.end() && !it->is_null()) {
        if (auto v = as_id(*it)) return *v;
        throw Error(ErrorCode::MalformedTrace, "event #" + std::to_string(index) + " has unreadable " + key);
      }
      if (fallback) return *fallback;
      if (mapped) missing(key, index, ev.name);
      return 0;
    };
    ev.pid = id_field("pid", mapping.default_pid);
    ev.tid = id_field("tid", mapping.default_tid);

    const json empty = json::object();
    auto args_it = rec.find("args");
    const json& args = args_it != rec.end() && args_it->is_object() ? *args_it : empty;
    auto optional_int = [&](const std::vector<std::string>& keys, const char* what) -> std::optional<std::int64_t> {
      const json* v = find_key(args, keys);
      if (!v) return std::nullopt;
      auto n = as_integer(*v);
      if (!n) throw Error(ErrorCode::MalformedTrace, "event #" + std::to_string(index) + " has unreadable " + what);
      return n;
    };
    ev.correlation = optional_int(mapping.correlation_keys, "correlation");
    ev.stream = optional_int(mapping.stream_keys, "stream");
    ev.device = optional_int(mapping.device_keys, "device");

    if (ev.kind == EventKind::Kernel && !ev.stream) {
      if (mapping.stream_from_tid) {
        ev.stream = ev.tid;
      } else if (mapping.default_stream) {
        ev.stream = mapping.default_stream;
      } else {
        missing("stream", index, ev.name);
      }
    }
    if (ev.kind == EventKind::RuntimeCall && !ev.correlation) missing("correlation", index, ev.name);
    events.push_back(std::move(ev));
  }
  if (meta.duration_warnings > 0) {
    spdlog::warn("{} event(s) had a missing or negative duration; treated as 0", meta.duration_warnings);
  }
  return Trace(std::move(events), std::move(meta));
}

std::string read_all(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  }
  // gzread passes uncompressed files through unchanged.
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::string out;
  std::array<char, 1 << 16> buffer{};
  int n = 0;
  while ((n = gzread(file, buffer.data(), static_cast<unsigned>(buffer.size()))) > 0) {
    out.append(buffer.data(), static_cast<std::size_t>(n));
  }
  int err = 0;
  const char* msg = gzerror(file, &err);
  std::string detail = msg ? msg : "";
  gzclose(file);
  if (n < 0 || (err != Z_OK && err != Z_STREAM_END)) {
    throw Error(ErrorCode::MalformedTrace, "corrupt compressed input '" + path.string() + "': " + detail);
  }
  return out;
}

Trace parse_with_label(std::string_view text, const FieldMapping& mapping, const std::string& label) {
  json doc;
  LexemeDomBuilder builder(doc);
  bool ok = json::sax_parse(text.begin(), text.end(), &builder);
  if (!ok) throw Error(ErrorCode::MalformedTrace, "not valid JSON: " + builder.error());
  return build_trace(doc, mapping, label);
}

}  // namespace

std::string_view to_string(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::CpuOp: return "CpuOp";
    case EventKind::RuntimeCall: return "RuntimeCall";
    case EventKind::Kernel: return "Kernel";
    case EventKind::Sync: return "Sync";
    case EventKind::Memcpy: return "Memcpy";
    case EventKind::Other: return "Other";
  }
  return "Other";
}

std::optional<EventKind> event_kind_from_string(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kEventKindCount; ++i) {
    auto kind = static_cast<EventKind>(i);
    if (to_string(kind) == text) return kind;
  }
  return std::nullopt;
}

bool event_order(const TraceEvent& a, const TraceEvent& b) {
  auto key = [](const TraceEvent& e) {
    return std::make_tuple(e.begin, kind_priority(e.kind), -e.duration, e.pid, e.tid);
  };
  auto ka = key(a);
  auto kb = key(b);
  if (ka != kb) return ka < kb;
  if (a.name != b.name) return a.name < b.name;
  if (a.category != b.category) return a.category < b.category;
  return std::tie(a.correlation, a.stream, a.device) < std::tie(b.correlation, b.stream, b.device);
}

Trace::Trace(std::vector<TraceEvent> events, TraceMeta meta) : events_(std::move(events)), meta_(std::move(meta)) {
  if (events_.empty()) throw Error(ErrorCode::EmptyTrace, "trace contains no duration events");
  std::stable_sort(events_.begin(), events_.end(), event_order);
  meta_.kind_counts.fill(0);
  std::set<std::int64_t> kernel_correlations;
  for (const auto& ev : events_) {
    if (ev.duration < 0) throw Error(ErrorCode::MalformedTrace, "negative duration on '" + ev.name + "'");
    if (ev.begin > std::numeric_limits<Tick>::max() - ev.duration) {
      throw Error(ErrorCode::MalformedTrace, "extent of '" + ev.name + "' overflows");
    }
    ++meta_.kind_counts[static_cast<std::size_t>(ev.kind)];
    if (ev.kind == EventKind::Kernel) {
      if (!ev.stream) throw Error(ErrorCode::MissingField, "kernel '" + ev.name + "' has no stream");
      if (ev.correlation && !kernel_correlations.insert(*ev.correlation).second) {
        throw Error(ErrorCode::MalformedTrace,
                    "duplicate kernel correlation " + std::to_string(*ev.correlation));
      }
    }
    if (ev.kind == EventKind::RuntimeCall && !ev.correlation) {
      throw Error(ErrorCode::MissingField, "launch call '" + ev.name + "' has no correlation");
    }
  }
}

std::optional<std::string> Trace::label(const std::string& key) const {
  auto it = meta_.labels.find(key);
  if (it == meta_.labels.end()) return std::nullopt;
  return it->second;
}

EventKind classify_event(std::string_view category, std::string_view name) {
  static const FieldMapping defaults;
  return classify_event(category, name, defaults);
}

EventKind classify_event(std::string_view category, std::string_view name, const FieldMapping& mapping) {
  if (auto it = mapping.category_overrides.find(category); it != mapping.category_overrides.end()) {
    return it->second;
  }
  if (category == "cpu_op") return EventKind::CpuOp;
  if (category == "cuda_runtime" || category == "cuda_driver") {
    if (contains(mapping.launch_names, name)) return EventKind::RuntimeCall;
    if (contains(mapping.sync_names, name)) return EventKind::Sync;
    return EventKind::Other;
  }
  if (category == "kernel") return EventKind::Kernel;
  if (category == "gpu_memcpy" || category == "gpu_memset") return EventKind::Memcpy;
  return EventKind::Other;
}

FieldMapping FieldMapping::from_json(const json& doc) {
  FieldMapping m;
  if (!doc.is_object()) throw Error(ErrorCode::Usage, "field mapping must be a JSON object");
  auto strings = [&](const char* key, std::vector<std::string>& into) {
    if (auto it = doc.find(key); it != doc.end()) {
      std::vector<std::string> given;
      if (it->is_string()) {
        given = {it->get<std::string>()};
      } else if (it->is_array() && std::all_of(it->begin(), it->end(), [](const json& v) { return v.is_string(); })) {
        given = it->get<std::vector<std::string>>();
      } else {
        throw Error(ErrorCode::Usage, std::string("field mapping key '") + key + "' must be a string list");
      }
      // Mapped names take precedence; the built-in names remain as fallbacks.
      for (auto& name : into) {
        if (std::find(given.begin(), given.end(), name) == given.end()) given.push_back(std::move(name));
      }
      into = std::move(given);
    }
  };
  strings("correlation", m.correlation_keys);
  strings("stream", m.stream_keys);
  strings("device", m.device_keys);
  strings("launch_names", m.launch_names);
  strings("sync_names", m.sync_names);
  if (auto it = doc.find("categories"); it != doc.end()) {
    if (!it->is_object()) throw Error(ErrorCode::Usage, "field mapping 'categories' must be an object");
    for (const auto& [cat, kind] : it->items()) {
      auto k = kind.is_string() ? event_kind_from_string(kind.get<std::string>()) : std::nullopt;
      if (!k) throw Error(ErrorCode::Usage, "unknown event kind for category '" + cat + "'");
      m.category_overrides[cat] = *k;
    }
  }
  if (auto it = doc.find("defaults"); it != doc.end()) {
    if (!it->is_object()) throw Error(ErrorCode::Usage, "field mapping 'defaults' must be an object");
    for (const auto& [key, value] : it->items()) {
      if (key == "stream" && value.is_string() && value.get<std::string>() == "tid") {
        m.stream_from_tid = true;
        continue;
      }
      if (!value.is_number_integer()) throw Error(ErrorCode::Usage, "default '" + key + "' must be an integer");
      auto v = value.get<std::int64_t>();
      if (key == "pid") m.default_pid = v;
      else if (key == "tid") m.default_tid = v;
      else if (key == "stream") m.default_stream = v;
      else throw Error(ErrorCode::Usage, "unknown default '" + key + "'");
    }
  }
  return m;
}

FieldMapping FieldMapping::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open mapping file '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::Usage, "mapping file '" + path.string() + "' is not valid JSON");
  return from_json(doc);
}

Trace parse_trace_text(std::string_view text, const FieldMapping& mapping) {
  return parse_with_label(text, mapping, {});
}

Trace parse_trace(const std::filesystem::path& path, const FieldMapping& mapping) {
  std::string text = read_all(path);
  auto stem = path.filename().string();
  for (const char* suffix : {".gz", ".json"}) {
    if (stem.size() > std::strlen(suffix) && stem.ends_with(suffix)) stem.resize(stem.size() - std::strlen(suffix));
  }
  return parse_with_label(text, mapping, stem);
}

std::string format_microseconds(Tick ns) {
  bool negative = ns < 0;
  // Magnitude via unsigned to survive INT64_MIN.
  std::uint64_t mag = negative ? 0 - static_cast<std::uint64_t>(ns) : static_cast<std::uint64_t>(ns);
  std::string frac = std::to_string(mag % 1000);
  frac.insert(0, 3 - frac.size(), '0');
  return (negative ? "-" : "") + std::to_string(mag / 1000) + "." + frac;
}

void write_trace(const Trace& trace, std::ostream& out) {
  out << "{\"traceEvents\":[\n";
  bool first = true;
  for (const auto& ev : trace.events()) {
    if (!first) out << ",\n";
    first = false;
    out << "{\"ph\":\"X\",\"cat\":" << json(ev.category).dump() << ",\"name\":" << json(ev.name).dump()
        << ",\"pid\":" << ev.pid << ",\"tid\":" << ev.tid << ",\"ts\":" << format_microseconds(ev.begin)
        << ",\"dur\":" << format_microseconds(ev.duration) << ",\"args\":{";
    bool first_arg = true;
    auto arg = [&](const char* key, const std::optional<std::int64_t>& v) {
      if (!v) return;
      if (!first_arg) out << ',';
      first_arg = false;
      out << '"' << key << "\":" << *v;
    };
    arg("correlation", ev.correlation);
    arg("stream", ev.stream);
    arg("device", ev.device);
    out << "}}";
  }
  out << "\n],\n\"otherData\":" << json(trace.meta().labels).dump() << "}\n";
}

void write_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  write_trace(trace, out);
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path.string() + "'");
}

}  // namespace skiptrace
