// SPDX-License-Identifier: Apache-2.0
#include "skiptrace/boundedness.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <regex>

#include "json.hpp"
#include "skiptrace/error.hpp"

namespace skiptrace {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void validate(const SweepSeries& series) {
  if (series.points.size() < 3) {
    throw Error(ErrorCode::TooFewPoints, "sweep '" + series.label + "' has " + std::to_string(series.points.size()) +
                                             " point(s); at least 3 are required");
  }
  std::int64_t previous = 0;
  for (const auto& p : series.points) {
    if (p.batch_size <= previous) {
      throw Error(ErrorCode::InvalidSeries, "batch sizes must be positive and strictly increasing (saw " +
                                                std::to_string(p.batch_size) + " after " + std::to_string(previous) +
                                                ")");
    }
    previous = p.batch_size;
  }
}

Rational median(std::vector<Tick> values) {
  std::sort(values.begin(), values.end());
  std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return Rational(values[mid]);
  return Rational(values[mid - 1]) / 2 + Rational(values[mid]) / 2;
}

// (num / den) of (1 + epsilon) * level, widened so large ticks cannot overflow.
struct Bound {
  __int128 num;
  __int128 den;
};

Bound scaled(const Rational& factor_minus_one, const Rational& level) {
  __int128 fnum = static_cast<__int128>(factor_minus_one.denominator()) + factor_minus_one.numerator();
  return {fnum * level.numerator(), static_cast<__int128>(factor_minus_one.denominator()) * level.denominator()};
}

bool above(Tick value, const Bound& b) { return static_cast<__int128>(value) * b.den > b.num; }

// value <= theta * total
bool within(Tick value, const Rational& theta, Tick total) {
  return static_cast<__int128>(value) * theta.denominator() <= static_cast<__int128>(theta.numerator()) * total;
}

[[noreturn]] void bad_manifest(const fs::path& path, const std::string& why) {
  throw Error(ErrorCode::MalformedManifest, "manifest '" + path.string() + "': " + why);
}

}  // namespace

std::string_view to_string(Boundedness b) noexcept {
  return b == Boundedness::CpuBound ? "CpuBound" : "GpuBound";
}

BoundednessVerdict classify(const SweepSeries& series, const ClassifyOptions& options) {
  if (options.epsilon <= Rational(0)) throw Error(ErrorCode::NonPositiveEpsilon, "epsilon must be > 0");
  validate(series);
  if (options.min_plateau < 1 || options.min_plateau > series.points.size()) {
    throw Error(ErrorCode::TooFewPoints, "min_plateau must be between 1 and the number of points");
  }
  const auto& pts = series.points;
  std::vector<Tick> head;
  for (std::size_t i = 0; i < options.min_plateau; ++i) head.push_back(pts[i].tklqt);

  BoundednessVerdict verdict;
  verdict.plateau_level = median(std::move(head));
  const Bound bound = scaled(options.epsilon, verdict.plateau_level);

  std::optional<std::size_t> transition;
  for (std::size_t i = 0; i < pts.size() && !transition; ++i) {
    if (!above(pts[i].tklqt, bound)) continue;
    bool sustained = true;
    for (std::size_t j = i + 1; j < pts.size() && sustained; ++j) {
      sustained = pts[j].tklqt >= pts[j - 1].tklqt && above(pts[j].tklqt, bound);
    }
    if (sustained) transition = i;
  }

  verdict.labels.assign(pts.size(), Boundedness::CpuBound);
  if (transition) {
    verdict.transition_batch = pts[*transition].batch_size;
    std::fill(verdict.labels.begin() + static_cast<std::ptrdiff_t>(*transition), verdict.labels.end(),
              Boundedness::GpuBound);
    if (verdict.plateau_level != Rational(0)) verdict.ratio_at_transition = Rational(pts[*transition].tklqt) / verdict.plateau_level;
  }
  return verdict;
}

std::optional<std::pair<std::int64_t, std::int64_t>> sweet_spot(const SweepSeries& series,
                                                                 const SweetSpotOptions& options) {
  validate(series);
  std::optional<std::pair<std::size_t, std::size_t>> best;
  std::optional<std::size_t> run_start;
  auto close_run = [&](std::size_t end) {
    if (run_start && (!best || end - *run_start > best->second - best->first + 1)) best = {{*run_start, end - 1}};
    run_start.reset();
  };
  for (std::size_t i = 0; i < series.points.size(); ++i) {
    const auto& report = series.points[i].report;
    if (!report) throw Error(ErrorCode::InvalidSeries, "sweet spot needs a metric report for every point");
    bool ok = within(report->gpu_idle, options.theta_gpu, report->il) &&
              within(report->cpu_idle, options.theta_cpu, report->il);
    if (ok && !run_start) run_start = i;
    if (!ok) close_run(i);
  }
  close_run(series.points.size());
  if (!best) return std::nullopt;
  return std::make_pair(series.points[best->first].batch_size, series.points[best->second].batch_size);
}

SweepManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) bad_manifest(path, "not a JSON object");
  auto entries = doc.find("entries");
  if (entries == doc.end() || !entries->is_array()) bad_manifest(path, "missing \"entries\" array");

  SweepManifest m;
  auto base = path.parent_path();
  m.label = doc.value("label", path.parent_path().filename().string());
  if (auto t = doc.find("expected_transition"); t != doc.end() && !t->is_null()) {
    if (!t->is_number_integer()) bad_manifest(path, "expected_transition must be an integer");
    m.expected_transition = t->get<std::int64_t>();
  }
  for (const auto& e : *entries) {
    if (!e.is_object() || !e.contains("file") || !e["file"].is_string() || !e.contains("batch_size") ||
        !e["batch_size"].is_number_integer()) {
      bad_manifest(path, "each entry needs a string \"file\" and an integer \"batch_size\"");
    }
    SweepEntry entry{base / e["file"].get<std::string>(), e["batch_size"].get<std::int64_t>(), std::nullopt};
    if (auto t = e.find("truth"); t != e.end() && t->is_string()) entry.truth = base / t->get<std::string>();
    m.entries.push_back(std::move(entry));
  }
  std::stable_sort(m.entries.begin(), m.entries.end(),
                   [](const SweepEntry& a, const SweepEntry& b) { return a.batch_size < b.batch_size; });
  return m;
}

void write_manifest(const SweepManifest& manifest, const fs::path& path) {
  json doc;
  doc["schema_version"] = 1;
  doc["label"] = manifest.label;
  doc["expected_transition"] =
      manifest.expected_transition ? json(*manifest.expected_transition) : json(nullptr);
  auto& entries = doc["entries"] = json::array();
  auto base = path.parent_path();
  for (const auto& e : manifest.entries) {
    json entry{{"file", e.file.lexically_relative(base).generic_string()}, {"batch_size", e.batch_size}};
    if (e.truth) entry["truth"] = e.truth->lexically_relative(base).generic_string();
    entries.push_back(std::move(entry));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

SweepManifest discover_sweep(const fs::path& dir_or_manifest) {
  if (fs::is_regular_file(dir_or_manifest)) return read_manifest(dir_or_manifest);
  if (!fs::is_directory(dir_or_manifest)) {
    throw Error(ErrorCode::Io, "'" + dir_or_manifest.string() + "' is neither a manifest nor a directory");
  }
  if (fs::is_regular_file(dir_or_manifest / kManifestName)) return read_manifest(dir_or_manifest / kManifestName);

  static const std::regex batch_pattern(R"(bs(\d+))");
  SweepManifest m;
  m.label = fs::absolute(dir_or_manifest).lexically_normal().filename().string();
  if (m.label.empty()) m.label = fs::absolute(dir_or_manifest).lexically_normal().parent_path().filename().string();
  for (const auto& item : fs::directory_iterator(dir_or_manifest)) {
    if (!item.is_regular_file()) continue;
    auto name = item.path().filename().string();
    if (!(name.ends_with(".json") || name.ends_with(".json.gz")) || name.ends_with(".truth.json")) continue;
    std::smatch match;
    if (!std::regex_search(name, match, batch_pattern)) continue;
    m.entries.push_back({item.path(), std::stoll(match[1].str()), std::nullopt});
  }
  std::sort(m.entries.begin(), m.entries.end(), [](const SweepEntry& a, const SweepEntry& b) {
    return std::tie(a.batch_size, a.file) < std::tie(b.batch_size, b.file);
  });
  for (std::size_t i = 1; i < m.entries.size(); ++i) {
    if (m.entries[i].batch_size == m.entries[i - 1].batch_size) {
      throw Error(ErrorCode::MalformedManifest,
                  "two traces for batch size " + std::to_string(m.entries[i].batch_size) + " in '" +
                      dir_or_manifest.string() + "'");
    }
  }
  if (m.entries.empty()) {
    throw Error(ErrorCode::MalformedManifest, "no bs<N> trace files in '" + dir_or_manifest.string() + "'");
  }
  return m;
}

SweepSeries load_sweep(const SweepManifest& manifest, const SweepLoadOptions& options) {
  auto analyze = [&options](const SweepEntry& entry) {
    auto trace = std::make_shared<const Trace>(parse_trace(entry.file, options.mapping));
    auto graph = build_graph(trace, options.graph);
    return std::make_shared<const MetricReport>(compute_report(graph, options.report));
  };
  std::vector<std::future<std::shared_ptr<const MetricReport>>> pending;
  for (const auto& entry : manifest.entries) {
    pending.push_back(std::async(options.parallel ? std::launch::async : std::launch::deferred, analyze,
                                 std::cref(entry)));
  }
  SweepSeries series;
  series.label = manifest.label;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    auto report = pending[i].get();
    series.points.push_back({manifest.entries[i].batch_size, report->tklqt, std::move(report)});
  }
  return series;
}

}  // namespace skiptrace
