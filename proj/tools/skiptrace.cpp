// SPDX-License-Identifier: Apache-2.0
// skiptrace: trace metrics, boundedness sweeps, fusion recommendations,
// synthetic trace generation and graph inspection.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "skiptrace/boundedness.hpp"
#include "skiptrace/error.hpp"
#include "skiptrace/fusion.hpp"
#include "skiptrace/graph.hpp"
#include "skiptrace/metrics.hpp"
#include "skiptrace/rational.hpp"
#include "skiptrace/synth.hpp"
#include "skiptrace/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skiptrace;

namespace {

enum class Format { Json, Csv, Table };

struct Globals {
  Format format = Format::Json;
  std::string out;
  std::string map;
  std::optional<std::int64_t> pid;
};

struct MetricsArgs {
  std::vector<std::string> traces;
  std::size_t top_k = 10;
  std::string key = "count";
};

struct ClassifyArgs {
  std::string sweep;
  std::string epsilon = "1/4";
  std::size_t min_plateau = 2;
  std::string theta_gpu = "3/10";
  std::string theta_cpu = "3/10";
  std::string plot;
  bool serial = false;
};

struct FuseArgs {
  std::string trace;
  std::vector<std::size_t> lengths{2, 4, 8, 16, 32, 64, 128, 256};
  std::string threshold = "1";
  std::string policy = "split_on_sync";
  bool raw_head = false;
  std::string chains;
};

struct GenArgs {
  std::string spec;
  std::optional<std::uint64_t> seed;
};

struct InspectArgs {
  std::string trace;
  bool dot = false;
};

Rational rational_arg(const std::string& text, const char* what) {
  auto r = parse_rational(text);
  if (!r) throw Error(ErrorCode::Usage, fmt::format("{} '{}' is not a number or p/q fraction", what, text));
  return *r;
}

FieldMapping mapping_of(const Globals& g) {
  return g.map.empty() ? FieldMapping{} : FieldMapping::from_file(g.map);
}

GraphOptions graph_options(const Globals& g) {
  GraphOptions o;
  o.pid = g.pid;
  return o;
}

// Writes to --out when given, stdout otherwise.
void emit(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(g.out, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write '" + g.out + "'");
  f << text;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  f << text;
}

DependencyGraph load_graph(const Globals& g, const std::string& path) {
  auto trace = std::make_shared<const Trace>(parse_trace(path, mapping_of(g)));
  spdlog::info("{}: {} events retained", path, trace->events().size());
  auto graph = build_graph(trace, graph_options(g));
  spdlog::debug("{}: pid {}, {} nodes, {} launch pairs", path, graph.pid, graph.nodes.size(), graph.launch_pairs.size());
  return graph;
}

int run_metrics(const Globals& g, const MetricsArgs& a) {
  ReportOptions options;
  options.top_k = a.top_k;
  auto key = top_k_key_from_string(a.key);
  if (!key) throw Error(ErrorCode::Usage, "unknown top-k key '" + a.key + "'");
  options.key = *key;

  std::vector<MetricReport> reports;
  for (const auto& path : a.traces) reports.push_back(compute_report(load_graph(g, path), options));

  std::ostringstream out;
  switch (g.format) {
    case Format::Json: {
      json doc;
      if (reports.size() == 1) {
        doc = to_json(reports.front());
      } else {
        doc = json::array();
        for (const auto& r : reports) doc.push_back(to_json(r));
      }
      out << doc.dump(2) << '\n';
      break;
    }
    case Format::Csv:
      out << csv_header() << '\n';
      for (const auto& r : reports) out << to_csv_row(r) << '\n';
      break;
    case Format::Table:
      for (std::size_t i = 0; i < reports.size(); ++i) {
        if (i > 0) out << '\n';
        write_table(reports[i], out);
      }
      break;
  }
  emit(g, out.str());
  return 0;
}

std::string verdict_text(const BoundednessVerdict& v) {
  if (!v.transition_batch) return "no transition (CPU-bound throughout)";
  return fmt::format("transition at batch size {} (CPU-bound below, GPU-bound from there on)", *v.transition_batch);
}

std::string plot_csv(const SweepSeries& series, const BoundednessVerdict& v) {
  std::string s = "batch_size,tklqt,label\n";
  for (std::size_t i = 0; i < series.points.size(); ++i) {
    s += fmt::format("{},{},{}\n", series.points[i].batch_size, series.points[i].tklqt, to_string(v.labels[i]));
  }
  return s;
}

int run_classify(const Globals& g, const ClassifyArgs& a) {
  ClassifyOptions co;
  co.epsilon = rational_arg(a.epsilon, "epsilon");
  co.min_plateau = a.min_plateau;
  SweetSpotOptions so;
  so.theta_gpu = rational_arg(a.theta_gpu, "theta-gpu");
  so.theta_cpu = rational_arg(a.theta_cpu, "theta-cpu");
  if (co.epsilon <= Rational(0)) throw Error(ErrorCode::NonPositiveEpsilon, "epsilon must be > 0");

  auto manifest = discover_sweep(a.sweep);
  SweepLoadOptions lo;
  lo.mapping = mapping_of(g);
  lo.graph = graph_options(g);
  lo.parallel = !a.serial;
  auto series = load_sweep(manifest, lo);
  auto verdict = classify(series, co);
  auto spot = sweet_spot(series, so);

  if (!a.plot.empty()) write_file(a.plot, plot_csv(series, verdict));

  std::ostringstream out;
  switch (g.format) {
    case Format::Json: {
      json doc;
      doc["schema_version"] = kReportSchemaVersion;
      doc["label"] = series.label;
      doc["verdict"] = verdict_text(verdict);
      doc["transition_batch"] = verdict.transition_batch ? json(*verdict.transition_batch) : json(nullptr);
      doc["expected_transition"] =
          manifest.expected_transition ? json(*manifest.expected_transition) : json(nullptr);
      doc["plateau_level_ns"] = format_decimal(verdict.plateau_level, kDecimalPlaces);
      doc["ratio_at_transition"] =
          verdict.ratio_at_transition ? json(format_decimal(*verdict.ratio_at_transition, kDecimalPlaces))
                                      : json(nullptr);
      doc["epsilon"] = format_decimal(co.epsilon, kDecimalPlaces);
      doc["min_plateau"] = co.min_plateau;
      doc["sweet_spot"] = spot ? json::array({spot->first, spot->second}) : json(nullptr);
      auto& points = doc["points"] = json::array();
      for (std::size_t i = 0; i < series.points.size(); ++i) {
        const auto& p = series.points[i];
        points.push_back({{"batch_size", p.batch_size},
                          {"tklqt_ns", p.tklqt},
                          {"label", std::string(to_string(verdict.labels[i]))},
                          {"il_ns", p.report->il},
                          {"gpu_idle_ns", p.report->gpu_idle},
                          {"cpu_idle_ns", p.report->cpu_idle}});
      }
      out << doc.dump(2) << '\n';
      break;
    }
    case Format::Csv:
      out << plot_csv(series, verdict);
      break;
    case Format::Table:
      out << "sweep: " << series.label << '\n';
      out << fmt::format("{:>10} {:>16} {:>10}\n", "batch", "TKLQT (ns)", "label");
      for (std::size_t i = 0; i < series.points.size(); ++i) {
        out << fmt::format("{:>10} {:>16} {:>10}{}\n", series.points[i].batch_size, series.points[i].tklqt,
                           to_string(verdict.labels[i]),
                           verdict.transition_batch && *verdict.transition_batch == series.points[i].batch_size
                               ? "  *"
                               : "");
      }
      out << "verdict: " << verdict_text(verdict) << '\n';
      if (spot) {
        out << fmt::format("sweet spot: batch sizes {}..{}\n", spot->first, spot->second);
      } else {
        out << "sweet spot: none\n";
      }
      break;
  }
  emit(g, out.str());
  return 0;
}

int run_fuse(const Globals& g, const FuseArgs& a) {
  auto policy = segment_policy_from_string(a.policy);
  if (!policy) throw Error(ErrorCode::Usage, "unknown segmentation policy '" + a.policy + "'");
  Recommendations recs;
  recs.policy = *policy;
  recs.threshold = rational_arg(a.threshold, "threshold");
  recs.head = a.raw_head ? HeadCounting::Raw : HeadCounting::WindowStart;

  auto graph = load_graph(g, a.trace);
  recs.labels = graph.trace->meta().labels;
  auto seqs = segment_sequences(graph, recs.policy);
  MineOptions mo;
  mo.head = recs.head;
  std::vector<std::size_t> lengths = a.lengths;
  std::sort(lengths.begin(), lengths.end());
  lengths.erase(std::unique(lengths.begin(), lengths.end()), lengths.end());
  for (auto l : lengths) recs.plans.push_back(fusion_plan(seqs, l, recs.threshold, mo));

  if (!a.chains.empty()) {
    std::ostringstream chains;
    write_chain_manifest(recs, chains);
    write_file(a.chains, chains.str());
  }

  std::ostringstream out;
  switch (g.format) {
    case Format::Json: out << to_json(recs).dump(2) << '\n'; break;
    case Format::Csv:
      out << fusion_csv_header() << '\n';
      for (const auto& row : to_csv_rows(recs)) out << row << '\n';
      break;
    case Format::Table: write_table(recs, out); break;
  }
  emit(g, out.str());
  return 0;
}

int run_gen(const Globals& g, const GenArgs& a) {
  std::ifstream in(a.spec);
  if (!in) throw Error(ErrorCode::Io, "cannot open generator spec '" + a.spec + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::InvalidSpec, "generator spec '" + a.spec + "' is not JSON");
  auto spec = GenSpec::from_json(doc);
  if (a.seed) spec.seed = *a.seed;

  std::ostringstream out;
  if (doc.contains("sweep")) {
    auto sweep = SweepSpec::from_json(doc["sweep"]);
    fs::path dir = g.out.empty() ? fs::path(sweep.label) : fs::path(g.out);
    auto manifest = generate_sweep(spec, sweep, dir);
    for (const auto& e : manifest.entries) out << e.file.generic_string() << '\n';
    out << (dir / kManifestName).generic_string() << '\n';
  } else {
    fs::path path = g.out.empty() ? fs::path(spec.label + ".json") : fs::path(g.out);
    write_generated(generate(spec), path);
    out << path.generic_string() << '\n' << sidecar_path(path).generic_string() << '\n';
  }
  std::cout << out.str();
  return 0;
}

int run_inspect(const Globals& g, const InspectArgs& a) {
  auto graph = load_graph(g, a.trace);
  std::ostringstream out;
  if (a.dot) {
    write_dot(graph, out);
  } else {
    write_text_tree(graph, out);
  }
  emit(g, out.str());
  return 0;
}

void init_logging() {
  auto logger = spdlog::stderr_logger_st("skiptrace");
  logger->set_pattern("skiptrace: %l: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("SKIPTRACE_LOG"); env && *env) {
    auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off") {
      spdlog::warn("SKIPTRACE_LOG='{}' is not a level (trace, debug, info, warn, error, critical, off)", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();

  CLI::App app{"Trace analysis for accelerator inference profiles"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::map<std::string, Format> formats{{"json", Format::Json}, {"csv", Format::Csv}, {"table", Format::Table}};
  app.add_option("--format", g.format, "Output format")
      ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case).description(""))
      ->type_name("{json,csv,table}")
      ->default_str("json");
  app.add_option("--out", g.out, "Write the primary output here instead of stdout");
  app.add_option("--map", g.map, "Field-mapping override file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--pid", g.pid, "Analyze this host process id");

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "Launch/queuing and idle-time metrics for one or more traces");
  metrics->add_option("trace", ma.traces, "Trace file(s)")->required();
  metrics->add_option("-k,--top-k", ma.top_k, "Number of kernels in the top-k table")->capture_default_str();
  metrics->add_option("--key", ma.key, "Top-k ranking key")
      ->check(CLI::IsMember({"count", "total_duration", "total_launch_latency"}))
      ->capture_default_str();

  ClassifyArgs ca;
  auto* classify_cmd = app.add_subcommand("classify", "CPU/GPU-bound transition over a batch-size sweep");
  classify_cmd->add_option("sweep", ca.sweep, "Sweep directory or manifest file")->required();
  classify_cmd->add_option("--epsilon", ca.epsilon, "Relative rise over the plateau (decimal or p/q)")
      ->capture_default_str();
  classify_cmd->add_option("--min-plateau", ca.min_plateau, "Leading points forming the plateau")
      ->capture_default_str();
  classify_cmd->add_option("--theta-gpu", ca.theta_gpu, "Sweet-spot gpu_idle/IL ceiling")->capture_default_str();
  classify_cmd->add_option("--theta-cpu", ca.theta_cpu, "Sweet-spot cpu_idle/IL ceiling")->capture_default_str();
  classify_cmd->add_option("--plot", ca.plot, "Also write plot data CSV (batch_size,tklqt,label)");
  classify_cmd->add_flag("--serial", ca.serial, "Analyze sweep files one at a time");

  FuseArgs fa;
  auto* fuse = app.add_subcommand("fuse", "Kernel-chain mining and idealized fusion speedups");
  fuse->add_option("trace", fa.trace, "Trace file")->required();
  fuse->add_option("-L,--lengths", fa.lengths, "Chain lengths (>= 2)")->delimiter(',')->capture_default_str();
  fuse->add_option("-T,--threshold", fa.threshold, "Proximity-score threshold in (0, 1]")->capture_default_str();
  fuse->add_option("--policy", fa.policy, "Sequence segmentation")
      ->check(CLI::IsMember({"split_on_sync", "per_stream"}))
      ->capture_default_str();
  fuse->add_flag("--raw-head", fa.raw_head, "Score against raw head occurrences instead of window starts");
  fuse->add_option("--chains", fa.chains, "Write the selected-chain manifest here");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "Synthetic trace (or sweep) with a ground-truth sidecar");
  gen->add_option("spec", ga.spec, "Generator spec (JSON)")->required();
  gen->add_option("--seed", ga.seed, "Override the spec seed");

  InspectArgs ia;
  auto* inspect = app.add_subcommand("inspect", "Operator/launch/kernel tree of a trace");
  inspect->add_option("trace", ia.trace, "Trace file")->required();
  inspect->add_flag("--dot", ia.dot, "Graphviz output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorCode::Usage);
  }

  try {
    if (*metrics) return run_metrics(g, ma);
    if (*classify_cmd) return run_classify(g, ca);
    if (*fuse) return run_fuse(g, fa);
    if (*gen) return run_gen(g, ga);
    if (*inspect) return run_inspect(g, ia);
  } catch (const Error& e) {
    std::cerr << "skiptrace: error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "skiptrace: internal error: " << e.what() << '\n';
    return 1;
  }
  return exit_code(ErrorCode::Usage);
}
