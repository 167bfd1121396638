// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "skiptrace/boundedness.hpp"
#include "skiptrace/error.hpp"
#include "skiptrace/synth.hpp"

using namespace skiptrace;
namespace fs = std::filesystem;

namespace {

SweepSeries series(std::vector<std::pair<std::int64_t, Tick>> pts) {
  SweepSeries s;
  s.label = "s";
  for (auto [b, t] : pts) s.points.push_back({b, t, nullptr});
  return s;
}

SweepSeries with_idle(std::vector<std::tuple<std::int64_t, Tick, Tick>> pts) {
  SweepSeries s;
  for (auto [b, gpu, cpu] : pts) {
    auto r = std::make_shared<MetricReport>();
    r->il = 100;
    r->gpu_idle = gpu;
    r->cpu_idle = cpu;
    s.points.push_back({b, 0, r});
  }
  return s;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Usage;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("skiptrace_bound_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("plateau then rise") {
  auto v = classify(series({{1, 100}, {2, 102}, {4, 101}, {8, 180}, {16, 400}}));
  REQUIRE(v.transition_batch);
  CHECK(*v.transition_batch == 8);
  CHECK(v.plateau_level == Rational(101));
  CHECK(v.labels == std::vector<Boundedness>{Boundedness::CpuBound, Boundedness::CpuBound, Boundedness::CpuBound,
                                             Boundedness::GpuBound, Boundedness::GpuBound});
  CHECK(v.ratio_at_transition == Rational(180, 101));
}

TEST_CASE("flat series has no transition") {
  auto v = classify(series({{1, 100}, {2, 100}, {4, 110}, {8, 101}}));
  CHECK_FALSE(v.transition_batch);
  CHECK(std::all_of(v.labels.begin(), v.labels.end(), [](auto l) { return l == Boundedness::CpuBound; }));
}

TEST_CASE("a single spike is not sustained growth") {
  auto v = classify(series({{1, 100}, {2, 100}, {4, 300}, {8, 100}, {16, 100}}));
  CHECK_FALSE(v.transition_batch);
  auto w = classify(series({{1, 100}, {2, 100}, {4, 300}, {8, 200}, {16, 400}}));
  REQUIRE(w.transition_batch);
  CHECK(*w.transition_batch == 8);
}

TEST_CASE("threshold is strict and exact") {
  CHECK_FALSE(classify(series({{1, 100}, {2, 100}, {4, 125}, {8, 125}})).transition_batch);
  CHECK(classify(series({{1, 100}, {2, 100}, {4, 126}, {8, 126}})).transition_batch == 4);
  ClassifyOptions o;
  o.epsilon = Rational(1, 2);
  CHECK_FALSE(classify(series({{1, 100}, {2, 100}, {4, 126}, {8, 150}}), o).transition_batch);
}

TEST_CASE("min plateau uses the median") {
  ClassifyOptions o;
  o.min_plateau = 3;
  auto v = classify(series({{1, 100}, {2, 1000}, {4, 110}, {8, 120}, {16, 500}}), o);
  CHECK(v.plateau_level == Rational(110));
  CHECK(v.transition_batch == 16);
  o.min_plateau = 2;
  auto w = classify(series({{1, 100}, {2, 101}, {4, 500}}), o);
  CHECK(w.plateau_level == Rational(201, 2));
}

TEST_CASE("scale invariance") {
  std::vector<std::pair<std::int64_t, Tick>> base{{1, 100}, {2, 103}, {4, 99}, {8, 140}, {16, 300}, {32, 900}};
  auto expected = classify(series(base)).transition_batch;
  for (Tick k : {2, 7, 1000, 123457}) {
    auto scaled = base;
    for (auto& p : scaled) p.second *= k;
    CHECK(classify(series(scaled)).transition_batch == expected);
  }
}

TEST_CASE("invalid series and options") {
  CHECK(code_of([] { classify(series({{1, 1}, {2, 2}})); }) == ErrorCode::TooFewPoints);
  CHECK(code_of([] { classify(series({{1, 1}, {1, 2}, {3, 3}})); }) == ErrorCode::InvalidSeries);
  CHECK(code_of([] { classify(series({{0, 1}, {1, 2}, {3, 3}})); }) == ErrorCode::InvalidSeries);
  ClassifyOptions zero;
  zero.epsilon = 0;
  CHECK(code_of([&] { classify(series({{1, 1}, {2, 2}, {3, 3}}), zero); }) == ErrorCode::NonPositiveEpsilon);
  ClassifyOptions wide;
  wide.min_plateau = 4;
  CHECK(code_of([&] { classify(series({{1, 1}, {2, 2}, {3, 3}}), wide); }) == ErrorCode::TooFewPoints);
}

TEST_CASE("sweet spot: longest balanced run") {
  auto s = with_idle({{1, 80, 5}, {2, 20, 10}, {4, 10, 20}, {8, 5, 40}, {16, 25, 25}, {32, 10, 10}, {64, 10, 29}});
  auto spot = sweet_spot(s);
  REQUIRE(spot);
  CHECK(spot->first == 16);
  CHECK(spot->second == 64);
  auto none = sweet_spot(with_idle({{1, 80, 5}, {2, 5, 80}, {4, 40, 40}}));
  CHECK_FALSE(none);
  CHECK(code_of([] { sweet_spot(series({{1, 1}, {2, 2}, {3, 3}})); }) == ErrorCode::InvalidSeries);
}

TEST_CASE("manifest round trip and discovery") {
  auto dir = scratch("manifest");
  SweepManifest m;
  m.label = "demo";
  m.expected_transition = 16;
  m.entries = {{dir / "b.json", 8, dir / "b.truth.json"}, {dir / "a.json", 4, std::nullopt}};
  write_manifest(m, dir / kManifestName);
  auto back = read_manifest(dir / kManifestName);
  CHECK(back.label == "demo");
  CHECK(back.expected_transition == 16);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].batch_size == 4);
  CHECK(back.entries[1].file == dir / "b.json");
  CHECK(back.entries[1].truth == dir / "b.truth.json");
  CHECK(discover_sweep(dir).entries.size() == 2);

  auto plain = scratch("plain");
  for (const char* f : {"run_bs16.json", "run_bs2.json", "run_bs4.json.gz", "run_bs2.truth.json", "notes.txt"}) {
    std::ofstream(plain / f) << "{}";
  }
  auto found = discover_sweep(plain);
  REQUIRE(found.entries.size() == 3);
  CHECK(found.entries[0].batch_size == 2);
  CHECK(found.entries[1].batch_size == 4);
  CHECK(found.entries[2].batch_size == 16);
  CHECK(found.label == "skiptrace_bound_plain");
}

TEST_CASE("malformed manifests") {
  auto dir = scratch("bad");
  std::ofstream(dir / "m1.json") << "{ not json";
  CHECK(code_of([&] { read_manifest(dir / "m1.json"); }) == ErrorCode::MalformedManifest);
  std::ofstream(dir / "m2.json") << R"({"entries": [{"file": 3, "batch_size": 1}]})";
  CHECK(code_of([&] { read_manifest(dir / "m2.json"); }) == ErrorCode::MalformedManifest);
  std::ofstream(dir / "m3.json") << R"({"label": "x"})";
  CHECK(code_of([&] { read_manifest(dir / "m3.json"); }) == ErrorCode::MalformedManifest);
  CHECK(code_of([&] { read_manifest(dir / "absent.json"); }) == ErrorCode::Io);
  auto empty = scratch("empty");
  CHECK(code_of([&] { discover_sweep(empty); }) == ErrorCode::MalformedManifest);
  auto dup = scratch("dup");
  std::ofstream(dup / "a_bs2.json") << "{}";
  std::ofstream(dup / "b_bs2.json") << "{}";
  CHECK(code_of([&] { discover_sweep(dup); }) == ErrorCode::MalformedManifest);
}

TEST_CASE("generated sweep: known transition at 16") {
  auto dir = scratch("gen16");
  GenSpec spec;
  spec.n_ops = 20;
  spec.kernels_per_op = Dist::fixed(3);
  spec.kernel_duration = Dist::fixed(200);
  SweepSpec sw;
  sw.label = "gen16";
  sw.batch_sizes = {1, 2, 4, 8, 16, 32, 64};
  sw.duration_per_batch = 100;
  sw.saturate_batch = 16;
  auto manifest = generate_sweep(spec, sw, dir);
  CHECK(manifest.expected_transition == 16);
  for (bool parallel : {true, false}) {
    SweepLoadOptions lo;
    lo.parallel = parallel;
    auto s = load_sweep(discover_sweep(dir), lo);
    CHECK(s.points.size() == 7);
    auto v = classify(s);
    CHECK(v.transition_batch == 16);
  }

  auto flat = scratch("flat");
  sw.saturate_batch.reset();
  auto fm = generate_sweep(spec, sw, flat);
  CHECK_FALSE(fm.expected_transition);
  CHECK_FALSE(classify(load_sweep(discover_sweep(flat))).transition_batch);
}
