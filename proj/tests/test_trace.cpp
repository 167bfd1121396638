// SPDX-License-Identifier: Apache-2.0
#include <zlib.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "skiptrace/error.hpp"
#include "skiptrace/synth.hpp"
#include "skiptrace/trace.hpp"

using namespace skiptrace;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = SKIPTRACE_FIXTURES;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Usage;
}

Trace round_trip(const Trace& t, const FieldMapping& m = {}) {
  std::ostringstream out;
  write_trace(t, out);
  return parse_trace_text(out.str(), m);
}

std::string event_json(const std::string& body) { return R"({"traceEvents": [)" + body + "]}"; }

}  // namespace

TEST_CASE("hand fixture: kind counts, unit conversion and labels") {
  auto t = parse_trace(kFixtures / "small.json");
  CHECK(t.meta().count(EventKind::CpuOp) == 3);
  CHECK(t.meta().count(EventKind::RuntimeCall) == 2);
  CHECK(t.meta().count(EventKind::Kernel) == 2);
  CHECK(t.meta().count(EventKind::Other) == 1);
  CHECK(t.meta().skipped_records == 2);
  CHECK(t.size() == 8);
  CHECK(t.label("label") == "small");
  CHECK(t.label("model") == "tiny");
  CHECK(t.label("batch_size") == "4");

  // sorted: linear(0) before the annotation(0) since CpuOp ranks first
  CHECK(t[0].name == "aten::linear");
  CHECK(t[1].name == "step");
  auto relu = std::find_if(t.events().begin(), t.events().end(), [](const TraceEvent& e) { return e.name == "aten::relu"; });
  CHECK(relu->begin == 60500);
  CHECK(relu->duration == 20250);
  auto launch2 = std::find_if(t.events().begin(), t.events().end(),
                              [](const TraceEvent& e) { return e.correlation == 8 && e.kind == EventKind::RuntimeCall; });
  REQUIRE(launch2 != t.events().end());
  CHECK(launch2->begin == 62345);
}

TEST_CASE("ts 12.345 us becomes 12345 ns") {
  auto t = parse_trace_text(event_json(R"({"ph":"X","cat":"cpu_op","name":"a","pid":1,"tid":1,"ts":12.345,"dur":1})"));
  CHECK(t[0].begin == 12345);
  CHECK(t[0].duration == 1000);
}

TEST_CASE("sub-nanosecond timestamps round half to even") {
  auto t = parse_trace_text(event_json(
      R"({"ph":"X","cat":"cpu_op","name":"a","pid":1,"tid":1,"ts":0.0005,"dur":0.0015},)"
      R"({"ph":"X","cat":"cpu_op","name":"b","pid":1,"tid":2,"ts":"0.0025","dur":2})"));
  CHECK(t[0].begin == 0);
  CHECK(t[0].duration == 2);
  CHECK(t[1].begin == 2);
}

TEST_CASE("empty and malformed inputs") {
  CHECK(code_of([] { parse_trace_text(R"({"traceEvents": []})"); }) == ErrorCode::EmptyTrace);
  CHECK(code_of([] { parse_trace_text(R"({"traceEvents": [{"ph":"M","name":"x"}]})"); }) == ErrorCode::EmptyTrace);
  CHECK(code_of([] { parse_trace_text("{not json"); }) == ErrorCode::MalformedTrace);
  CHECK(code_of([] { parse_trace_text(R"({"events": []})"); }) == ErrorCode::MalformedTrace);
  CHECK(code_of([] { parse_trace_text("42"); }) == ErrorCode::MalformedTrace);
  CHECK(code_of([] { parse_trace_text(event_json(R"({"ph":"X","cat":"cpu_op","name":"a","pid":1,"tid":1,"ts":"x"})")); }) ==
        ErrorCode::MalformedTrace);
  CHECK(code_of([] { parse_trace(kFixtures / "does_not_exist.json"); }) == ErrorCode::Io);
}

TEST_CASE("missing required fields on mapped events") {
  CHECK(code_of([] { parse_trace_text(event_json(R"({"ph":"X","cat":"cpu_op","name":"a","pid":1,"tid":1})")); }) ==
        ErrorCode::MissingField);
  CHECK(code_of([] { parse_trace_text(event_json(R"({"ph":"X","cat":"cpu_op","name":"a","tid":1,"ts":1})")); }) ==
        ErrorCode::MissingField);
  CHECK(code_of([] {
          parse_trace_text(event_json(R"({"ph":"X","cat":"kernel","name":"k","pid":0,"tid":7,"ts":1,"dur":1})"));
        }) == ErrorCode::MissingField);
  CHECK(code_of([] {
          parse_trace_text(
              event_json(R"({"ph":"X","cat":"cuda_runtime","name":"cudaLaunchKernel","pid":1,"tid":1,"ts":1,"dur":1})"));
        }) == ErrorCode::MissingField);
  // Unmapped events may lack anything but a timestamp.
  auto t = parse_trace_text(event_json(R"({"ph":"X","cat":"python_function","name":"f","ts":3})"));
  CHECK(t[0].kind == EventKind::Other);
}

TEST_CASE("mapping defaults fill missing fields") {
  FieldMapping m;
  m.default_stream = 3;
  auto t = parse_trace_text(event_json(R"({"ph":"X","cat":"kernel","name":"k","pid":0,"tid":7,"ts":1,"dur":1})"), m);
  CHECK(t[0].stream == 3);
  FieldMapping by_tid;
  by_tid.stream_from_tid = true;
  auto u = parse_trace_text(event_json(R"({"ph":"X","cat":"kernel","name":"k","pid":0,"tid":7,"ts":1,"dur":1})"), by_tid);
  CHECK(u[0].stream == 7);
}

TEST_CASE("negative or missing durations clamp to zero with a warning") {
  auto t = parse_trace_text(event_json(R"({"ph":"X","cat":"cpu_op","name":"a","pid":1,"tid":1,"ts":1,"dur":-4},)"
                                       R"({"ph":"X","cat":"cpu_op","name":"b","pid":1,"tid":1,"ts":2})"));
  CHECK(t.meta().duration_warnings == 2);
  CHECK(t[0].duration == 0);
  CHECK(t[1].duration == 0);
}

TEST_CASE("duplicate kernel correlation is malformed") {
  CHECK(code_of([] {
          parse_trace_text(event_json(
              R"({"ph":"X","cat":"kernel","name":"k","pid":0,"tid":7,"ts":1,"dur":1,"args":{"correlation":4,"stream":7}},)"
              R"({"ph":"X","cat":"kernel","name":"j","pid":0,"tid":7,"ts":5,"dur":1,"args":{"correlation":4,"stream":7}})"));
        }) == ErrorCode::MalformedTrace);
}

TEST_CASE("correlation key priority") {
  auto t = parse_trace_text(event_json(
      R"({"ph":"X","cat":"cuda_runtime","name":"cudaLaunchKernel","pid":1,"tid":1,"ts":1,"dur":1,)"
      R"("args":{"External id":3,"Correlation Id":2,"correlation":1}},)"
      R"({"ph":"X","cat":"cuda_runtime","name":"cudaLaunchKernel","pid":1,"tid":1,"ts":2,"dur":1,)"
      R"("args":{"External id":3,"Correlation Id":2}},)"
      R"({"ph":"X","cat":"cuda_runtime","name":"cudaLaunchKernel","pid":1,"tid":1,"ts":3,"dur":1,)"
      R"("args":{"External id":3}})"));
  CHECK(t[0].correlation == 1);
  CHECK(t[1].correlation == 2);
  CHECK(t[2].correlation == 3);
}

TEST_CASE("string pids and tids") {
  auto t = parse_trace_text(event_json(R"({"ph":"X","cat":"cpu_op","name":"a","pid":"Process 12","tid":"thread 7","ts":1,"dur":1},)"
                                       R"({"ph":"X","cat":"cpu_op","name":"b","pid":"python","tid":"main","ts":2,"dur":1})"));
  CHECK(t[0].pid == 12);
  CHECK(t[0].tid == 7);
  auto again = parse_trace_text(event_json(R"({"ph":"X","cat":"cpu_op","name":"b","pid":"python","tid":"main","ts":2,"dur":1})"));
  CHECK(t[1].pid == again[0].pid);
  CHECK(t[1].pid != t[1].tid);
}

TEST_CASE("classify_event table") {
  CHECK(classify_event("cuda_runtime", "cudaLaunchKernel") == EventKind::RuntimeCall);
  CHECK(classify_event("cuda_runtime", "cuLaunchKernel") == EventKind::RuntimeCall);
  CHECK(classify_event("cuda_runtime", "cudaLaunchKernelExC") == EventKind::RuntimeCall);
  CHECK(classify_event("cuda_runtime", "cudaDeviceSynchronize") == EventKind::Sync);
  CHECK(classify_event("cuda_runtime", "cudaStreamSynchronize") == EventKind::Sync);
  CHECK(classify_event("cuda_runtime", "cudaEventSynchronize") == EventKind::Sync);
  CHECK(classify_event("cuda_runtime", "cudaMalloc") == EventKind::Other);
  CHECK(classify_event("kernel", "void gemm_kernel<...>") == EventKind::Kernel);
  CHECK(classify_event("cpu_op", "aten::mm") == EventKind::CpuOp);
  CHECK(classify_event("gpu_memcpy", "Memcpy DtoH") == EventKind::Memcpy);
  CHECK(classify_event("gpu_memset", "Memset") == EventKind::Memcpy);
  CHECK(classify_event("user_annotation", "step") == EventKind::Other);
  CHECK(classify_event("", "") == EventKind::Other);
}

TEST_CASE("mapping file overrides keys and categories") {
  auto m = FieldMapping::from_file(kFixtures / "nested_mapping.json");
  auto t = parse_trace(kFixtures / "custom_keys.json", m);
  REQUIRE(t.size() == 3);
  CHECK(t[0].kind == EventKind::CpuOp);
  CHECK(t[1].kind == EventKind::RuntimeCall);
  CHECK(t[1].correlation == 1);
  CHECK(t[2].kind == EventKind::Kernel);
  CHECK(t[2].stream == 5);
  CHECK(t.label("label") == "custom_keys");

  CHECK(code_of([] { FieldMapping::from_json(nlohmann::json::parse(R"({"categories": {"x": "Nope"}})")); }) ==
        ErrorCode::Usage);
  CHECK(code_of([] { FieldMapping::from_json(nlohmann::json::parse(R"({"defaults": {"pid": "a"}})")); }) ==
        ErrorCode::Usage);
}

TEST_CASE("gzip-compressed traces") {
  auto plain = parse_trace(kFixtures / "small.json");
  std::ifstream in(kFixtures / "small.json", std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto gz_path = fs::temp_directory_path() / "skiptrace_small.json.gz";
  gzFile f = gzopen(gz_path.string().c_str(), "wb");
  REQUIRE(f != nullptr);
  gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
  gzclose(f);
  auto zipped = parse_trace(gz_path);
  CHECK(zipped.events().size() == plain.events().size());
  CHECK(std::equal(zipped.events().begin(), zipped.events().end(), plain.events().begin()));
  CHECK(zipped.label("label") == "skiptrace_small");
  fs::remove(gz_path);
}

TEST_CASE("parse -> write -> parse is the identity") {
  auto t = parse_trace(kFixtures / "small.json");
  CHECK(round_trip(t) == t);
  CHECK(round_trip(round_trip(t)) == t);

  auto m = FieldMapping::from_file(kFixtures / "nested_mapping.json");
  auto c = parse_trace(kFixtures / "custom_keys.json", m);
  CHECK(round_trip(c, m) == c);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    Trace r(oracle::random_forest(rng));
    CHECK(round_trip(r) == r);
  }
  GenSpec spec;
  spec.n_ops = 40;
  spec.kernels_per_op = Dist::uniform(0, 6);
  spec.n_streams = 3;
  spec.sync_probability = Rational(1, 5);
  spec.time_origin = 1'700'000'000'123'456;
  auto g = generate(spec);
  CHECK(round_trip(g.trace) == g.trace);
}

TEST_CASE("sorting is a permutation with a deterministic result") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    auto events = oracle::random_forest(rng);
    auto shuffled = events;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    Trace a(events);
    Trace b(shuffled);
    CHECK(a == b);
    auto key = [](const TraceEvent& x, const TraceEvent& y) { return event_order(x, y); };
    std::sort(events.begin(), events.end(), key);
    CHECK(std::equal(events.begin(), events.end(), a.events().begin(), a.events().end()));
    CHECK(std::is_sorted(a.events().begin(), a.events().end(), key));
  }
}

TEST_CASE("event order puts enclosing operators first") {
  TraceEvent outer{EventKind::CpuOp, "outer", "cpu_op", 1, 1, 0, 100, {}, {}, {}};
  TraceEvent inner{EventKind::CpuOp, "inner", "cpu_op", 1, 1, 0, 50, {}, {}, {}};
  TraceEvent launch{EventKind::RuntimeCall, "cudaLaunchKernel", "cuda_runtime", 1, 1, 0, 200, 1, {}, {}};
  CHECK(event_order(outer, inner));
  CHECK(event_order(inner, launch));
  CHECK_FALSE(event_order(launch, outer));
}

TEST_CASE("format_microseconds") {
  CHECK(format_microseconds(12345) == "12.345");
  CHECK(format_microseconds(5) == "0.005");
  CHECK(format_microseconds(-1500) == "-1.500");
  CHECK(format_microseconds(0) == "0.000");
}
