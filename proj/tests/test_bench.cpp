#include "effattn/bench.hpp"
#include "effattn/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <sstream>

using namespace effattn;

TEST_CASE("median of timed runs") {
    int calls = 0;
    const auto ns = median_wall_time_ns([&] { ++calls; }, 5);
    CHECK(calls == 6);  // one warm-up
    CHECK(ns < 1'000'000'000ULL);
    CHECK_THROWS_AS(median_wall_time_ns([] {}, 0), PreconditionError);
}

TEST_CASE("size lists") {
    const auto sizes = parse_size_list("64x64,28x28x4");
    REQUIRE(sizes.size() == 2);
    CHECK(sizes[0].n() == 4096);
    CHECK(sizes[1].spatial == std::vector<std::size_t>{28, 28, 4});
    CHECK_THROWS_AS(parse_size_list("64xx"), PreconditionError);
    CHECK_THROWS_AS(parse_size_list("0x4"), PreconditionError);
    CHECK_THROWS_AS(parse_size_list(""), PreconditionError);
}

TEST_CASE("bench records") {
    BenchOptions o;
    o.sizes = parse_size_list("8x8,4x4x2");
    o.d = 16;
    o.repeats = 3;
    o.seed = 5;
    o.norm = Normalization::Scaling;
    const auto records = run_bench(o);
    REQUIRE(records.size() == 4);
    for (const auto& r : records) {
        CHECK_FALSE(r.oom);
        REQUIRE(r.measured_macc.has_value());
        CHECK(*r.measured_macc == module_matmul_macc(r.mechanism, r.n, 16, 8, 16, true));
        CHECK(*r.estimated_macc == estimate({r.n, 16, r.mechanism}).macc);
        REQUIRE(r.max_equiv_error.has_value());
        CHECK(*r.max_equiv_error <= 1e-10);
    }
    CHECK(*records[1].measured_peak_floats > *records[0].measured_peak_floats);

    std::ostringstream csv;
    write_bench_csv(csv, records);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == kBenchCsvHeader);
    int rows = 0;
    while (std::getline(lines, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 12);
    }
    CHECK(rows == 4);
}

TEST_CASE("dot-product rows over budget are OOM") {
    BenchOptions o;
    o.sizes = parse_size_list("32x32");
    o.d = 8;
    o.repeats = 3;
    o.budget_bytes = 4'000'000;  // the 1024 x 1024 similarity matrix needs 8 MiB
    const auto records = run_bench(o);
    REQUIRE(records.size() == 2);
    CHECK(records[0].mechanism == Mechanism::Efficient);
    CHECK_FALSE(records[0].oom);
    CHECK(records[1].oom);
    CHECK_FALSE(records[1].wall_time_ns.has_value());
    CHECK_FALSE(records[0].max_equiv_error.has_value());

    std::ostringstream csv;
    write_bench_csv(csv, records);
    CHECK(csv.str().find("dot-product,softmax,1024,8,4,8,,") != std::string::npos);
    CHECK(csv.str().find(",OOM,") != std::string::npos);
}
