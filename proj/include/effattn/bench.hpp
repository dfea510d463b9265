#pragma once

#include "effattn/attention_module.hpp"
#include "effattn/resource_model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace effattn {

// Median wall time in nanoseconds over `repeats` timed runs, after one
// untimed warm-up run.
std::uint64_t median_wall_time_ns(const std::function<void()>& run, int repeats);

struct BenchRecord {
    Mechanism mechanism = Mechanism::Efficient;
    Normalization norm = Normalization::Softmax;
    std::string label;
    std::uint64_t n = 0;
    std::uint64_t d = 0;
    std::uint64_t d_k = 0;
    std::uint64_t d_v = 0;
    bool oom = false;
    // Absent for OOM rows.
    std::optional<std::uint64_t> wall_time_ns;
    std::optional<std::uint64_t> measured_macc;
    std::optional<std::uint64_t> measured_peak_floats;
    // Analytical figures; absent when d is odd.
    std::optional<std::uint64_t> estimated_macc;
    std::optional<std::uint64_t> estimated_peak_floats;
    // Max relative difference between the two mechanisms' module outputs,
    // present on both rows of a grid point when both completed.
    std::optional<double> max_equiv_error;
};

struct BenchOptions {
    std::vector<NamedSize> sizes = sweep_sizes();
    std::uint64_t d = 64;
    std::optional<std::uint64_t> d_k;  // default d / 2
    std::optional<std::uint64_t> d_v;  // default d
    Normalization norm = Normalization::Softmax;
    std::vector<Mechanism> mechanisms{Mechanism::Efficient, Mechanism::DotProduct};
    int repeats = 5;
    std::uint64_t seed = 0;
    std::uint64_t budget_bytes = kDefaultBudgetBytes;
};

// Grid points run sequentially; one record per (size, mechanism).
std::vector<BenchRecord> run_bench(const BenchOptions& options);

inline constexpr const char* kBenchCsvHeader =
    "mechanism,norm,n,d,d_k,d_v,wall_time_ns,estimated_macc,measured_macc,"
    "estimated_peak_floats,measured_peak_floats,status,max_equiv_error";

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records);

// Parses "64x64,28x28x4" into named sizes.
std::vector<NamedSize> parse_size_list(const std::string& text);

} // namespace effattn
