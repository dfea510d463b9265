#pragma once

#include "effattn/attention.hpp"
#include "effattn/instrument.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace effattn {

// Analytical per-example cost of one attention module with d_v = d and
// d_k = d / 2:
//
//                 memory (floats)    computation (MACC)
//   efficient     4dn + d^2/2        (6d^2 + d) n
//   dot-product   4dn + n^2          (4d^2 + d) n + 3dn^2
struct ResourceEstimate {
    std::uint64_t memory_floats = 0;
    std::uint64_t memory_bytes = 0;
    std::uint64_t macc = 0;
};

struct CostQuery {
    std::uint64_t n = 1;
    std::uint64_t d = 2;
    Mechanism mechanism = Mechanism::Efficient;
};

// Bytes per scalar used by the cost model (binary32).
inline constexpr std::size_t kCostModelBytesPerScalar = 4;

// Throws PreconditionError unless n >= 1 and d >= 2 is even, or if a count
// overflows 64 bits.
ResourceEstimate estimate(const CostQuery& q, std::size_t bytes_per_scalar = kCostModelBytesPerScalar);

struct Comparison {
    std::uint64_t n = 0;
    std::uint64_t d = 0;
    ResourceEstimate efficient;
    ResourceEstimate dot_product;
    double memory_ratio = 0.0;       // dot-product / efficient
    double computation_ratio = 0.0;  // dot-product / efficient
};

Comparison compare(std::uint64_t n, std::uint64_t d, std::size_t bytes_per_scalar = kCostModelBytesPerScalar);

// Runs `run` inside a fresh InstrumentScope and returns its counters.
InstrumentedCounters measure(const std::function<void()>& run);

struct NamedSize {
    std::string name;
    std::vector<std::size_t> spatial;

    std::uint64_t n() const noexcept;
};

// 64x64, 128x128, 256x256, 28x28x4, 64x64x32.
std::vector<NamedSize> sweep_sizes();

struct Placement {
    NamedSize size;
    std::uint64_t d = 256;
};

// Insertion points in a detection backbone/FPN: res3, res4, fpn1..fpn5.
std::vector<Placement> placement_presets(std::uint64_t d = 256);

struct SweepRow {
    std::string label;
    std::uint64_t n = 0;
    std::uint64_t d = 0;
    Mechanism mechanism = Mechanism::Efficient;
    ResourceEstimate estimate;
};

struct SweepPoint {
    std::string label;
    std::uint64_t n = 0;
    std::uint64_t d = 0;
};

// One row per (point, mechanism), points outermost. Throws on an empty list.
std::vector<SweepRow> sweep(const std::vector<SweepPoint>& points, const std::vector<Mechanism>& mechanisms,
                            std::size_t bytes_per_scalar = kCostModelBytesPerScalar);

std::vector<SweepPoint> sweep_points(std::uint64_t d = 64);

// Sum of matmul MACCs for one forward pass of the module as implemented
// here (projections, attend step, optional reprojection). Used as the
// oracle for instrumented counts.
std::uint64_t module_matmul_macc(Mechanism mech, std::uint64_t n, std::uint64_t d, std::uint64_t d_k,
                                 std::uint64_t d_v, bool reproject);
// Attend-step MACCs only.
std::uint64_t attend_matmul_macc(Mechanism mech, std::uint64_t n, std::uint64_t d_k, std::uint64_t d_v);

} // namespace effattn
