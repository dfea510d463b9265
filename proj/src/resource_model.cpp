#include "effattn/resource_model.hpp"

#include "effattn/errors.hpp"


namespace effattn {

namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out = 0;
    if (__builtin_mul_overflow(a, b, &out)) throw PreconditionError("cost estimate overflows 64 bits");
    return out;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out = 0;
    if (__builtin_add_overflow(a, b, &out)) throw PreconditionError("cost estimate overflows 64 bits");
    return out;
}

} // namespace

ResourceEstimate estimate(const CostQuery& q, std::size_t bytes_per_scalar) {
    if (q.n < 1) throw PreconditionError("cost query needs n >= 1");
    if (q.d < 2 || q.d % 2 != 0) {
        throw PreconditionError("cost query needs an even d >= 2 (d_k = d/2), got d = " + std::to_string(q.d));
    }
    const std::uint64_t n = q.n, d = q.d;
    ResourceEstimate e;
    if (q.mechanism == Mechanism::Efficient) {
        e.memory_floats = add(mul(mul(4, d), n), mul(d, d) / 2);
        e.macc = mul(add(mul(6, mul(d, d)), d), n);
    } else {
        e.memory_floats = add(mul(mul(4, d), n), mul(n, n));
        e.macc = add(mul(add(mul(4, mul(d, d)), d), n), mul(mul(3, d), mul(n, n)));
    }
    e.memory_bytes = mul(e.memory_floats, bytes_per_scalar);
    return e;
}

Comparison compare(std::uint64_t n, std::uint64_t d, std::size_t bytes_per_scalar) {
    Comparison c;
    c.n = n;
    c.d = d;
    c.efficient = estimate({n, d, Mechanism::Efficient}, bytes_per_scalar);
    c.dot_product = estimate({n, d, Mechanism::DotProduct}, bytes_per_scalar);
    c.memory_ratio = static_cast<double>(c.dot_product.memory_floats) / static_cast<double>(c.efficient.memory_floats);
    c.computation_ratio = static_cast<double>(c.dot_product.macc) / static_cast<double>(c.efficient.macc);
    return c;
}

InstrumentedCounters measure(const std::function<void()>& run) {
    InstrumentScope scope;
    run();
    return scope.counters();
}

std::uint64_t NamedSize::n() const noexcept {
    std::uint64_t n = 1;
    for (auto e : spatial) n *= e;
    return n;
}

std::vector<NamedSize> sweep_sizes() {
    return {
        {"64x64", {64, 64}},
        {"128x128", {128, 128}},
        {"256x256", {256, 256}},
        {"28x28x4", {28, 28, 4}},
        {"64x64x32", {64, 64, 32}},
    };
}

std::vector<Placement> placement_presets(std::uint64_t d) {
    return {
        {{"res3", {56, 80}}, d},  {{"res4", {28, 40}}, d},  {{"fpn1", {224, 320}}, d},
        {{"fpn2", {112, 160}}, d}, {{"fpn3", {56, 80}}, d}, {{"fpn4", {28, 40}}, d},
        {{"fpn5", {14, 20}}, d},
    };
}

std::vector<SweepPoint> sweep_points(std::uint64_t d) {
    std::vector<SweepPoint> points;
    for (const auto& s : sweep_sizes()) points.push_back({s.name, s.n(), d});
    return points;
}

std::vector<SweepRow> sweep(const std::vector<SweepPoint>& points, const std::vector<Mechanism>& mechanisms,
                            std::size_t bytes_per_scalar) {
    if (points.empty() || mechanisms.empty()) throw PreconditionError("sweep needs at least one size and mechanism");
    std::vector<SweepRow> rows;
    rows.reserve(points.size() * mechanisms.size());
    for (const auto& p : points) {
        for (auto mech : mechanisms) {
            rows.push_back({p.label, p.n, p.d, mech, estimate({p.n, p.d, mech}, bytes_per_scalar)});
        }
    }
    return rows;
}

std::uint64_t attend_matmul_macc(Mechanism mech, std::uint64_t n, std::uint64_t d_k, std::uint64_t d_v) {
    if (mech == Mechanism::Efficient) return d_k * n * d_v + n * d_k * d_v;
    return n * d_k * n + n * n * d_v;
}

std::uint64_t module_matmul_macc(Mechanism mech, std::uint64_t n, std::uint64_t d, std::uint64_t d_k,
                                 std::uint64_t d_v, bool reproject) {
    std::uint64_t total = n * d * (2 * d_k + d_v) + attend_matmul_macc(mech, n, d_k, d_v);
    if (reproject || d_v != d) total += n * d_v * d;
    return total;
}

} // namespace effattn
