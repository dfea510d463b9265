#include "effattn/bench.hpp"

#include "effattn/errors.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace effattn {

std::uint64_t median_wall_time_ns(const std::function<void()>& run, int repeats) {
    if (repeats < 1) throw PreconditionError("repeats must be positive");
    using clock = std::chrono::steady_clock;
    run();  // warm-up
    std::vector<std::uint64_t> samples;
    samples.reserve(static_cast<std::size_t>(repeats));
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = clock::now();
        run();
        const auto t1 = clock::now();
        samples.push_back(static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t mid = samples.size() / 2;
    if (samples.size() % 2 == 1) return samples[mid];
    return samples[mid - 1] + (samples[mid] - samples[mid - 1]) / 2;
}

std::vector<BenchRecord> run_bench(const BenchOptions& options) {
    if (options.sizes.empty()) throw PreconditionError("bench needs at least one grid size");
    if (options.repeats < 3) throw PreconditionError("bench needs at least 3 repeats for a median");
    const std::uint64_t d = options.d;
    const std::uint64_t d_k = options.d_k.value_or(d / 2);
    const std::uint64_t d_v = options.d_v.value_or(d);
    if (d == 0 || d_k == 0 || d_v == 0) throw PreconditionError("bench dimensions must be positive");

    std::vector<BenchRecord> records;
    Rng rng(options.seed);
    for (const auto& size : options.sizes) {
        const FeatureMap x(rand_tensor(rng, [&] {
            Shape s(size.spatial.begin(), size.spatial.end());
            s.push_back(d);
            return s;
        }()));
        const ModuleWeights w = init_weights(rng, d, d_k, d_v);

        std::vector<std::optional<FeatureMap>> outputs;
        const std::size_t first = records.size();
        for (auto mech : options.mechanisms) {
            AttentionConfig cfg{d_k, d_v, options.norm, mech, true};
            BenchRecord rec;
            rec.mechanism = mech;
            rec.norm = options.norm;
            rec.label = size.name;
            rec.n = size.n();
            rec.d = d;
            rec.d_k = d_k;
            rec.d_v = d_v;
            if (d % 2 == 0) {
                const ResourceEstimate e = estimate({rec.n, d, mech}, kCostModelBytesPerScalar);
                rec.estimated_macc = e.macc;
                rec.estimated_peak_floats = e.memory_floats;
            }
            try {
                std::optional<FeatureMap> out;
                const InstrumentedCounters c = measure([&] { out = module_forward(x, w, cfg, options.budget_bytes); });
                rec.measured_macc = c.total_macc;
                rec.measured_peak_floats = c.peak_live_floats;
                rec.wall_time_ns = median_wall_time_ns([&] { module_forward(x, w, cfg); }, options.repeats);
                outputs.push_back(std::move(out));
            } catch (const ResourceBudgetError&) {
                rec.oom = true;
                rec.measured_macc.reset();
                rec.measured_peak_floats.reset();
                outputs.emplace_back(std::nullopt);
            }
            records.push_back(std::move(rec));
        }

        // Cross-mechanism agreement, when both ran.
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            for (std::size_t j = i + 1; j < outputs.size(); ++j) {
                if (!outputs[i] || !outputs[j]) continue;
                if (options.mechanisms[i] == options.mechanisms[j]) continue;
                const double err = max_relative_difference(outputs[i]->tensor(), outputs[j]->tensor());
                for (std::size_t r : {first + i, first + j}) {
                    auto& slot = records[r].max_equiv_error;
                    slot = std::max(slot.value_or(0.0), err);
                }
            }
        }
    }
    return records;
}

namespace {

std::string field(const std::optional<std::uint64_t>& v) { return v ? std::to_string(*v) : std::string(); }

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6e", v);
    return buf;
}

} // namespace

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
    out << kBenchCsvHeader << '\n';
    for (const auto& r : records) {
        out << to_string(r.mechanism) << ',' << to_string(r.norm) << ',' << r.n << ',' << r.d << ','
            << r.d_k << ',' << r.d_v << ',' << field(r.wall_time_ns) << ',' << field(r.estimated_macc)
            << ',' << field(r.measured_macc) << ',' << field(r.estimated_peak_floats) << ','
            << field(r.measured_peak_floats) << ',' << (r.oom ? "OOM" : "ok") << ','
            << (r.max_equiv_error ? format_double(*r.max_equiv_error) : std::string()) << '\n';
    }
}

std::vector<NamedSize> parse_size_list(const std::string& text) {
    std::vector<NamedSize> sizes;
    std::stringstream list(text);
    std::string item;
    while (std::getline(list, item, ',')) {
        if (item.empty()) continue;
        NamedSize size{item, {}};
        std::size_t start = 0;
        while (start <= item.size()) {
            const std::size_t end = std::min(item.find('x', start), item.size());
            std::size_t extent = 0;
            const auto [ptr, ec] = std::from_chars(item.data() + start, item.data() + end, extent);
            if (ec != std::errc() || ptr != item.data() + end || extent == 0)
                throw PreconditionError("invalid size '" + item + "' (expected e.g. 64x64 or 28x28x4)");
            size.spatial.push_back(extent);
            start = end + 1;
        }
        sizes.push_back(std::move(size));
    }
    if (sizes.empty()) throw PreconditionError("empty size list");
    return sizes;
}

} // namespace effattn
