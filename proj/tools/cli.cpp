#include "cli.hpp"

#include "effattn/bench.hpp"
#include "effattn/errors.hpp"
#include "effattn/gradient.hpp"
#include "effattn/resource_model.hpp"
#include "effattn/tensor_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace effattn::cli {

namespace {

enum class Format { Table, Csv };

struct GlobalOptions {
    std::uint64_t seed = 0;
    std::string format = "table";
    std::optional<std::uint64_t> budget_bytes;

    Format output_format() const { return format == "csv" ? Format::Csv : Format::Table; }
};

// Usage errors detected after CLI parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

// Minimal column-aligned table / CSV writer.
class Report {
public:
    explicit Report(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

    void print(std::ostream& out, Format format) const {
        if (format == Format::Csv) {
            print_csv_row(out, columns_);
            for (const auto& r : rows_) print_csv_row(out, r);
            return;
        }
        std::vector<std::size_t> widths(columns_.size());
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            widths[c] = columns_[c].size();
            for (const auto& r : rows_) widths[c] = std::max(widths[c], r[c].size());
        }
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t c = 0; c < r.size(); ++c) {
                out << (c ? "  " : "") << std::setw(static_cast<int>(widths[c])) << std::left << r[c];
            }
            out << '\n';
        };
        line(columns_);
        for (const auto& r : rows_) line(r);
    }

private:
    static void print_csv_row(std::ostream& out, const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << r[c];
        out << '\n';
    }

    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

// ---- equiv -----------------------------------------------------------------

struct EquivOptions {
    std::size_t n = 64;
    std::size_t d_k = 8;
    std::size_t d_v = 8;
    int trials = 100;
    std::string norm = "scaling";
};

constexpr double kEquivTolerance = 1e-10;

int cmd_equiv(const GlobalOptions& g, const EquivOptions& o, std::ostream& out) {
    const Normalization norm = parse_normalization(o.norm);
    Rng rng(g.seed);
    double max_err = 0.0;
    double max_gap = 0.0;
    for (int t = 0; t < o.trials; ++t) {
        const Tensor q = rand_uniform(rng, {o.n, o.d_k}, -2.0, 2.0);
        const Tensor k = rand_uniform(rng, {o.n, o.d_k}, -2.0, 2.0);
        const Tensor v = rand_uniform(rng, {o.n, o.d_v}, -2.0, 2.0);
        max_err = std::max(max_err, max_relative_difference(efficient_attention(q, k, v, norm),
                                                            dot_product_attention(q, k, v, norm)));
        if (norm == Normalization::Softmax) max_gap = std::max(max_gap, softmax_approximation_gap(q, k));
    }
    const bool scaling = norm == Normalization::Scaling;
    const bool pass = !scaling || max_err <= kEquivTolerance;

    Report r({"norm", "n", "d_k", "d_v", "trials", "seed", "max_rel_error", "attention_gap", "status"});
    r.add({std::string(to_string(norm)), std::to_string(o.n), std::to_string(o.d_k), std::to_string(o.d_v),
           std::to_string(o.trials), std::to_string(g.seed), sci(max_err), scaling ? "-" : sci(max_gap),
           scaling ? (pass ? "pass" : "FAIL") : "approximate"});
    r.print(out, g.output_format());
    return pass ? kExitOk : kExitFailure;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckOptions {
    std::size_t n = 8;
    std::size_t d_k = 4;
    std::size_t d_v = 4;
    std::string spatial = "3x3";
    std::size_t channels = 4;
    int instances = 10;
    double tolerance = 1e-5;
    double step = kDefaultFiniteDifferenceStep;
};

int cmd_gradcheck(const GlobalOptions& g, const GradcheckOptions& o, std::ostream& out) {
    const auto spatial = parse_size_list(o.spatial);
    if (spatial.size() != 1) throw UsageError("--spatial takes a single size such as 3x3");
    Rng rng(g.seed);
    Report r({"target", "mechanism", "norm", "parameter", "max_rel_error", "max_abs_error", "status"});
    bool all_pass = true;
    for (auto mech : {Mechanism::Efficient, Mechanism::DotProduct}) {
        for (auto norm : {Normalization::Scaling, Normalization::Softmax}) {
            GradCheckReport attention_report;
            attention_report.tolerance = o.tolerance;
            GradCheckReport module_report;
            module_report.tolerance = o.tolerance;
            for (int i = 0; i < o.instances; ++i) {
                QkvTriple qkv{rand_tensor(rng, {o.n, o.d_k}), rand_tensor(rng, {o.n, o.d_k}),
                              rand_tensor(rng, {o.n, o.d_v})};
                const Tensor upstream = rand_tensor(rng, {o.n, o.d_v});
                attention_report.merge(check_attention_gradients(mech, norm, qkv, upstream, o.tolerance, o.step));

                Shape full(spatial[0].spatial.begin(), spatial[0].spatial.end());
                full.push_back(o.channels);
                const FeatureMap x(rand_tensor(rng, full));
                const ModuleWeights w = init_weights(rng, o.channels, o.d_k, o.d_v);
                const FeatureMap up(rand_tensor(rng, full));
                const AttentionConfig cfg{o.d_k, o.d_v, norm, mech, true};
                module_report.merge(check_module_gradients(x, w, cfg, up, o.tolerance, o.step));
            }
            for (const auto* rep : {&attention_report, &module_report}) {
                all_pass = all_pass && rep->pass;
                for (const auto& p : rep->parameters) {
                    r.add({rep == &attention_report ? "attention" : "module", std::string(to_string(mech)),
                           std::string(to_string(norm)), p.name, sci(p.max_relative), sci(p.max_absolute),
                           p.max_relative <= o.tolerance ? "pass" : "FAIL"});
                }
            }
        }
    }
    r.print(out, g.output_format());
    return all_pass ? kExitOk : kExitFailure;
}

// ---- estimate --------------------------------------------------------------

struct EstimateOptions {
    std::optional<std::uint64_t> n;
    std::optional<std::string> spatial;
    std::optional<std::string> preset;
    std::optional<std::uint64_t> d;
    std::string mechanism = "both";
    std::size_t bytes_per_scalar = kCostModelBytesPerScalar;
};

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& p : placement_presets()) names.push_back(p.size.name);
    for (const auto& s : sweep_sizes()) names.push_back(s.name);
    names.push_back("placements");
    names.push_back("sweep");
    return names;
}

std::vector<SweepPoint> resolve_estimate_points(const EstimateOptions& o) {
    const int given = int(o.n.has_value()) + int(o.spatial.has_value()) + int(o.preset.has_value());
    if (given != 1) throw UsageError("give exactly one of --n, --spatial or --preset");
    if (o.n) return {{"n=" + std::to_string(*o.n), *o.n, o.d.value_or(64)}};
    if (o.spatial) {
        std::vector<SweepPoint> points;
        for (const auto& s : parse_size_list(*o.spatial)) points.push_back({s.name, s.n(), o.d.value_or(64)});
        return points;
    }
    const std::string& name = *o.preset;
    std::vector<SweepPoint> points;
    for (const auto& p : placement_presets(o.d.value_or(256))) {
        if (name == p.size.name || name == "placements") points.push_back({p.size.name, p.size.n(), p.d});
    }
    for (const auto& s : sweep_sizes()) {
        if (name == s.name || name == "sweep") points.push_back({s.name, s.n(), o.d.value_or(64)});
    }
    if (points.empty()) {
        std::string valid;
        for (const auto& v : preset_names()) valid += (valid.empty() ? "" : ", ") + v;
        throw UsageError("unknown preset '" + name + "'; valid presets: " + valid);
    }
    return points;
}

int cmd_estimate(const GlobalOptions& g, const EstimateOptions& o, std::ostream& out) {
    const auto points = resolve_estimate_points(o);
    std::vector<Mechanism> mechanisms;
    const bool both = o.mechanism == "both";
    if (both)
        mechanisms = {Mechanism::Efficient, Mechanism::DotProduct};
    else
        mechanisms = {parse_mechanism(o.mechanism)};

    const auto rows = sweep(points, mechanisms, o.bytes_per_scalar);
    std::vector<std::string> columns{"label", "n", "d", "mechanism", "memory_floats", "memory_bytes", "macc"};
    if (both) {
        columns.push_back("memory_ratio");
        columns.push_back("computation_ratio");
    }
    Report r(columns);
    for (const auto& row : rows) {
        std::vector<std::string> cells{row.label, std::to_string(row.n), std::to_string(row.d),
                                       std::string(to_string(row.mechanism)),
                                       std::to_string(row.estimate.memory_floats),
                                       std::to_string(row.estimate.memory_bytes), std::to_string(row.estimate.macc)};
        if (both) {
            const Comparison c = compare(row.n, row.d, o.bytes_per_scalar);
            cells.push_back(fixed(c.memory_ratio, 4));
            cells.push_back(fixed(c.computation_ratio, 4));
        }
        r.add(std::move(cells));
    }
    r.print(out, g.output_format());
    return kExitOk;
}

// ---- bench -----------------------------------------------------------------

struct BenchCliOptions {
    std::string sizes = "sweep";
    std::uint64_t d = 64;
    std::optional<std::uint64_t> d_k;
    std::optional<std::uint64_t> d_v;
    std::string norm = "softmax";
    std::string mechanism = "both";
    int repeats = 5;
    std::string output;
};

int cmd_bench(const GlobalOptions& g, const BenchCliOptions& o, std::ostream& out) {
    BenchOptions options;
    if (o.sizes != "sweep") options.sizes = parse_size_list(o.sizes);
    options.d = o.d;
    options.d_k = o.d_k;
    options.d_v = o.d_v;
    options.norm = parse_normalization(o.norm);
    if (o.mechanism != "both") options.mechanisms = {parse_mechanism(o.mechanism)};
    options.repeats = o.repeats;
    options.seed = g.seed;
    options.budget_bytes = g.budget_bytes.value_or(kDefaultBudgetBytes);

    std::ofstream file(o.output, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open " + o.output + " for writing");

    const auto records = run_bench(options);
    write_bench_csv(file, records);
    file.flush();
    if (!file) throw IoError("failed writing " + o.output);

    Report r({"size", "mechanism", "n", "wall_time_ms", "measured_macc", "measured_peak_floats", "status"});
    for (const auto& rec : records) {
        r.add({rec.label, std::string(to_string(rec.mechanism)), std::to_string(rec.n),
               rec.wall_time_ns ? fixed(static_cast<double>(*rec.wall_time_ns) / 1e6, 3) : "-",
               rec.measured_macc ? std::to_string(*rec.measured_macc) : "-",
               rec.measured_peak_floats ? std::to_string(*rec.measured_peak_floats) : "-",
               rec.oom ? "OOM" : "ok"});
    }
    r.print(out, g.output_format());
    return kExitOk;
}

// ---- maps ------------------------------------------------------------------

struct MapsOptions {
    std::optional<std::string> input;
    std::string spatial = "16x16";
    std::size_t channels = 8;
    std::optional<std::string> wk;
    std::optional<std::string> wv;
    std::size_t d_k = 4;
    std::optional<std::size_t> d_v;
    std::string norm = "softmax";
    std::string encoding = "f32";
    std::string output_dir;
};

std::string map_file_name(std::size_t j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "map_%03zu.tensor", j);
    return buf;
}

int cmd_maps(const GlobalOptions& g, const MapsOptions& o, std::ostream& out) {
    const Normalization norm = parse_normalization(o.norm);
    const Encoding encoding = parse_encoding(o.encoding);
    if (o.wk.has_value() != o.wv.has_value()) throw UsageError("--wk and --wv must be given together");
    Rng rng(g.seed);

    std::optional<FeatureMap> x;
    if (o.input) {
        Tensor t = read_tensor(std::filesystem::path(*o.input));
        if (t.rank() < 2) throw UsageError("input tensor must be spatial... x channels, got " + shape_to_string(t.shape()));
        x.emplace(std::move(t));
    } else {
        const auto sizes = parse_size_list(o.spatial);
        if (sizes.size() != 1) throw UsageError("--spatial takes a single size such as 16x16");
        Shape full(sizes[0].spatial.begin(), sizes[0].spatial.end());
        full.push_back(o.channels);
        x.emplace(rand_tensor(rng, full));
    }
    const std::size_t d = x->channels();

    std::optional<Tensor> wk, wv;
    if (o.wk) {
        wk = read_tensor(std::filesystem::path(*o.wk));
        wv = read_tensor(std::filesystem::path(*o.wv));
    } else {
        ModuleWeights w = init_weights(rng, d, o.d_k, o.d_v.value_or(d));
        wk = std::move(w.w_k);
        wv = std::move(w.w_v);
    }
    if (wk->rank() != 2 || wv->rank() != 2 || wk->rows() != d || wv->rows() != d) {
        throw UsageError("weights " + shape_to_string(wk->shape()) + " / " + shape_to_string(wv->shape()) +
                         " do not match input channels d = " + std::to_string(d));
    }

    const Tensor x_flat = flatten(*x);
    const Tensor keys = matmul(x_flat, *wk);
    const Tensor values = matmul(x_flat, *wv);
    const Tensor maps = template_attention_maps(keys, norm);
    const Tensor context = global_context(keys, values, norm);

    const std::filesystem::path dir(o.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    const Shape spatial = x->spatial();
    const std::size_t n = x->positions();
    Report r({"file", "shape", "sum"});
    for (std::size_t j = 0; j < maps.rows(); ++j) {
        std::vector<double> row(maps.data().begin() + static_cast<std::ptrdiff_t>(j * n),
                                maps.data().begin() + static_cast<std::ptrdiff_t>((j + 1) * n));
        const Tensor map(spatial, std::move(row));
        const auto name = map_file_name(j);
        write_tensor(dir / name, map, encoding);
        r.add({name, shape_to_string(map.shape()), fixed(sum(map), 9)});
    }
    write_tensor(dir / "global_context.tensor", context, encoding);
    r.add({"global_context.tensor", shape_to_string(context.shape()), fixed(sum(context), 9)});
    r.print(out, g.output_format());
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dot-product and efficient attention: equivalence, gradients, cost model, benchmarks",
                 "effattn"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--seed", g.seed, "Seed for every random draw")->capture_default_str();
    app.add_option("--format", g.format, "Report format")
        ->check(CLI::IsMember({"table", "csv"}))
        ->capture_default_str();
    app.add_option("--budget-bytes", g.budget_bytes, "Simulated memory cap in bytes (bench; default 12 GB)")
        ->check(CLI::PositiveNumber);

    EquivOptions eq;
    auto* equiv = app.add_subcommand("equiv", "Check efficient vs dot-product attention on random inputs");
    equiv->add_option("--n", eq.n, "Positions")->check(CLI::PositiveNumber)->capture_default_str();
    equiv->add_option("--d-k", eq.d_k, "Key/query width")->check(CLI::PositiveNumber)->capture_default_str();
    equiv->add_option("--d-v", eq.d_v, "Value width")->check(CLI::PositiveNumber)->capture_default_str();
    equiv->add_option("--trials", eq.trials, "Random instances")->check(CLI::PositiveNumber)->capture_default_str();
    equiv->add_option("--norm", eq.norm, "Normalization")
        ->check(CLI::IsMember({"scaling", "softmax"}))
        ->capture_default_str();

    GradcheckOptions gc;
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    gradcheck->add_option("--n", gc.n, "Positions for the mechanism checks")->check(CLI::PositiveNumber)->capture_default_str();
    gradcheck->add_option("--d-k", gc.d_k, "Key/query width")->check(CLI::PositiveNumber)->capture_default_str();
    gradcheck->add_option("--d-v", gc.d_v, "Value width")->check(CLI::PositiveNumber)->capture_default_str();
    gradcheck->add_option("--spatial", gc.spatial, "Feature map size for the module check")->capture_default_str();
    gradcheck->add_option("--channels", gc.channels, "Feature map channels")->check(CLI::PositiveNumber)->capture_default_str();
    gradcheck->add_option("--instances", gc.instances, "Random instances per combination")->check(CLI::PositiveNumber)->capture_default_str();
    gradcheck->add_option("--tolerance", gc.tolerance, "Max relative error")->check(CLI::PositiveNumber)->capture_default_str();
    gradcheck->add_option("--step", gc.step, "Finite-difference step h")->check(CLI::PositiveNumber)->capture_default_str();

    EstimateOptions es;
    auto* est = app.add_subcommand("estimate", "Analytical memory/MACC estimate");
    est->add_option("--n", es.n, "Input size (positions)")->check(CLI::PositiveNumber);
    est->add_option("--spatial", es.spatial, "Spatial extents, e.g. 64x64x32 (comma-separated list allowed)");
    est->add_option("--preset", es.preset, "Named size: res3, res4, fpn1..fpn5, 64x64, ..., placements, sweep");
    est->add_option("--d", es.d, "Channels (default 64; 256 for placement presets)");
    est->add_option("--mechanism", es.mechanism, "efficient, dot-product or both")
        ->check(CLI::IsMember({"efficient", "dot-product", "both"}))
        ->capture_default_str();
    est->add_option("--bytes-per-scalar", es.bytes_per_scalar, "Bytes per scalar for memory_bytes")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    BenchCliOptions bo;
    auto* bench = app.add_subcommand("bench", "Wall-clock and instrumented benchmark; writes CSV");
    bench->add_option("--sizes", bo.sizes, "sweep or a list such as 64x64,28x28x4")->capture_default_str();
    bench->add_option("--d", bo.d, "Channels")->check(CLI::PositiveNumber)->capture_default_str();
    bench->add_option("--d-k", bo.d_k, "Key width (default d/2)")->check(CLI::PositiveNumber);
    bench->add_option("--d-v", bo.d_v, "Value width (default d)")->check(CLI::PositiveNumber);
    bench->add_option("--norm", bo.norm, "Normalization")
        ->check(CLI::IsMember({"scaling", "softmax"}))
        ->capture_default_str();
    bench->add_option("--mechanism", bo.mechanism, "efficient, dot-product or both")
        ->check(CLI::IsMember({"efficient", "dot-product", "both"}))
        ->capture_default_str();
    bench->add_option("--repeats", bo.repeats, "Timed repeats (median; >= 3)")
        ->check(CLI::Range(3, 1000))
        ->capture_default_str();
    bench->add_option("--output,-o", bo.output, "CSV output path")->required();

    MapsOptions mo;
    auto* maps = app.add_subcommand("maps", "Export template attention maps and global context vectors");
    maps->add_option("--input", mo.input, "Input tensor file (spatial... x channels)");
    maps->add_option("--spatial", mo.spatial, "Random input size when --input is absent")->capture_default_str();
    maps->add_option("--channels", mo.channels, "Random input channels")->check(CLI::PositiveNumber)->capture_default_str();
    maps->add_option("--wk", mo.wk, "Key projection tensor file (d x d_k)");
    maps->add_option("--wv", mo.wv, "Value projection tensor file (d x d_v)");
    maps->add_option("--d-k", mo.d_k, "Key width for seeded weights")->check(CLI::PositiveNumber)->capture_default_str();
    maps->add_option("--d-v", mo.d_v, "Value width for seeded weights (default d)")->check(CLI::PositiveNumber);
    maps->add_option("--norm", mo.norm, "Normalization")
        ->check(CLI::IsMember({"scaling", "softmax"}))
        ->capture_default_str();
    maps->add_option("--encoding", mo.encoding, "Scalar encoding of written files")
        ->check(CLI::IsMember({"f32", "f64"}))
        ->capture_default_str();
    maps->add_option("--output-dir", mo.output_dir, "Directory for map files")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*equiv) return cmd_equiv(g, eq, out);
        if (*gradcheck) return cmd_gradcheck(g, gc, out);
        if (*est) return cmd_estimate(g, es, out);
        if (*bench) return cmd_bench(g, bo, out);
        if (*maps) return cmd_maps(g, mo, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const PreconditionError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DimensionError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace effattn::cli
