#include "effattn/attention_module.hpp"

#include "effattn/errors.hpp"

#include <cmath>
#include <utility>

namespace effattn {

FeatureMap::FeatureMap(Tensor data) : data_(std::move(data)) {
    if (data_.rank() < 2) {
        throw ShapeError("feature map needs spatial extents plus a channel axis, got " +
                         shape_to_string(data_.shape()));
    }
}

FeatureMap::FeatureMap(const Shape& spatial, std::size_t channels)
    : FeatureMap([&] {
          Shape full = spatial;
          full.push_back(channels);
          return Tensor(std::move(full));
      }()) {}

Shape FeatureMap::spatial() const {
    const Shape& full = data_.shape();
    return Shape(full.begin(), full.end() - 1);
}

Tensor flatten(const FeatureMap& x) { return x.tensor().reshaped({x.positions(), x.channels()}); }

FeatureMap unflatten(Tensor flat, const Shape& spatial) {
    const std::size_t d = flat.cols();
    Shape full = spatial;
    full.push_back(d);
    if (checked_element_count(full) != flat.size()) {
        throw DimensionError("cannot unflatten " + shape_to_string(flat.shape()) + " to spatial " +
                             shape_to_string(spatial));
    }
    return FeatureMap(std::move(flat).reshaped(std::move(full)));
}

void validate_module(std::size_t d, const ModuleWeights& w, const AttentionConfig& cfg) {
    auto expect = [](const Tensor& t, std::size_t r, std::size_t c, const char* name) {
        if (t.rank() != 2 || t.rows() != r || t.cols() != c) {
            throw DimensionError(std::string(name) + " has shape " + shape_to_string(t.shape()) +
                                 ", expected " + shape_to_string({r, c}));
        }
    };
    expect(w.w_q, d, cfg.d_k, "W_q");
    expect(w.w_k, d, cfg.d_k, "W_k");
    expect(w.w_v, d, cfg.d_v, "W_v");
    if (cfg.needs_reprojection(d)) {
        if (!w.w_o) throw DimensionError("reprojection requested but W_o is missing");
        expect(*w.w_o, cfg.d_v, d, "W_o");
    } else if (w.w_o) {
        throw DimensionError("W_o given but reprojection is disabled and d_v == d");
    }
}

QkvTriple project(const Tensor& x_flat, const ModuleWeights& w) {
    return QkvTriple{matmul(x_flat, w.w_q), matmul(x_flat, w.w_k), matmul(x_flat, w.w_v)};
}

namespace {

Tensor attention_branch(const Tensor& x_flat, const ModuleWeights& w, const AttentionConfig& cfg) {
    Tensor attended = [&] {
        const QkvTriple qkv = project(x_flat, w);
        return attend(cfg.mechanism, qkv.q, qkv.k, qkv.v, cfg.norm);
    }();
    if (w.w_o) attended = matmul(attended, *w.w_o);
    return attended;
}

FeatureMap forward_unbudgeted(const FeatureMap& x, const ModuleWeights& w, const AttentionConfig& cfg) {
    validate_module(x.channels(), w, cfg);
    const Tensor x_flat = flatten(x);
    return unflatten(add(x_flat, attention_branch(x_flat, w, cfg)), x.spatial());
}

} // namespace

FeatureMap module_forward(const FeatureMap& x, const ModuleWeights& w, const AttentionConfig& cfg,
                          std::optional<std::uint64_t> budget_bytes) {
    if (!budget_bytes) return forward_unbudgeted(x, w, cfg);
    InstrumentScope scope(budget_bytes, sizeof(double));
    return forward_unbudgeted(x, w, cfg);
}

ModuleWeights init_weights(Rng& rng, std::size_t d, std::size_t d_k, std::size_t d_v, InitScheme scheme,
                           bool reproject) {
    if (d == 0 || d_k == 0 || d_v == 0) throw PreconditionError("init_weights: dimensions must be positive");
    const double fan = static_cast<double>(d);
    auto draw = [&](Shape shape) {
        return scheme == InitScheme::Uniform
                   ? rand_tensor(rng, shape, Distribution::Uniform, 1.0 / std::sqrt(fan))
                   : rand_tensor(rng, shape, Distribution::Normal, std::sqrt(1.0 / fan));
    };
    ModuleWeights w{draw({d, d_k}), draw({d, d_k}), draw({d, d_v}), std::nullopt};
    if (reproject || d_v != d) w.w_o = draw({d_v, d});
    return w;
}

ModuleWeights zero_weights(std::size_t d, std::size_t d_k, std::size_t d_v, bool reproject) {
    ModuleWeights w{Tensor({d, d_k}), Tensor({d, d_k}), Tensor({d, d_v}), std::nullopt};
    if (reproject || d_v != d) w.w_o = Tensor({d_v, d});
    return w;
}

} // namespace effattn
