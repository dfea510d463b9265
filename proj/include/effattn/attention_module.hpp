#pragma once

#include "effattn/attention.hpp"

#include <cstdint>
#include <optional>

namespace effattn {

// Feature map or volume with channels last: shape is spatial... x d.
// Spatial order is row-major (time-major for volumes).
class FeatureMap {
public:
    // `data` must have shape spatial... x channels with at least one spatial extent.
    explicit FeatureMap(Tensor data);
    FeatureMap(const Shape& spatial, std::size_t channels);

    Shape spatial() const;
    std::size_t channels() const noexcept { return data_.shape().back(); }
    std::size_t positions() const noexcept { return data_.size() / channels(); }

    const Tensor& tensor() const noexcept { return data_; }
    Tensor& tensor() noexcept { return data_; }

    friend bool operator==(const FeatureMap& a, const FeatureMap& b) noexcept {
        return a.data_ == b.data_;
    }

private:
    Tensor data_;
};

struct ModuleWeights {
    Tensor w_q;                // d x d_k
    Tensor w_k;                // d x d_k
    Tensor w_v;                // d x d_v
    std::optional<Tensor> w_o; // d_v x d, the 1x1 reprojection

    std::size_t d() const { return w_q.rows(); }
    std::size_t d_k() const { return w_q.cols(); }
    std::size_t d_v() const { return w_v.cols(); }
};

struct AttentionConfig {
    std::size_t d_k = 64;
    std::size_t d_v = 64;
    Normalization norm = Normalization::Softmax;
    Mechanism mechanism = Mechanism::Efficient;
    bool reproject = true;

    // Reprojection is mandatory whenever d_v differs from d.
    bool needs_reprojection(std::size_t d) const noexcept { return reproject || d_v != d; }
};

// Throws DimensionError if the weights do not match `d` and the config.
void validate_module(std::size_t d, const ModuleWeights& w, const AttentionConfig& cfg);

// n x d matrix; row i is the channel vector of position i.
Tensor flatten(const FeatureMap& x);
FeatureMap unflatten(Tensor flat, const Shape& spatial);

QkvTriple project(const Tensor& x_flat, const ModuleWeights& w);

// Default cap for simulated out-of-memory: 12 GB.
inline constexpr std::uint64_t kDefaultBudgetBytes = 12'000'000'000ULL;

// x + reshape(reproject(attend(project(flatten(x))))). With a budget, live
// scalars allocated during the call (binary64) may not exceed it, otherwise
// ResourceBudgetError is thrown before the offending buffer is allocated.
FeatureMap module_forward(const FeatureMap& x, const ModuleWeights& w, const AttentionConfig& cfg,
                          std::optional<std::uint64_t> budget_bytes = std::nullopt);

enum class InitScheme { Uniform, Normal };

// Uniform on +-1/sqrt(d) or normal(0, 1/d), for every projection matrix.
// W_o is created when reproject is set or d_v != d.
ModuleWeights init_weights(Rng& rng, std::size_t d, std::size_t d_k, std::size_t d_v,
                           InitScheme scheme = InitScheme::Uniform, bool reproject = true);

ModuleWeights zero_weights(std::size_t d, std::size_t d_k, std::size_t d_v, bool reproject = true);

} // namespace effattn
