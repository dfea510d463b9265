#pragma once

#include "effattn/attention_module.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace effattn {

// Gradients of L = <upstream, attention(Q, K, V)>.
struct AttentionGradients {
    Tensor dq;
    Tensor dk;
    Tensor dv;
};

struct ModuleGradients {
    FeatureMap dx;
    Tensor dw_q;
    Tensor dw_k;
    Tensor dw_v;
    std::optional<Tensor> dw_o;
};

AttentionGradients backward_dot_product(const Tensor& q, const Tensor& k, const Tensor& v,
                                        Normalization norm, const Tensor& upstream);

// Closed-form backward of rho_q(Q)(rho_k(K)^T V). Intermediates are at most
// n x max(d_k, d_v) or d_k x d_v; no n x n buffer is formed.
AttentionGradients backward_efficient(const Tensor& q, const Tensor& k, const Tensor& v,
                                      Normalization norm, const Tensor& upstream);

AttentionGradients backward_attention(Mechanism mech, const Tensor& q, const Tensor& k, const Tensor& v,
                                      Normalization norm, const Tensor& upstream);

// Gradients of L = <upstream, module_forward(x)>. The residual path adds
// upstream to dx unchanged.
ModuleGradients backward_module(const FeatureMap& x, const ModuleWeights& w, const AttentionConfig& cfg,
                                const FeatureMap& upstream);

inline constexpr double kDefaultFiniteDifferenceStep = 1e-5;

using ScalarFunction = std::function<double(const Tensor&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
// Throws PreconditionError unless h > 0.
Tensor finite_difference(const ScalarFunction& f, const Tensor& at,
                         double h = kDefaultFiniteDifferenceStep);

// |a - b| / max(|a|, |b|, 1e-8), elementwise.
struct ErrorSummary {
    double max_relative = 0.0;
    double max_absolute = 0.0;
};
ErrorSummary gradient_error(const Tensor& analytic, const Tensor& numeric);

struct ParameterError {
    std::string name;
    double max_relative = 0.0;
    double max_absolute = 0.0;
};

struct GradCheckReport {
    std::vector<ParameterError> parameters;
    double step = kDefaultFiniteDifferenceStep;
    double tolerance = 1e-5;
    bool pass = true;

    double max_relative() const noexcept;
    // Folds another report's parameters into this one by name, keeping maxima.
    void merge(const GradCheckReport& other);
};

GradCheckReport check_attention_gradients(Mechanism mech, Normalization norm, const QkvTriple& qkv,
                                          const Tensor& upstream, double tolerance,
                                          double h = kDefaultFiniteDifferenceStep);

GradCheckReport check_module_gradients(const FeatureMap& x, const ModuleWeights& w,
                                       const AttentionConfig& cfg, const FeatureMap& upstream,
                                       double tolerance, double h = kDefaultFiniteDifferenceStep);

} // namespace effattn
