#include "effattn/attention.hpp"

#include "effattn/errors.hpp"
#include "effattn/instrument.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace effattn {

std::string_view to_string(Normalization norm) noexcept {
    return norm == Normalization::Scaling ? "scaling" : "softmax";
}

std::string_view to_string(Mechanism mech) noexcept {
    return mech == Mechanism::Efficient ? "efficient" : "dot-product";
}

Normalization parse_normalization(std::string_view text) {
    if (text == "scaling") return Normalization::Scaling;
    if (text == "softmax") return Normalization::Softmax;
    throw PreconditionError("unknown normalization '" + std::string(text) +
                            "' (expected scaling or softmax)");
}

Mechanism parse_mechanism(std::string_view text) {
    if (text == "efficient") return Mechanism::Efficient;
    if (text == "dot-product" || text == "dot_product" || text == "dotproduct" || text == "non-local")
        return Mechanism::DotProduct;
    throw PreconditionError("unknown mechanism '" + std::string(text) +
                            "' (expected efficient or dot-product)");
}

void validate_qkv(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
        throw DimensionError("Q, K, V must be rank 2, got " + shape_to_string(q.shape()) + ", " +
                             shape_to_string(k.shape()) + ", " + shape_to_string(v.shape()));
    }
    if (q.cols() != k.cols()) {
        throw DimensionError("queries and keys must share d_k: " + shape_to_string(q.shape()) +
                             " vs " + shape_to_string(k.shape()));
    }
    if (q.rows() != k.rows() || q.rows() != v.rows()) {
        throw DimensionError("Q, K, V must share n: " + shape_to_string(q.shape()) + ", " +
                             shape_to_string(k.shape()) + ", " + shape_to_string(v.shape()));
    }
}

namespace {

void validate_qk(const Tensor& q, const Tensor& k) {
    if (q.rank() != 2 || k.rank() != 2 || q.cols() != k.cols() || q.rows() != k.rows()) {
        throw DimensionError("Q and K must both be n x d_k: " + shape_to_string(q.shape()) + " vs " +
                             shape_to_string(k.shape()));
    }
}

void validate_kv(const Tensor& k, const Tensor& v) {
    if (k.rank() != 2 || v.rank() != 2 || k.rows() != v.rows()) {
        throw DimensionError("K and V must share n: " + shape_to_string(k.shape()) + " vs " +
                             shape_to_string(v.shape()));
    }
}

// rho applied to the n x n similarity matrix, in place.
Tensor normalize_similarity(Tensor&& s, Normalization norm) {
    if (norm == Normalization::Scaling) return divide(std::move(s), static_cast<double>(s.rows()));
    return softmax_rows(std::move(s));
}

void require_finite(const Tensor& a, const char* what) {
    for (double x : a.data())
        if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite input");
}

// Per-column softmax statistics of K: peak and reciprocal of the exp-sum.
struct ColumnStats {
    std::vector<double> peak;
    std::vector<double> inv_total;
};

ColumnStats key_column_stats(const Tensor& k) {
    const std::size_t n = k.rows(), dk = k.cols();
    ColumnStats s{std::vector<double>(dk), std::vector<double>(dk, 0.0)};
    for (std::size_t j = 0; j < dk; ++j) s.peak[j] = k(0, j);
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < dk; ++j) s.peak[j] = std::max(s.peak[j], k(i, j));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dk; ++j) s.inv_total[j] += std::exp(k(i, j) - s.peak[j]);
    for (auto& t : s.inv_total) t = 1.0 / t;
    return s;
}

// Normalized query row i written to `row`.
void query_row(const Tensor& q, std::size_t i, Normalization norm, double root_n, std::vector<double>& row) {
    const std::size_t dk = q.cols();
    const double* src = q.data().data() + i * dk;
    if (norm == Normalization::Scaling) {
        for (std::size_t j = 0; j < dk; ++j) row[j] = src[j] / root_n;
        return;
    }
    const double peak = *std::max_element(src, src + dk);
    double total = 0.0;
    for (std::size_t j = 0; j < dk; ++j) {
        row[j] = std::exp(src[j] - peak);
        total += row[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < dk; ++j) row[j] *= inv;
}

} // namespace

Tensor normalize_queries(const Tensor& q, Normalization norm) {
    if (norm == Normalization::Scaling) return divide(q, std::sqrt(static_cast<double>(q.rows())));
    return softmax_rows(q);
}

Tensor normalize_keys(const Tensor& k, Normalization norm) {
    if (norm == Normalization::Scaling) return divide(k, std::sqrt(static_cast<double>(k.rows())));
    return softmax_cols(k);
}

Tensor pairwise_similarity(const Tensor& q, const Tensor& k) {
    validate_qk(q, k);
    return matmul(q, transpose(k));
}

Tensor dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, Normalization norm) {
    validate_qkv(q, k, v);
    Tensor weights = normalize_similarity(pairwise_similarity(q, k), norm);
    return matmul(weights, v);
}

Tensor dot_product_attention(const QkvTriple& t, Normalization norm) {
    return dot_product_attention(t.q, t.k, t.v, norm);
}

Tensor efficient_attention(const Tensor& q, const Tensor& k, const Tensor& v, Normalization norm) {
    validate_qkv(q, k, v);
    if (norm == Normalization::Softmax) require_finite(q, "efficient_attention");
    const Tensor context = global_context(k, v, norm);
    const std::size_t n = q.rows(), dk = q.cols(), dv = v.cols();
    const double root_n = std::sqrt(static_cast<double>(n));
    // Each normalized query row is formed on the fly; only the context and
    // the output are held.
    Tensor out({n, dv});
    std::vector<double> row(dk);
    for (std::size_t i = 0; i < n; ++i) {
        query_row(q, i, norm, root_n, row);
        double* o = out.data().data() + i * dv;
        for (std::size_t j = 0; j < dk; ++j) {
            const double a = row[j];
            const double* c = context.data().data() + j * dv;
            for (std::size_t t = 0; t < dv; ++t) o[t] += a * c[t];
        }
    }
    detail::record_macc(static_cast<std::uint64_t>(n) * dk * dv);
    return out;
}

Tensor efficient_attention(const QkvTriple& t, Normalization norm) {
    return efficient_attention(t.q, t.k, t.v, norm);
}

Tensor attend(Mechanism mech, const Tensor& q, const Tensor& k, const Tensor& v, Normalization norm) {
    return mech == Mechanism::Efficient ? efficient_attention(q, k, v, norm)
                                        : dot_product_attention(q, k, v, norm);
}

Tensor effective_attention_matrix(const Tensor& q, const Tensor& k, Normalization norm, Mechanism mech) {
    validate_qk(q, k);
    if (mech == Mechanism::DotProduct) return normalize_similarity(pairwise_similarity(q, k), norm);
    return matmul(normalize_queries(q, norm), transpose(normalize_keys(k, norm)));
}

Tensor global_context(const Tensor& k, const Tensor& v, Normalization norm) {
    validate_kv(k, v);
    const std::size_t n = k.rows(), dk = k.cols(), dv = v.cols();
    Tensor context({dk, dv});
    double* g = context.data().data();
    auto accumulate = [&](auto weight) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* vi = v.data().data() + i * dv;
            for (std::size_t j = 0; j < dk; ++j) {
                const double a = weight(i, j);
                for (std::size_t t = 0; t < dv; ++t) g[j * dv + t] += a * vi[t];
            }
        }
    };
    if (norm == Normalization::Scaling) {
        const double root_n = std::sqrt(static_cast<double>(n));
        accumulate([&](std::size_t i, std::size_t j) { return k(i, j) / root_n; });
    } else {
        require_finite(k, "global_context");
        const ColumnStats s = key_column_stats(k);
        accumulate([&](std::size_t i, std::size_t j) { return std::exp(k(i, j) - s.peak[j]) * s.inv_total[j]; });
    }
    detail::record_macc(static_cast<std::uint64_t>(n) * dk * dv);
    return context;
}

Tensor template_attention_maps(const Tensor& k, Normalization norm) {
    if (k.rank() != 2) throw DimensionError("keys must be rank 2, got " + shape_to_string(k.shape()));
    return transpose(normalize_keys(k, norm));
}

double softmax_approximation_gap(const Tensor& q, const Tensor& k) {
    const Tensor exact = effective_attention_matrix(q, k, Normalization::Softmax, Mechanism::DotProduct);
    const Tensor factored = effective_attention_matrix(q, k, Normalization::Softmax, Mechanism::Efficient);
    return frobenius_norm(subtract(exact, factored));
}

} // namespace effattn
