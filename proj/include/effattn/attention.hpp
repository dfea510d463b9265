#pragma once

#include "effattn/tensor.hpp"

#include <string_view>

namespace effattn {

enum class Normalization { Scaling, Softmax };
enum class Mechanism { Efficient, DotProduct };

std::string_view to_string(Normalization norm) noexcept;
std::string_view to_string(Mechanism mech) noexcept;
// Accepts "scaling" / "softmax"; throws PreconditionError otherwise.
Normalization parse_normalization(std::string_view text);
// Accepts "efficient" / "dot-product" (also "dot_product", "dotproduct", "non-local").
Mechanism parse_mechanism(std::string_view text);

// Queries, keys and values for n positions. Q and K are n x d_k, V is n x d_v.
struct QkvTriple {
    Tensor q;
    Tensor k;
    Tensor v;

    std::size_t n() const { return q.rows(); }
    std::size_t d_k() const { return q.cols(); }
    std::size_t d_v() const { return v.cols(); }
};

// Throws DimensionError unless Q, K, V are rank 2 with Q, K sharing d_k and
// all three sharing n.
void validate_qkv(const Tensor& q, const Tensor& k, const Tensor& v);

// rho(Q K^T) V. Scaling divides the n x n similarity matrix by n; Softmax
// normalizes each of its rows. Allocates O(n^2).
Tensor dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, Normalization norm);
Tensor dot_product_attention(const QkvTriple& t, Normalization norm);

// rho_q(Q) (rho_k(K)^T V). Scaling divides Q and K each by sqrt(n); Softmax
// normalizes Q along rows and K along columns. Never forms an n x n matrix.
Tensor efficient_attention(const Tensor& q, const Tensor& k, const Tensor& v, Normalization norm);
Tensor efficient_attention(const QkvTriple& t, Normalization norm);

Tensor attend(Mechanism mech, const Tensor& q, const Tensor& k, const Tensor& v, Normalization norm);

// The query/key normalizers of the efficient mechanism.
Tensor normalize_queries(const Tensor& q, Normalization norm);
Tensor normalize_keys(const Tensor& k, Normalization norm);

// S = Q K^T; S[i][j] = q_i . k_j.
Tensor pairwise_similarity(const Tensor& q, const Tensor& k);

// The implied n x n mixing matrix: output = M V. For Efficient this is
// rho_q(Q) rho_k(K)^T, for DotProduct rho(Q K^T). Quadratic in n; used by
// tests and diagnostics only.
Tensor effective_attention_matrix(const Tensor& q, const Tensor& k, Normalization norm,
                                  Mechanism mech = Mechanism::Efficient);

// rho_k(K)^T V, d_k x d_v. Row j is the global context vector g_j.
Tensor global_context(const Tensor& k, const Tensor& v, Normalization norm);

// rho_k(K)^T, d_k x n. Row j is template attention map j over all positions.
Tensor template_attention_maps(const Tensor& k, Normalization norm);

// Frobenius norm of softmax_rows(Q K^T) - softmax_rows(Q) softmax_cols(K)^T.
// Quadratic in n.
double softmax_approximation_gap(const Tensor& q, const Tensor& k);

} // namespace effattn
