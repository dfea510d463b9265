#include "effattn/gradient.hpp"

#include "effattn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace effattn {

namespace {

void validate_upstream(const Tensor& q, const Tensor& v, const Tensor& upstream) {
    if (upstream.rank() != 2 || upstream.rows() != q.rows() || upstream.cols() != v.cols()) {
        throw DimensionError("upstream gradient has shape " + shape_to_string(upstream.shape()) +
                             ", expected " + shape_to_string({q.rows(), v.cols()}));
    }
}

// Given y = softmax_rows(x) and dy, returns dx = y * (dy - rowsum(dy * y)).
Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy) {
    const std::size_t m = y.rows(), k = y.cols();
    Tensor dx({m, k});
    for (std::size_t i = 0; i < m; ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < k; ++j) inner += dy(i, j) * y(i, j);
        for (std::size_t j = 0; j < k; ++j) dx(i, j) = y(i, j) * (dy(i, j) - inner);
    }
    return dx;
}

Tensor softmax_cols_backward(const Tensor& y, const Tensor& dy) {
    const std::size_t m = y.rows(), k = y.cols();
    Tensor dx({m, k});
    for (std::size_t j = 0; j < k; ++j) {
        double inner = 0.0;
        for (std::size_t i = 0; i < m; ++i) inner += dy(i, j) * y(i, j);
        for (std::size_t i = 0; i < m; ++i) dx(i, j) = y(i, j) * (dy(i, j) - inner);
    }
    return dx;
}

} // namespace

AttentionGradients backward_dot_product(const Tensor& q, const Tensor& k, const Tensor& v,
                                        Normalization norm, const Tensor& upstream) {
    validate_qkv(q, k, v);
    validate_upstream(q, v, upstream);
    const Tensor weights = effective_attention_matrix(q, k, norm, Mechanism::DotProduct);
    Tensor dv = matmul(transpose(weights), upstream);
    Tensor d_weights = matmul(upstream, transpose(v));
    const Tensor d_similarity = norm == Normalization::Scaling
                                    ? divide(std::move(d_weights), static_cast<double>(q.rows()))
                                    : softmax_rows_backward(weights, d_weights);
    return {matmul(d_similarity, k), matmul(transpose(d_similarity), q), std::move(dv)};
}

AttentionGradients backward_efficient(const Tensor& q, const Tensor& k, const Tensor& v,
                                      Normalization norm, const Tensor& upstream) {
    validate_qkv(q, k, v);
    validate_upstream(q, v, upstream);
    const Tensor nq = normalize_queries(q, norm);
    const Tensor nk = normalize_keys(k, norm);
    const Tensor context = matmul(transpose(nk), v);  // d_k x d_v

    const Tensor d_nq = matmul(upstream, transpose(context));   // n x d_k
    const Tensor d_context = matmul(transpose(nq), upstream);   // d_k x d_v
    const Tensor d_nk = matmul(v, transpose(d_context));        // n x d_k
    Tensor dv = matmul(nk, d_context);                          // n x d_v

    if (norm == Normalization::Scaling) {
        const double root_n = std::sqrt(static_cast<double>(q.rows()));
        return {divide(d_nq, root_n), divide(d_nk, root_n), std::move(dv)};
    }
    return {softmax_rows_backward(nq, d_nq), softmax_cols_backward(nk, d_nk), std::move(dv)};
}

AttentionGradients backward_attention(Mechanism mech, const Tensor& q, const Tensor& k, const Tensor& v,
                                      Normalization norm, const Tensor& upstream) {
    return mech == Mechanism::Efficient ? backward_efficient(q, k, v, norm, upstream)
                                        : backward_dot_product(q, k, v, norm, upstream);
}

ModuleGradients backward_module(const FeatureMap& x, const ModuleWeights& w, const AttentionConfig& cfg,
                                const FeatureMap& upstream) {
    validate_module(x.channels(), w, cfg);
    if (upstream.tensor().shape() != x.tensor().shape()) {
        throw DimensionError("upstream gradient has shape " + shape_to_string(upstream.tensor().shape()) +
                             ", expected " + shape_to_string(x.tensor().shape()));
    }
    const Tensor x_flat = flatten(x);
    const Tensor u = flatten(upstream);
    const QkvTriple qkv = project(x_flat, w);

    std::optional<Tensor> dw_o;
    Tensor d_attended = u;
    if (w.w_o) {
        const Tensor attended = attend(cfg.mechanism, qkv.q, qkv.k, qkv.v, cfg.norm);
        dw_o = matmul(transpose(attended), u);
        d_attended = matmul(u, transpose(*w.w_o));
    }
    const AttentionGradients g = backward_attention(cfg.mechanism, qkv.q, qkv.k, qkv.v, cfg.norm, d_attended);

    const Tensor xt = transpose(x_flat);
    Tensor dx = add(u, matmul(g.dq, transpose(w.w_q)));
    dx = add(dx, matmul(g.dk, transpose(w.w_k)));
    dx = add(dx, matmul(g.dv, transpose(w.w_v)));
    return ModuleGradients{unflatten(std::move(dx), x.spatial()), matmul(xt, g.dq), matmul(xt, g.dk),
                           matmul(xt, g.dv), std::move(dw_o)};
}

Tensor finite_difference(const ScalarFunction& f, const Tensor& at, double h) {
    if (!(h > 0.0)) throw PreconditionError("finite_difference: step must be positive");
    Tensor grad(at.shape());
    Tensor probe(at);
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double original = probe[i];
        probe[i] = original + h;
        const double up = f(probe);
        probe[i] = original - h;
        const double down = f(probe);
        probe[i] = original;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

ErrorSummary gradient_error(const Tensor& analytic, const Tensor& numeric) {
    if (analytic.shape() != numeric.shape()) {
        throw DimensionError("gradient shapes differ: " + shape_to_string(analytic.shape()) + " vs " +
                             shape_to_string(numeric.shape()));
    }
    ErrorSummary s;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i], b = numeric[i];
        const double abs_err = std::abs(a - b);
        const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
        s.max_absolute = std::max(s.max_absolute, abs_err);
        s.max_relative = std::max(s.max_relative, abs_err / denom);
    }
    return s;
}

double GradCheckReport::max_relative() const noexcept {
    double m = 0.0;
    for (const auto& p : parameters) m = std::max(m, p.max_relative);
    return m;
}

void GradCheckReport::merge(const GradCheckReport& other) {
    for (const auto& incoming : other.parameters) {
        auto it = std::find_if(parameters.begin(), parameters.end(),
                               [&](const ParameterError& p) { return p.name == incoming.name; });
        if (it == parameters.end()) {
            parameters.push_back(incoming);
        } else {
            it->max_relative = std::max(it->max_relative, incoming.max_relative);
            it->max_absolute = std::max(it->max_absolute, incoming.max_absolute);
        }
    }
    pass = pass && other.pass;
}

namespace {

void record(GradCheckReport& report, std::string name, const Tensor& analytic, const Tensor& numeric) {
    const ErrorSummary s = gradient_error(analytic, numeric);
    report.parameters.push_back({std::move(name), s.max_relative, s.max_absolute});
    if (!(s.max_relative <= report.tolerance)) report.pass = false;
}

// Extended-precision re-implementation of the forward passes, used only as
// the function the checks difference. Rounding in a binary64 loss is about
// 1e-16 |L| / h in each difference quotient, which swamps gradients that are
// zero or nearly so.
using Ext = long double;

struct ExtMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<Ext> a;
    ExtMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0L) {}
    Ext& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    Ext operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

// Rank >= 2 tensors are viewed as (product of leading extents) x last extent.
ExtMatrix widen(const Tensor& t) {
    const std::size_t c = t.shape().back();
    ExtMatrix m(t.size() / c, c);
    for (std::size_t i = 0; i < t.size(); ++i) m.a[i] = t[i];
    return m;
}

ExtMatrix product(const ExtMatrix& x, const ExtMatrix& y, bool transpose_x = false, bool transpose_y = false) {
    const std::size_t m = transpose_x ? x.cols : x.rows, inner = transpose_x ? x.rows : x.cols;
    const std::size_t p = transpose_y ? y.rows : y.cols;
    ExtMatrix out(m, p);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < inner; ++t) {
            const Ext xv = transpose_x ? x(t, i) : x(i, t);
            for (std::size_t j = 0; j < p; ++j) out(i, j) += xv * (transpose_y ? y(j, t) : y(t, j));
        }
    return out;
}

void softmax(ExtMatrix& m, bool along_rows) {
    const std::size_t outer = along_rows ? m.rows : m.cols, len = along_rows ? m.cols : m.rows;
    auto at = [&](std::size_t o, std::size_t i) -> Ext& { return along_rows ? m(o, i) : m(i, o); };
    for (std::size_t o = 0; o < outer; ++o) {
        Ext peak = at(o, 0);
        for (std::size_t i = 1; i < len; ++i) peak = std::max(peak, at(o, i));
        Ext total = 0.0L;
        for (std::size_t i = 0; i < len; ++i) total += at(o, i) = std::exp(at(o, i) - peak);
        for (std::size_t i = 0; i < len; ++i) at(o, i) /= total;
    }
}

void divide_all(ExtMatrix& m, Ext c) {
    for (auto& x : m.a) x /= c;
}

ExtMatrix ext_attend(Mechanism mech, Normalization norm, ExtMatrix q, ExtMatrix k, const ExtMatrix& v) {
    const Ext n = static_cast<Ext>(q.rows);
    if (mech == Mechanism::DotProduct) {
        ExtMatrix s = product(q, k, false, true);
        if (norm == Normalization::Scaling) divide_all(s, n);
        else softmax(s, true);
        return product(s, v);
    }
    if (norm == Normalization::Scaling) {
        divide_all(q, std::sqrt(n));
        divide_all(k, std::sqrt(n));
    } else {
        softmax(q, true);
        softmax(k, false);
    }
    return product(q, product(k, v, true));
}

Ext inner(const ExtMatrix& x, const ExtMatrix& y) {
    Ext s = 0.0L;
    for (std::size_t i = 0; i < x.a.size(); ++i) s += x.a[i] * y.a[i];
    return s;
}

// Central differences of f around `at`, with the perturbed point and the
// quotient formed in extended precision.
Tensor ext_difference(const std::function<Ext(const ExtMatrix&)>& f, const Tensor& at, double h) {
    if (!(h > 0.0)) throw PreconditionError("finite_difference: step must be positive");
    ExtMatrix probe = widen(at);
    Tensor grad(at.shape());
    for (std::size_t i = 0; i < at.size(); ++i) {
        const Ext original = probe.a[i];
        probe.a[i] = original + h;
        const Ext up = f(probe);
        probe.a[i] = original - h;
        const Ext down = f(probe);
        probe.a[i] = original;
        grad[i] = static_cast<double>((up - down) / (2.0L * h));
    }
    return grad;
}

struct ExtModule {
    ExtMatrix x, w_q, w_k, w_v;
    std::optional<ExtMatrix> w_o;
};

Ext module_loss(const ExtModule& m, const ExtMatrix& upstream, const AttentionConfig& cfg) {
    ExtMatrix out = ext_attend(cfg.mechanism, cfg.norm, product(m.x, m.w_q), product(m.x, m.w_k), product(m.x, m.w_v));
    if (m.w_o) out = product(out, *m.w_o);
    return inner(upstream, m.x) + inner(upstream, out);
}

} // namespace

GradCheckReport check_attention_gradients(Mechanism mech, Normalization norm, const QkvTriple& qkv,
                                          const Tensor& upstream, double tolerance, double h) {
    GradCheckReport report;
    report.step = h;
    report.tolerance = tolerance;
    const AttentionGradients g = backward_attention(mech, qkv.q, qkv.k, qkv.v, norm, upstream);

    const ExtMatrix u = widen(upstream), q = widen(qkv.q), k = widen(qkv.k), v = widen(qkv.v);
    record(report, "Q", g.dq, ext_difference([&](const ExtMatrix& t) {
               return inner(u, ext_attend(mech, norm, t, k, v));
           }, qkv.q, h));
    record(report, "K", g.dk, ext_difference([&](const ExtMatrix& t) {
               return inner(u, ext_attend(mech, norm, q, t, v));
           }, qkv.k, h));
    record(report, "V", g.dv, ext_difference([&](const ExtMatrix& t) {
               return inner(u, ext_attend(mech, norm, q, k, t));
           }, qkv.v, h));
    return report;
}

GradCheckReport check_module_gradients(const FeatureMap& x, const ModuleWeights& w,
                                       const AttentionConfig& cfg, const FeatureMap& upstream,
                                       double tolerance, double h) {
    GradCheckReport report;
    report.step = h;
    report.tolerance = tolerance;
    const ModuleGradients g = backward_module(x, w, cfg, upstream);

    const ExtMatrix u = widen(upstream.tensor());
    const ExtModule base{widen(x.tensor()), widen(w.w_q), widen(w.w_k), widen(w.w_v),
                         w.w_o ? std::optional<ExtMatrix>(widen(*w.w_o)) : std::nullopt};
    auto check = [&](const char* name, const Tensor& analytic, const Tensor& at, auto set) {
        record(report, name, analytic, ext_difference([&](const ExtMatrix& t) {
                   ExtModule probe = base;
                   set(probe, t);
                   return module_loss(probe, u, cfg);
               }, at, h));
    };
    check("x", g.dx.tensor(), x.tensor(), [](ExtModule& m, const ExtMatrix& t) { m.x = t; });
    check("W_q", g.dw_q, w.w_q, [](ExtModule& m, const ExtMatrix& t) { m.w_q = t; });
    check("W_k", g.dw_k, w.w_k, [](ExtModule& m, const ExtMatrix& t) { m.w_k = t; });
    check("W_v", g.dw_v, w.w_v, [](ExtModule& m, const ExtMatrix& t) { m.w_v = t; });
    if (w.w_o) check("W_o", *g.dw_o, *w.w_o, [](ExtModule& m, const ExtMatrix& t) { m.w_o = t; });
    return report;
}

} // namespace effattn
