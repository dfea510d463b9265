#include "effattn/tensor.hpp"

#include "effattn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace effattn {

std::string shape_to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t checked_element_count(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
    std::size_t count = 1;
    for (auto extent : shape) {
        if (extent == 0) throw ShapeError("zero extent in shape " + shape_to_string(shape));
        count *= extent;
    }
    return count;
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      token_(checked_element_count(shape_)),
      data_(checked_element_count(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), token_(checked_element_count(shape_)), data_(std::move(data)) {
    if (data_.size() != checked_element_count(shape_)) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
    }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t k = m ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(m * k);
    for (const auto& row : rows) {
        if (row.size() != k) throw ShapeError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({m, k}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

Tensor Tensor::filled(Shape shape, double value) {
    Tensor out(std::move(shape));
    std::fill(out.data_.begin(), out.data_.end(), value);
    return out;
}

Tensor::Tensor(const Tensor& other) : shape_(other.shape_), token_(other.data_.size()), data_(other.data_) {}

Tensor& Tensor::operator=(const Tensor& other) {
    if (this != &other) {
        Tensor copy(other);
        *this = std::move(copy);
    }
    return *this;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("expected a rank-2 tensor, got " + shape_to_string(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("expected a rank-2 tensor, got " + shape_to_string(shape_));
    return shape_[1];
}

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor copy(*this);
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    if (checked_element_count(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
}

Tensor rand_tensor(Rng& rng, const Shape& shape, Distribution dist, double param) {
    Tensor out(shape);
    auto data = out.data();
    if (dist == Distribution::Uniform) {
        for (auto& x : data) x = rng.uniform(-param, param);
    } else {
        for (auto& x : data) x = rng.normal(0.0, param);
    }
    return out;
}

Tensor rand_uniform(Rng& rng, const Shape& shape, double lo, double hi) {
    Tensor out(shape);
    for (auto& x : out.data()) x = rng.uniform(lo, hi);
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw DimensionError("matmul shape mismatch: " + shape_to_string(a.shape()) + " x " +
                             shape_to_string(b.shape()));
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
    Tensor c({m, p});
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* cd = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = cd + i * p;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = ad[i * k + t];
            const double* brow = bd + t * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
    detail::record_macc(static_cast<std::uint64_t>(m) * k * p);
    return c;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_to_string(a.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    Tensor out({k, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) out(j, i) = a(i, j);
    return out;
}

namespace {

void require_rank2(const Tensor& a, const char* op) {
    if (a.rank() != 2) {
        throw ShapeError(std::string(op) + " expects rank 2, got " + shape_to_string(a.shape()));
    }
}

void require_finite(const Tensor& a, const char* op) {
    for (double x : a.data()) {
        if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
    }
}

// Softmax over `count` elements spaced `stride` apart starting at `first`.
void softmax_strided(double* first, std::size_t count, std::size_t stride) {
    double peak = first[0];
    for (std::size_t i = 1; i < count; ++i) peak = std::max(peak, first[i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        double& x = first[i * stride];
        x = std::exp(x - peak);
        total += x;
    }
    const double inv = 1.0 / total;
    for (std::size_t i = 0; i < count; ++i) first[i * stride] *= inv;
}

} // namespace

Tensor softmax_rows(Tensor&& a) {
    require_rank2(a, "softmax_rows");
    require_finite(a, "softmax_rows");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    double* d = a.data().data();
    for (std::size_t i = 0; i < m; ++i) softmax_strided(d + i * k, k, 1);
    return std::move(a);
}

Tensor softmax_rows(const Tensor& a) { return softmax_rows(Tensor(a)); }

Tensor softmax_cols(Tensor&& a) {
    require_rank2(a, "softmax_cols");
    require_finite(a, "softmax_cols");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    double* d = a.data().data();
    for (std::size_t j = 0; j < k; ++j) softmax_strided(d + j, m, k);
    return std::move(a);
}

Tensor softmax_cols(const Tensor& a) { return softmax_cols(Tensor(a)); }

Tensor scale(Tensor&& a, double c) {
    if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
    for (auto& x : a.data()) x *= c;
    return std::move(a);
}

Tensor scale(const Tensor& a, double c) { return scale(Tensor(a), c); }

Tensor divide(Tensor&& a, double c) {
    if (c == 0.0 || !std::isfinite(c)) throw NumericError("divide: zero or non-finite divisor");
    for (auto& x : a.data()) x /= c;
    return std::move(a);
}

Tensor divide(const Tensor& a, double c) { return divide(Tensor(a), c); }

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + " shape mismatch: " + shape_to_string(a.shape()) +
                             " vs " + shape_to_string(b.shape()));
    }
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a);
    auto od = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
    return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "subtract");
    Tensor out(a);
    auto od = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
    return out;
}

double max_abs(const Tensor& a) noexcept {
    double m = 0.0;
    for (double x : a.data()) m = std::max(m, std::abs(x));
    return m;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_difference");
    double m = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) m = std::max(m, std::abs(ad[i] - bd[i]));
    return m;
}

double max_relative_difference(const Tensor& a, const Tensor& b) {
    const double diff = max_abs_difference(a, b);
    const double magnitude = std::max(max_abs(a), max_abs(b));
    if (magnitude == 0.0) return 0.0;
    return diff / magnitude;
}

double frobenius_norm(const Tensor& a) noexcept {
    double s = 0.0;
    for (double x : a.data()) s += x * x;
    return std::sqrt(s);
}

double sum(const Tensor& a) noexcept {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return s;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) s += ad[i] * bd[i];
    return s;
}

} // namespace effattn
