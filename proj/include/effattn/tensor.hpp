#pragma once

#include "effattn/instrument.hpp"
#include "effattn/rng.hpp"

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace effattn {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
// Product of extents; throws ShapeError on an empty shape or a zero extent.
std::size_t checked_element_count(const Shape& shape);

// Dense row-major binary64 array. Every construction of a buffer (including
// copies) is reported to the active InstrumentScope, if any.
class Tensor {
public:
    // Zero-filled.
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    // Rank-2 literal, mostly for tests: Tensor::matrix({{1, 2}, {3, 4}}).
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);
    static Tensor filled(Shape shape, double value);

    Tensor(const Tensor& other);
    Tensor& operator=(const Tensor& other);
    Tensor(Tensor&&) noexcept = default;
    Tensor& operator=(Tensor&&) noexcept = default;
    ~Tensor() = default;

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    // Rank-2 extents; throw ShapeError for other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
    double operator[](std::size_t flat) const noexcept { return data_[flat]; }
    double& operator[](std::size_t flat) noexcept { return data_[flat]; }

    // Same data, new shape with equal element count. The rvalue overload
    // keeps the buffer (no new allocation is recorded).
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    friend bool operator==(const Tensor& a, const Tensor& b) noexcept {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    // Declared before data_ so a budget violation throws before the buffer is allocated.
    detail::AllocToken token_;
    std::vector<double> data_;
};

enum class Distribution { Uniform, Normal };

// Uniform draws on [-1, 1] scaled by `param`, or normal(0, param).
Tensor rand_tensor(Rng& rng, const Shape& shape, Distribution dist = Distribution::Uniform,
                   double param = 1.0);
Tensor rand_uniform(Rng& rng, const Shape& shape, double lo, double hi);

// c = a * b for rank-2 operands. Records m*k*p MACCs when instrumented.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Max-shifted softmax along each row / column. Throws NumericError on
// non-finite input. The rvalue overloads normalize in place.
Tensor softmax_rows(const Tensor& a);
Tensor softmax_rows(Tensor&& a);
Tensor softmax_cols(const Tensor& a);
Tensor softmax_cols(Tensor&& a);

Tensor scale(const Tensor& a, double c);
Tensor scale(Tensor&& a, double c);
// a / c; throws NumericError when c is zero or non-finite.
Tensor divide(const Tensor& a, double c);
Tensor divide(Tensor&& a, double c);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);

double max_abs(const Tensor& a) noexcept;
double max_abs_difference(const Tensor& a, const Tensor& b);
// max |a - b| over the larger of max |a| and max |b|; 0 when both are zero.
double max_relative_difference(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& a) noexcept;
double sum(const Tensor& a) noexcept;
// Elementwise inner product <a, b>.
double dot(const Tensor& a, const Tensor& b);

} // namespace effattn
