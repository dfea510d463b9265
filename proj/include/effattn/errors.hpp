#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace effattn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not conform (matmul inner extents, Q/K/V extents, weights).
class DimensionError : public Error {
public:
    using Error::Error;
};

// Invalid shape or rank for the requested operation.
class ShapeError : public DimensionError {
public:
    using DimensionError::DimensionError;
};

// Non-finite input or a zero divisor.
class NumericError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// An instrumented allocation would push live scalars past the caller's byte cap.
class ResourceBudgetError : public Error {
public:
    ResourceBudgetError(const std::string& what, std::uint64_t requested_bytes,
                        std::uint64_t budget_bytes)
        : Error(what), requested_bytes_(requested_bytes), budget_bytes_(budget_bytes) {}

    std::uint64_t requested_bytes() const noexcept { return requested_bytes_; }
    std::uint64_t budget_bytes() const noexcept { return budget_bytes_; }

private:
    std::uint64_t requested_bytes_;
    std::uint64_t budget_bytes_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace effattn
