#pragma once

#include "effattn/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <string_view>

namespace effattn {

// Tensor file layout: one header line of JSON terminated by '\n',
//   {"dtype":"f64","shape":[2,3]}
// followed by product(shape) little-endian scalars in row-major order.
enum class Encoding { F32, F64 };

std::string_view to_string(Encoding e) noexcept;
std::size_t scalar_width(Encoding e) noexcept;
Encoding parse_encoding(std::string_view text);

// f32 output rounds each value to nearest-even.
void write_tensor(std::ostream& out, const Tensor& t, Encoding encoding);
void write_tensor(const std::filesystem::path& path, const Tensor& t, Encoding encoding);

// Throws ParseError (with the failing byte offset) on a malformed header,
// truncated payload or trailing bytes.
Tensor read_tensor(std::istream& in);
Tensor read_tensor(const std::filesystem::path& path);

} // namespace effattn
