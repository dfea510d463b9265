#include "effattn/tensor_io.hpp"

#include "effattn/errors.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace effattn {

namespace {

constexpr std::size_t kMaxHeaderBytes = 1 << 16;

template <typename T>
void store_le(char* dst, T value) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits = std::bit_cast<U>(value);
    for (std::size_t b = 0; b < sizeof(U); ++b) dst[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
}

template <typename T>
T load_le(const char* src) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b)
        bits |= static_cast<U>(static_cast<unsigned char>(src[b])) << (8 * b);
    return std::bit_cast<T>(bits);
}

} // namespace

std::string_view to_string(Encoding e) noexcept { return e == Encoding::F32 ? "f32" : "f64"; }

std::size_t scalar_width(Encoding e) noexcept { return e == Encoding::F32 ? 4 : 8; }

Encoding parse_encoding(std::string_view text) {
    if (text == "f32") return Encoding::F32;
    if (text == "f64") return Encoding::F64;
    throw PreconditionError("unknown scalar encoding '" + std::string(text) + "' (expected f32 or f64)");
}

void write_tensor(std::ostream& out, const Tensor& t, Encoding encoding) {
    nlohmann::json header;
    header["dtype"] = to_string(encoding);
    header["shape"] = t.shape();
    out << header.dump() << '\n';

    const std::size_t width = scalar_width(encoding);
    std::vector<char> payload(t.size() * width);
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (encoding == Encoding::F32)
            store_le(payload.data() + i * width, static_cast<float>(data[i]));
        else
            store_le(payload.data() + i * width, data[i]);
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("failed to write tensor payload");
}

void write_tensor(const std::filesystem::path& path, const Tensor& t, Encoding encoding) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_tensor(out, t, encoding);
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_tensor(std::istream& in) {
    std::string line;
    for (;;) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) throw ParseError("header line is not terminated", line.size());
        if (c == '\n') break;
        line.push_back(static_cast<char>(c));
        if (line.size() > kMaxHeaderBytes) throw ParseError("header line too long", line.size());
    }

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed header: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
    }
    if (!header.is_object() || !header.contains("dtype") || !header.contains("shape") ||
        !header["dtype"].is_string() || !header["shape"].is_array()) {
        throw ParseError("header must be an object with string 'dtype' and array 'shape'", 0);
    }
    Encoding encoding;
    try {
        encoding = parse_encoding(header["dtype"].get<std::string>());
    } catch (const PreconditionError& e) {
        throw ParseError(e.what(), 0);
    }
    Shape shape;
    for (const auto& extent : header["shape"]) {
        if (!extent.is_number_unsigned() || extent.get<std::uint64_t>() == 0)
            throw ParseError("shape extents must be positive integers", 0);
        shape.push_back(extent.get<std::size_t>());
    }
    if (shape.empty()) throw ParseError("shape must have at least one extent", 0);

    const std::uint64_t header_bytes = line.size() + 1;
    std::size_t count = 1;
    for (auto e : shape) {
        if (__builtin_mul_overflow(count, e, &count)) throw ParseError("shape element count overflows", 0);
    }
    const std::size_t width = scalar_width(encoding);
    std::size_t expected = 0;
    if (__builtin_mul_overflow(count, width, &expected)) throw ParseError("payload size overflows", 0);

    std::vector<char> payload(expected);
    in.read(payload.data(), static_cast<std::streamsize>(expected));
    const auto got = static_cast<std::uint64_t>(in.gcount());
    if (got != expected) {
        throw ParseError("truncated payload: expected " + std::to_string(expected) + " bytes, found " +
                             std::to_string(got),
                         header_bytes + got);
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw ParseError("trailing bytes after payload", header_bytes + expected);

    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        data[i] = encoding == Encoding::F32 ? static_cast<double>(load_le<float>(payload.data() + i * width))
                                            : load_le<double>(payload.data() + i * width);
    }
    return Tensor(std::move(shape), std::move(data));
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_tensor(in);
}

} // namespace effattn
