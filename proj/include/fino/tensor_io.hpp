// Raw tensor dump ("FNT1"): little-endian header of magic, rank (u32),
// extents (u32 each) and a dtype byte (0 = f64, 1 = f32), then row-major data.
#ifndef FINO_TENSOR_IO_HPP
#define FINO_TENSOR_IO_HPP

#include "fino/tensor.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <type_traits>

namespace fino {

enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

template <typename Scalar>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<Scalar, double> || std::is_same_v<Scalar, float>, "unsupported element type");
    return std::is_same_v<Scalar, double> ? DType::f64 : DType::f32;
}

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void write_le(std::ostream& os, T v) {
    std::array<char, sizeof(T)> bytes{};
    std::memcpy(bytes.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    os.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
    std::array<char, sizeof(T)> bytes{};
    const auto at = static_cast<long long>(is.tellg());
    if (!is.read(bytes.data(), sizeof(T))) {
        throw std::runtime_error(std::string("tensor dump truncated while reading ") + what + " at byte " +
                                 std::to_string(at));
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    T v;
    std::memcpy(&v, bytes.data(), sizeof(T));
    return v;
}

}  // namespace detail

template <typename Scalar>
void write_tensor(std::ostream& os, const Tensor<Scalar>& t) {
    os.write("FNT1", 4);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (Index extent : t.shape()) {
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(extent));
    }
    detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype_of<Scalar>()));
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
    } else {
        for (Index i = 0; i < t.size(); ++i) detail::write_le<Scalar>(os, t.value()[i]);
    }
    if (!os) {
        throw std::runtime_error("failed writing tensor dump");
    }
}

/// Reads one dump; data stored in the other precision is converted.
template <typename Scalar>
Tensor<Scalar> read_tensor(std::istream& is) {
    char magic[4];
    const auto start = static_cast<long long>(is.tellg());
    if (!is.read(magic, 4) || std::memcmp(magic, "FNT1", 4) != 0) {
        throw std::runtime_error("bad tensor dump magic at byte " + std::to_string(start));
    }
    const auto rank = detail::read_le<std::uint32_t>(is, "rank");
    if (rank > 16) {
        throw std::runtime_error("implausible tensor rank " + std::to_string(rank) + " at byte " +
                                 std::to_string(start + 4));
    }
    Shape shape(rank);
    for (auto& extent : shape) {
        extent = detail::read_le<std::uint32_t>(is, "extent");
    }
    const auto dtype = detail::read_le<std::uint8_t>(is, "dtype");
    const Index n = numel(shape);
    Array<Scalar> values(n);
    auto read_as = [&](auto tag) {
        using Stored = decltype(tag);
        for (Index i = 0; i < n; ++i) {
            values[i] = static_cast<Scalar>(detail::read_le<Stored>(is, "data"));
        }
    };
    if (dtype == static_cast<std::uint8_t>(dtype_of<Scalar>()) && std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(Scalar)))) {
            throw std::runtime_error("tensor dump truncated in data block starting after byte " +
                                     std::to_string(start));
        }
    } else if (dtype == 0) {
        read_as(double{});
    } else if (dtype == 1) {
        read_as(float{});
    } else {
        throw std::runtime_error("unknown tensor dtype code " + std::to_string(dtype));
    }
    return Tensor<Scalar>(std::move(shape), std::move(values));
}

template <typename Scalar>
void save_tensor(const std::string& path, const Tensor<Scalar>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    write_tensor(os, t);
}

template <typename Scalar>
Tensor<Scalar> load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + path);
    }
    try {
        return read_tensor<Scalar>(is);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

}  // namespace fino

#endif  // FINO_TENSOR_IO_HPP
