#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string_view>

#include "hmdcap/error.hpp"

// Little-endian primitives shared by the basis and network weight files.
namespace hmdcap::binary {

template <typename T>
T to_little_endian(T value)
{
    if constexpr (std::endian::native == std::endian::little) {
        return value;
    } else {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        }
        std::memcpy(&value, bytes, sizeof(T));
        return value;
    }
}

template <typename T>
void write(std::ostream& out, T value)
{
    value = to_little_endian(value);
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read(std::istream& in)
{
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw DataError("unexpected end of binary stream");
    }
    return to_little_endian(value);
}

inline void write_reals(std::ostream& out, std::span<const double> values)
{
    for (double v : values) {
        write(out, v);
    }
}

inline void read_reals(std::istream& in, std::span<double> values)
{
    for (double& v : values) {
        v = read<double>(in);
    }
}

inline void write_magic(std::ostream& out, std::string_view magic)
{
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic)
{
    char buffer[8] = {};
    in.read(buffer, static_cast<std::streamsize>(magic.size()));
    if (!in || std::string_view(buffer, magic.size()) != magic) {
        throw DataError("bad magic, expected \"" + std::string(magic) + "\"");
    }
}

} // namespace hmdcap::binary
