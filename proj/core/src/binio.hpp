#pragma once

// little-endian scalar IO shared by the MOLIMG/MOLMSK/MOLNET writers
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "mol/errors.hpp"

namespace mol::binio {

constexpr std::size_t kFrameBytes = 16;

inline std::array<char, kFrameBytes> make_frame(const char* magic) {
    std::array<char, kFrameBytes> frame{};
    frame.fill('\0');
    std::strncpy(frame.data(), magic, kFrameBytes - 1);
    return frame;
}

inline void put_u32(std::ofstream& out, std::uint32_t v) {
    std::array<unsigned char, 4> b{static_cast<unsigned char>(v & 0xff),
                                   static_cast<unsigned char>((v >> 8) & 0xff),
                                   static_cast<unsigned char>((v >> 16) & 0xff),
                                   static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b.data()), 4);
}

inline std::uint32_t get_u32(std::ifstream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    std::array<unsigned char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b.data()), 8);
}

inline double get_f64(std::ifstream& in) {
    std::array<unsigned char, 8> b{};
    in.read(reinterpret_cast<char*>(b.data()), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline std::array<char, kFrameBytes> read_frame(std::ifstream& in, const std::string& path) {
    std::array<char, kFrameBytes> frame{};
    in.read(frame.data(), kFrameBytes);
    if (!in) throw IoError("truncated header in " + path);
    return frame;
}

}  // namespace mol::binio
