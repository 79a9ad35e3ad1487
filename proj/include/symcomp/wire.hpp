#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "symcomp/common.hpp"

// Little-endian scalar I/O shared by the checkpoint and dataset writers.
// Byte-explicit so files are portable regardless of host endianness.

namespace symcomp::wire {

inline void write_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f32(std::ostream& os, double v) {
    float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool read_f64(std::istream& is, double& out) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) return false;
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    std::memcpy(&out, &bits, sizeof(out));
    return true;
}

inline bool read_f32(std::istream& is, double& out) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) return false;
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(b[i]) << (8 * i);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    out = static_cast<double>(f);
    return true;
}

}  // namespace symcomp::wire
