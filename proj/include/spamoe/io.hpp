#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "spamoe/common.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

// Binary tensor file: 8-byte magic "SPAMOE01", u8 rank, rank u32 little-endian
// dims, then the row-major f64 payload. Host is assumed little-endian.

namespace iodetail {

inline constexpr char kMagic[8] = {'S', 'P', 'A', 'M', 'O', 'E', '0', '1'};

inline void write_u32(std::ostream& os, std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                          static_cast<unsigned char>((x >> 8) & 0xff),
                          static_cast<unsigned char>((x >> 16) & 0xff),
                          static_cast<unsigned char>((x >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_header(std::ostream& os, const std::vector<std::uint32_t>& dims) {
    os.write(kMagic, 8);
    unsigned char rank = static_cast<unsigned char>(dims.size());
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (auto d : dims) write_u32(os, d);
}

inline std::vector<std::uint32_t> read_header(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError(path + ": not a SPAMOE01 tensor file");
    unsigned char rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 1);
    if (!is || rank == 0 || rank > 4) throw IoError(path + ": bad tensor rank");
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) {
        d = read_u32(is);
        if (!is || d == 0) throw IoError(path + ": bad tensor dims");
    }
    return dims;
}

inline void write_payload(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void read_payload(std::istream& is, std::vector<double>& v, const std::string& path) {
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!is) throw IoError(path + ": truncated payload");
}

}  // namespace iodetail

inline void save_tensor(const Field2D& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(path + ": cannot open for writing");
    iodetail::write_header(os, {static_cast<std::uint32_t>(f.h), static_cast<std::uint32_t>(f.w)});
    iodetail::write_payload(os, f.v);
    if (!os) throw IoError(path + ": write failed");
}

inline void save_tensor(const LatentTensor& t, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(path + ": cannot open for writing");
    iodetail::write_header(os, {static_cast<std::uint32_t>(t.c), static_cast<std::uint32_t>(t.h),
                                static_cast<std::uint32_t>(t.w)});
    iodetail::write_payload(os, t.v);
    if (!os) throw IoError(path + ": write failed");
}

inline void save_tensor(const Observation& o, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(path + ": cannot open for writing");
    iodetail::write_header(os, {static_cast<std::uint32_t>(o.shots),
                                static_cast<std::uint32_t>(o.steps),
                                static_cast<std::uint32_t>(o.receivers)});
    iodetail::write_payload(os, o.v);
    if (!os) throw IoError(path + ": write failed");
}

inline Field2D load_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path + ": cannot open");
    auto dims = iodetail::read_header(is, path);
    if (dims.size() != 2) throw IoError(path + ": expected a rank-2 tensor");
    Field2D f(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
    iodetail::read_payload(is, f.v, path);
    return f;
}

inline LatentTensor load_latent(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path + ": cannot open");
    auto dims = iodetail::read_header(is, path);
    if (dims.size() == 2) {
        LatentTensor t(1, static_cast<int>(dims[0]), static_cast<int>(dims[1]));
        iodetail::read_payload(is, t.v, path);
        return t;
    }
    if (dims.size() != 3) throw IoError(path + ": expected a rank-2 or rank-3 tensor");
    LatentTensor t(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                   static_cast<int>(dims[2]));
    iodetail::read_payload(is, t.v, path);
    return t;
}

inline Observation load_observation(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path + ": cannot open");
    auto dims = iodetail::read_header(is, path);
    if (dims.size() != 3) throw IoError(path + ": expected a rank-3 tensor");
    Observation o(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                  static_cast<int>(dims[2]));
    iodetail::read_payload(is, o.v, path);
    return o;
}

inline void save_csv(const Field2D& f, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError(path + ": cannot open for writing");
    os.precision(17);
    for (int i = 0; i < f.h; ++i) {
        for (int j = 0; j < f.w; ++j) {
            if (j) os << ',';
            os << f.at(i, j);
        }
        os << '\n';
    }
    if (!os) throw IoError(path + ": write failed");
}

/// 16-bit binary PGM (P5, maxval 65535, big-endian samples), min-max scaled.
inline void save_pgm16(const Field2D& f, const std::string& path) {
    double lo = f.v[0], hi = f.v[0];
    for (double x : f.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    double range = hi - lo;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(path + ": cannot open for writing");
    os << "P5\n" << f.w << " " << f.h << "\n65535\n";
    for (double x : f.v) {
        double t = range > 0 ? (x - lo) / range : 0.0;
        auto q = static_cast<std::uint16_t>(t * 65535.0 + 0.5);
        unsigned char b[2] = {static_cast<unsigned char>(q >> 8),
                              static_cast<unsigned char>(q & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!os) throw IoError(path + ": write failed");
}

}  // namespace spamoe
