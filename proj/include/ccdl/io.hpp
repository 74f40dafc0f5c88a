#pragma once

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ccdl/common.hpp"

namespace ccdl::io {

namespace fs = std::filesystem;

// -------- little-endian binary stream helpers --------

inline void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_i32(std::ostream& os, int32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_f32(std::ostream& os, float v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void put_floats(std::ostream& os, const std::vector<float>& v) {
    put_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
}

inline uint32_t get_u32(std::istream& is) {
    uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    check(bool(is), "binary read failed (u32)");
    return v;
}
inline uint64_t get_u64(std::istream& is) {
    uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    check(bool(is), "binary read failed (u64)");
    return v;
}
inline int32_t get_i32(std::istream& is) {
    int32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    check(bool(is), "binary read failed (i32)");
    return v;
}
inline float get_f32(std::istream& is) {
    float v;
    is.read(reinterpret_cast<char*>(&v), 4);
    check(bool(is), "binary read failed (f32)");
    return v;
}
inline std::string get_str(std::istream& is) {
    const uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    check(bool(is), "binary read failed (str)");
    return s;
}
inline std::vector<float> get_floats(std::istream& is) {
    const uint64_t n = get_u64(is);
    std::vector<float> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 4));
    check(bool(is), "binary read failed (floats)");
    return v;
}

// -------- gzip --------

// Reads a whole file, transparently inflating gzip if present.
inline std::vector<uint8_t> read_maybe_gz(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    check(f != nullptr, "cannot open " + path);
    std::vector<uint8_t> out;
    uint8_t buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
    gzclose(f);
    check(n == 0, "gzread failed for " + path);
    return out;
}

// -------- misc text --------

inline void write_text(const std::string& path, const std::string& content) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream os(path, std::ios::binary);
    check(bool(os), "cannot write " + path);
    os << content;
}

inline std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(bool(is), "cannot read " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void append_text(const std::string& path, const std::string& content) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os << content;
}

// -------- tiny PNG writer (8-bit RGB), enough for heatmaps and curves --------

inline void write_png(const std::string& path, const std::vector<uint8_t>& rgb, int w, int h) {
    check(rgb.size() == static_cast<size_t>(w) * h * 3, "write_png: bad buffer size");
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * 3));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), rgb.begin() + static_cast<long>(y) * w * 3, rgb.begin() + static_cast<long>(y + 1) * w * 3);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    check(compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) == Z_OK, "png deflate failed");
    comp.resize(comp_len);

    fs::create_directories(fs::path(path).parent_path());
    std::ofstream os(path, std::ios::binary);
    check(bool(os), "cannot write " + path);
    auto be32 = [](uint32_t v) {
        return std::string{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    };
    auto chunk = [&](const char* type, const std::string& data) {
        os << be32(static_cast<uint32_t>(data.size()));
        std::string td = std::string(type, 4) + data;
        os << td;
        os << be32(static_cast<uint32_t>(crc32(0, reinterpret_cast<const Bytef*>(td.data()), static_cast<uInt>(td.size()))));
    };
    os.write("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr = be32(static_cast<uint32_t>(w)) + be32(static_cast<uint32_t>(h));
    ihdr += '\x08';  // bit depth
    ihdr += '\x02';  // color type: truecolor
    ihdr += '\x00';
    ihdr += '\x00';
    ihdr += '\x00';
    chunk("IHDR", ihdr);
    chunk("IDAT", std::string(comp.begin(), comp.end()));
    chunk("IEND", "");
}

}  // namespace ccdl::io
