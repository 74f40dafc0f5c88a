#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ccdl {

// Base error for anything a caller might reasonably catch.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

struct BudgetExhausted : Error {
    explicit BudgetExhausted(const std::string& msg) : Error("budget: " + msg) {}
};

struct NumericsError : Error {
    explicit NumericsError(const std::string& msg) : Error("numerics: " + msg) {}
};

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw Error(msg);
}

// FNV-1a over raw bytes; used for cheap parameter-freeze audits.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace ccdl
