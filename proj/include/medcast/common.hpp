#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace medcast {

// Mean-Earth-radius arc length of one degree, km.
inline constexpr double kKmPerDegree = 111.195;

// All recoverable failures carry a kind so the CLI can map them to
// documented exit codes.
class Error : public std::runtime_error {
public:
    enum class Kind {
        config,   // bad configuration, arguments, or domain preconditions
        format,   // malformed or inconsistent file contents / shapes
        numeric,  // numerical failure (divergence, non-finite values)
        io,       // missing or unreadable files
    };

    Error(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// FNV-1a, used to fingerprint input files in run manifests and to fold
// string ids into seeds.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t seed = 14695981039346656037ull) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

}  // namespace medcast
