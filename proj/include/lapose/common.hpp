#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lapose {

// Counter-free deterministic RNG. All randomness in the project flows through
// this generator so that runs are reproducible across platforms; the C++
// standard distributions are implementation-defined and are not used.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix(seed + 0x9e3779b97f4a7c15ULL)) {}

    // Independent stream derived from (seed, index), e.g. one per clip.
    static Rng derive(uint64_t seed, uint64_t index) {
        return Rng(splitmix(seed ^ (0xbf58476d1ce4e5b9ULL * (index + 1))));
    }

    uint64_t next_u64() {
        // xorshift64* on a splitmix-initialized state
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545f4914f6cdd1dULL;
    }

    uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

    // Uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n)
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Standard normal via Box-Muller (deterministic, no cached spare).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    uint64_t state_;
};

// SHA-256 of a byte buffer; used for checkpoint and codebook content hashes.
std::array<uint8_t, 32> sha256(const uint8_t* data, size_t len);
std::string hex_string(const uint8_t* data, size_t len);

inline std::string hex_string(const std::array<uint8_t, 32>& h) {
    return hex_string(h.data(), h.size());
}

// Whole-file helpers.
std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const void* data, size_t len);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Little-endian scalar append/read for binary records.
template <typename T>
void append_le(std::vector<uint8_t>& buf, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    uint8_t tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf.insert(buf.end(), tmp, tmp + sizeof(T));
}

template <typename T>
T read_le(const uint8_t* p) {
    static_assert(std::is_trivially_copyable_v<T>);
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

// ISO-8601 UTC timestamp for run manifests.
std::string utc_timestamp();

// Runs fn(0..n-1) across up to `jobs` threads; rethrows the first failure.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

} // namespace lapose
