#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace spraysim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// 8-bit RGB color, one channel per band.
struct Rgb8 {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

inline Vec3 color_to_norm(const Rgb8& c) {
    return {c.r / 255.0, c.g / 255.0, c.b / 255.0};
}

/// Clamp to [0,1] and quantize to 8-bit channels.
Rgb8 norm_to_color(const Vec3& norm);

/// splitmix64 finalizer; maps any 64-bit value to a well-mixed one.
std::uint64_t mix64(std::uint64_t x);

/// Derive a per-stage seed from the global seed and a fixed label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

/// Derive a per-item seed (e.g. per point index) from a stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Tiny counter-based PRNG used where per-item streams must be independent
/// of loop partitioning.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix64(state_);
    }

    /// Uniform double in [0,1).
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller.
    double next_gaussian();

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Write the whole content to a temporary file in the target directory and
/// rename it into place, so readers never observe a partial file.
/// Throws std::runtime_error on I/O failure.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace spraysim
