#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "spraysim/common.hpp"

namespace spraysim {

/// Absorption/scattering pair for one effective color band (1/cm).
struct KmChannel {
    double K = 0.0;  // absorption, >= 0
    double S = 1.0;  // scattering, > 0
};

void validate(const KmChannel& ch);

/// A paint: class code plus one (K,S) pair per RGB band.
struct KmPaint {
    int class_id = 0;
    std::string name;
    std::array<KmChannel, 3> channels{};
};

void validate(const KmPaint& paint);

/// Two-flux reflectance of a paint layer of thickness X (cm) over a
/// background of reflectance Rg in [0,1]. Continuous at X = 0 (returns Rg)
/// and saturating to the masstone a - b as X grows.
double km_reflectance(double background, const KmChannel& ch, double thickness);

/// Limiting reflectance of an infinitely thick layer: a - b.
double km_masstone(const KmChannel& ch);

/// Per-band reflectance composition: each 8-bit channel is normalized,
/// pushed through km_reflectance and re-quantized.
Rgb8 km_color(const Rgb8& base, const KmPaint& paint, double thickness);

/// Paint palette JSON: {"paints":[{"class":1,"name":"red","K":[...],"S":[...]}...]}.
std::vector<KmPaint> load_palette_json(const std::filesystem::path& path);
void save_palette_json(const std::vector<KmPaint>& palette, const std::filesystem::path& path);

}  // namespace spraysim
