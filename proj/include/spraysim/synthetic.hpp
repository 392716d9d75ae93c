#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spraysim/common.hpp"
#include "spraysim/deposition.hpp"
#include "spraysim/km.hpp"
#include "spraysim/point_cloud.hpp"

namespace spraysim {

/// Configuration for synthetic labeled data generation: a planar grid is
/// base-colored, sprayed through the deposition model and recolored through
/// the reflectance model, standing in for a physical paint/scan cycle.
struct SyntheticConfig {
    enum class Scenario { single, gradient };
    enum class Profile { static_point, line_pass };

    Scenario scenario = Scenario::single;
    std::vector<Rgb8> base_colors{Rgb8{255, 255, 255}};
    std::vector<KmPaint> paints;
    Profile profile = Profile::static_point;
    double noise_sigma = 0.01;        // std dev in normalized color units
    std::size_t points_per_run = 10000;
    std::uint64_t seed = 0;

    DepositionParams deposition{};
    double plane_size = 12.0;   // square side, cm
    double gun_height = 12.0;   // cm above the plane
    double static_dwell = 20.0; // s parked over the center (static profile)
    double pass_speed = 1.0;    // cm/s along the pass (line profile)
    double spacing = 0.2;       // discretization step, cm
};

SyntheticConfig::Scenario scenario_from_string(const std::string& s);
SyntheticConfig::Profile profile_from_string(const std::string& s);

void validate(const SyntheticConfig& cfg);

/// One spraying run: base-colored cloud, painted cloud, simulated thickness
/// and the sprayed paint class.
struct SyntheticRun {
    ColorPointCloud pre;
    ColorPointCloud post;
    ThicknessField thickness;
    int class_id = 0;
};

/// Generate all spraying runs for the configured scenario:
///  - single: one run per (base color, paint) pair, uniformly colored base;
///  - gradient: one run per ordered paint pair (i != j), the base formed by a
///    line pass of paint i over the first base color, then paint j on top.
/// Gaussian noise of the configured sigma is added to covered painted colors.
/// Deterministic under the seed, independent of parallel partitioning.
std::vector<SyntheticRun> generate_synthetic_dataset(const SyntheticConfig& cfg);

}  // namespace spraysim
