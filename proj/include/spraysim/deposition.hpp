#pragma once

#include <span>
#include <vector>

#include "spraysim/common.hpp"
#include "spraysim/point_cloud.hpp"
#include "spraysim/trajectory.hpp"

namespace spraysim {

/// Parabolic spray-cone deposition model parameters. (R, H) is a calibration
/// pair: at gun height H the paint covers a disk of radius R on a
/// perpendicular plane.
struct DepositionParams {
    double A = 0.01;  // deposition rate constant, cm/s
    double H = 12.0;  // reference design height, cm
    double R = 5.0;   // maximum coverage radius at height H, cm
};

void validate(const DepositionParams& params);

/// Per-point simulated film thickness (cm), aligned with a cloud.
using ThicknessField = std::vector<double>;

/// Counters for inputs outside the model's validity range.
struct DepositionStats {
    std::size_t gun_touching = 0;  // surface point coincides with the gun
};

/// Instantaneous deposition rate (cm/s) at a surface point for one gun pose.
/// Zero outside the spray cone (r > R), behind the nozzle, at grazing or
/// back-facing incidence. `axis` and `normal` must be unit length.
double deposition_rate(const Vec3& gun_position, const Vec3& nozzle_axis,
                       const Vec3& surface_position, const Vec3& surface_normal,
                       const DepositionParams& params);

/// Accumulate thickness over all gun-on waypoints: thickness(i) =
/// sum_k rate(k,i) * dwell(k). The cloud must carry unit normals.
ThicknessField simulate_thickness(const DiscretizedTrajectory& traj,
                                  const ColorPointCloud& cloud, const DepositionParams& params,
                                  DepositionStats* stats = nullptr);

/// Indices with strictly positive thickness, in cloud order.
std::vector<std::size_t> coverage_mask(std::span<const double> field);

/// Thickness field CSV: header "index,thickness", one row per point.
void save_thickness_csv(std::span<const double> field, const std::filesystem::path& path);
ThicknessField load_thickness_csv(const std::filesystem::path& path);

}  // namespace spraysim
