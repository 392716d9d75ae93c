#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "spraysim/common.hpp"

namespace spraysim {

/// Rigid pose: right-handed orthonormal rotation plus position (cm).
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 position = Vec3::Zero();
};

/// Throws std::invalid_argument unless rotation is orthonormal with det +1
/// (tolerance 1e-9).
void validate(const Pose& pose);

/// Nozzle axis: the tool -z axis, pointing from the gun toward the workpiece.
Vec3 nozzle_axis(const Pose& pose);

/// Deterministic orthonormal frame whose -z column equals `axis`.
Mat3 frame_from_axis(const Vec3& axis);

struct PathVertex {
    Pose pose;
    double speed = 1.0;                 // cm/s, > 0
    Vec3 offset_dir = Vec3(0, 0, 1);    // unit vector from surface toward gun
};

/// Continuous gun path as a polyline of posed vertices.
struct PathPolyline {
    std::vector<PathVertex> vertices;

    double total_length() const;
};

void validate(const PathPolyline& path);

struct Waypoint {
    Pose pose;
    Vec3 axis = Vec3(0, 0, -1);  // unit nozzle axis
    double speed = 1.0;          // cm/s
    double dwell = 0.0;          // s
    bool gun_on = true;
};

/// Equally spaced waypoints along a path. Spacing between consecutive
/// positions is exactly the discretization step; interior dwell is
/// step/speed, the two endpoints carry half a step each so total time
/// telescopes to the exact path traversal time.
struct DiscretizedTrajectory {
    std::vector<Waypoint> waypoints;
    double spacing = 0.0;  // cm

    double total_time() const;
};

/// Discretize by arc length with step `spacing`; speed, offset direction and
/// nozzle axis are interpolated between bracketing vertices (axis by
/// normalized lerp). A trailing partial segment shorter than the step is
/// dropped. Throws std::invalid_argument for spacing <= 0 or a path shorter
/// than one step.
DiscretizedTrajectory discretize(const PathPolyline& path, double spacing);

/// Bounds for the per-control-point decision variables.
struct ControlBounds {
    double h_min = 0.0, h_max = 1e9;
    double v_min = 0.0, v_max = 1e9;
};

/// Modulate a path by per-control-point heights, speeds and spray
/// confidences. Control points sit at equally spaced arc-length stations;
/// waypoint values come from piecewise-linear interpolation in arc length.
/// Positions are displaced by the interpolated height along the offset
/// direction; the gun fires where confidence >= 0.5.
DiscretizedTrajectory apply_control(const PathPolyline& path, std::span<const double> heights,
                                    std::span<const double> speeds,
                                    std::span<const double> confidences, double spacing,
                                    const ControlBounds& bounds);

/// Path polyline JSON: {"poses":[{"p":[x,y,z],"axis":[...],"speed":s,
/// "offset_dir":[...]}...]}; "T" (9 numbers row-major) may replace "axis".
PathPolyline load_path_json(const std::filesystem::path& path);
void save_path_json(const PathPolyline& path, const std::filesystem::path& file);

/// Discretized trajectory JSON: waypoint list with pose, axis, speed, dwell
/// and gun flag.
void save_trajectory_json(const DiscretizedTrajectory& traj, const std::filesystem::path& file);

}  // namespace spraysim
