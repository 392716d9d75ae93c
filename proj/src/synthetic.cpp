#include "spraysim/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spraysim {

SyntheticConfig::Scenario scenario_from_string(const std::string& s) {
    if (s == "single") return SyntheticConfig::Scenario::single;
    if (s == "gradient") return SyntheticConfig::Scenario::gradient;
    throw std::invalid_argument("unknown scenario '" + s + "' (expected single|gradient)");
}

SyntheticConfig::Profile profile_from_string(const std::string& s) {
    if (s == "static-point") return SyntheticConfig::Profile::static_point;
    if (s == "line-pass") return SyntheticConfig::Profile::line_pass;
    throw std::invalid_argument("unknown profile '" + s + "' (expected static-point|line-pass)");
}

void validate(const SyntheticConfig& cfg) {
    if (cfg.points_per_run == 0) {
        throw std::invalid_argument("synthetic config: point count must be > 0");
    }
    if (cfg.noise_sigma < 0) {
        throw std::invalid_argument("synthetic config: noise sigma must be >= 0");
    }
    if (cfg.paints.empty()) {
        throw std::invalid_argument("synthetic config: at least one paint required");
    }
    if (cfg.scenario == SyntheticConfig::Scenario::gradient && cfg.paints.size() < 2) {
        throw std::invalid_argument("synthetic config: gradient scenario needs two paints");
    }
    if (cfg.base_colors.empty()) {
        throw std::invalid_argument("synthetic config: at least one base color required");
    }
    for (const KmPaint& p : cfg.paints) validate(p);
    validate(cfg.deposition);
    if (!(cfg.plane_size > 0) || !(cfg.gun_height > 0) || !(cfg.static_dwell > 0) ||
        !(cfg.pass_speed > 0) || !(cfg.spacing > 0)) {
        throw std::invalid_argument("synthetic config: geometry values must be positive");
    }
}

namespace {

ColorPointCloud make_plane_grid(const SyntheticConfig& cfg, const Rgb8& color) {
    const std::size_t side =
        std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(
                                     std::sqrt(static_cast<double>(cfg.points_per_run)))));
    const double step = cfg.plane_size / static_cast<double>(side - 1);
    const double half = cfg.plane_size / 2.0;

    ColorPointCloud cloud;
    cloud.points.reserve(side * side);
    for (std::size_t iy = 0; iy < side; ++iy) {
        for (std::size_t ix = 0; ix < side; ++ix) {
            cloud.points.push_back(
                {-half + step * static_cast<double>(ix), -half + step * static_cast<double>(iy), 0.0});
        }
    }
    cloud.colors.assign(cloud.points.size(), color);
    cloud.normals.assign(cloud.points.size(), Vec3(0, 0, 1));
    return cloud;
}

/// Static gun parked over the plane center.
DiscretizedTrajectory static_point_trajectory(const SyntheticConfig& cfg) {
    Waypoint w;
    w.axis = Vec3(0, 0, -1);
    w.pose.rotation = frame_from_axis(w.axis);
    w.pose.position = Vec3(0, 0, cfg.gun_height);
    w.speed = 1.0;
    w.dwell = cfg.static_dwell;
    w.gun_on = true;
    DiscretizedTrajectory traj;
    traj.spacing = 0.0;
    traj.waypoints.push_back(w);
    return traj;
}

/// Straight pass across the plane at the gun height. `along_y` flips the
/// travel axis so a second coat can cross the first.
DiscretizedTrajectory line_pass_trajectory(const SyntheticConfig& cfg, bool along_y) {
    const double half = cfg.plane_size / 2.0;
    PathPolyline path;
    for (int end = 0; end < 2; ++end) {
        PathVertex v;
        const double c = end == 0 ? -half : half;
        v.pose.position = along_y ? Vec3(0, c, cfg.gun_height) : Vec3(c, 0, cfg.gun_height);
        v.pose.rotation = frame_from_axis(Vec3(0, 0, -1));
        v.speed = cfg.pass_speed;
        v.offset_dir = Vec3(0, 0, 1);
        path.vertices.push_back(v);
    }
    return discretize(path, cfg.spacing);
}

/// Paint a cloud: covered points get the per-band reflectance of the coat
/// plus optional Gaussian camera noise; uncovered points keep the base.
ColorPointCloud apply_coat(const ColorPointCloud& base, const ThicknessField& field,
                           const KmPaint& paint, double sigma, std::uint64_t noise_stream,
                           std::uint64_t run_index) {
    ColorPointCloud out = base;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (field[i] <= 0.0) continue;
        const Vec3 bg = color_to_norm(base.colors[i]);
        Vec3 painted;
        for (int c = 0; c < 3; ++c) {
            painted[c] =
                km_reflectance(bg[c], paint.channels[static_cast<std::size_t>(c)], field[i]);
        }
        if (sigma > 0) {
            SplitMix64 rng(derive_seed(noise_stream, run_index, i));
            for (int c = 0; c < 3; ++c) {
                painted[c] = std::clamp(painted[c] + sigma * rng.next_gaussian(), 0.0, 1.0);
            }
        }
        out.colors[i] = norm_to_color(painted);
    }
    return out;
}

}  // namespace

std::vector<SyntheticRun> generate_synthetic_dataset(const SyntheticConfig& cfg) {
    validate(cfg);
    const std::uint64_t noise_stream = derive_seed(cfg.seed, "synthetic-noise");

    // The top-coat trajectory is shared by all runs.
    const DiscretizedTrajectory top_traj = cfg.profile == SyntheticConfig::Profile::static_point
                                               ? static_point_trajectory(cfg)
                                               : line_pass_trajectory(cfg, /*along_y=*/false);

    std::vector<SyntheticRun> runs;
    std::uint64_t run_index = 0;

    if (cfg.scenario == SyntheticConfig::Scenario::single) {
        for (const Rgb8& base_color : cfg.base_colors) {
            for (const KmPaint& paint : cfg.paints) {
                SyntheticRun run;
                run.pre = make_plane_grid(cfg, base_color);
                run.thickness = simulate_thickness(top_traj, run.pre, cfg.deposition);
                run.post = apply_coat(run.pre, run.thickness, paint, cfg.noise_sigma,
                                      noise_stream, run_index);
                run.class_id = paint.class_id;
                runs.push_back(std::move(run));
                ++run_index;
            }
        }
        return runs;
    }

    // Gradient scenario: paint i lays a gradient band over the base color by
    // a pass along y, then paint j is sprayed on top across it.
    const DiscretizedTrajectory first_traj = line_pass_trajectory(cfg, /*along_y=*/true);
    for (const KmPaint& first : cfg.paints) {
        for (const KmPaint& top : cfg.paints) {
            if (first.class_id == top.class_id) continue;
            SyntheticRun run;
            ColorPointCloud blank = make_plane_grid(cfg, cfg.base_colors.front());
            const ThicknessField first_field = simulate_thickness(first_traj, blank, cfg.deposition);
            // The first layer is part of the base surface: no camera noise.
            run.pre = apply_coat(blank, first_field, first, 0.0, noise_stream, run_index);
            run.thickness = simulate_thickness(top_traj, run.pre, cfg.deposition);
            run.post = apply_coat(run.pre, run.thickness, top, cfg.noise_sigma, noise_stream,
                                  run_index);
            run.class_id = top.class_id;
            runs.push_back(std::move(run));
            ++run_index;
        }
    }
    return runs;
}

}  // namespace spraysim
