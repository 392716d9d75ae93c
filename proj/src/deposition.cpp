#include "spraysim/deposition.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spraysim {

void validate(const DepositionParams& params) {
    if (!(params.A > 0) || !(params.H > 0) || !(params.R > 0)) {
        throw std::invalid_argument("deposition params must be positive");
    }
}

double deposition_rate(const Vec3& gun_position, const Vec3& nozzle_axis,
                       const Vec3& surface_position, const Vec3& surface_normal,
                       const DepositionParams& params) {
    if (nozzle_axis.squaredNorm() < 1e-18 || surface_normal.squaredNorm() < 1e-18) {
        throw std::invalid_argument("deposition_rate: zero-length axis or normal");
    }

    const Vec3 to_surface = surface_position - gun_position;
    const double dist = to_surface.norm();
    if (dist == 0.0) {
        return 0.0;  // gun touching the surface, outside model validity
    }

    const double cos_theta = nozzle_axis.dot(to_surface) / dist;
    if (cos_theta <= 0.0) {
        return 0.0;  // point behind the nozzle
    }
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    const double radius = params.H * sin_theta / cos_theta;
    if (radius > params.R) {
        return 0.0;
    }

    const double cos_gamma = surface_normal.dot(-to_surface) / dist;
    // Back-facing or grazing incidence (within 1e-6 rad of pi/2): the
    // 1/cos^3 factor diverges, treat as no deposition.
    if (cos_gamma < 1e-6) {
        return 0.0;
    }

    const double ratio = params.H / dist;
    return params.A * (1.0 - (radius * radius) / (params.R * params.R)) * ratio * ratio *
           cos_theta / (cos_gamma * cos_gamma * cos_gamma);
}

ThicknessField simulate_thickness(const DiscretizedTrajectory& traj,
                                  const ColorPointCloud& cloud, const DepositionParams& params,
                                  DepositionStats* stats) {
    validate(params);
    if (!cloud.has_normals()) {
        throw std::invalid_argument("simulate_thickness: cloud has no normals");
    }
    validate(cloud);

    ThicknessField field(cloud.size(), 0.0);
    std::atomic<std::size_t> touching{0};

    const auto n_pts = static_cast<std::ptrdiff_t>(cloud.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ip = 0; ip < n_pts; ++ip) {
        const std::size_t i = static_cast<std::size_t>(ip);
        double sum = 0.0;
        // Fixed summation order over waypoints keeps results independent of
        // the parallel partitioning.
        for (const Waypoint& w : traj.waypoints) {
            if (!w.gun_on) continue;
            if ((cloud.points[i] - w.pose.position).squaredNorm() == 0.0) {
                touching.fetch_add(1, std::memory_order_relaxed);
            }
            sum += deposition_rate(w.pose.position, w.axis, cloud.points[i],
                                   cloud.normals[i], params) *
                   w.dwell;
        }
        field[i] = sum;
    }

    if (stats) {
        stats->gun_touching += touching.load();
    }
    return field;
}

std::vector<std::size_t> coverage_mask(std::span<const double> field) {
    std::vector<std::size_t> mask;
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (field[i] > 0.0) mask.push_back(i);
    }
    return mask;
}

void save_thickness_csv(std::span<const double> field, const std::filesystem::path& path) {
    std::string out = "index,thickness\n";
    char buf[64];
    for (std::size_t i = 0; i < field.size(); ++i) {
        const int n = std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, field[i]);
        out.append(buf, static_cast<std::size_t>(n));
    }
    write_file_atomic(path, out);
}

ThicknessField load_thickness_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open thickness CSV: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("index,thickness", 0) != 0) {
        throw std::runtime_error("thickness CSV: bad header in " + path.string());
    }
    ThicknessField field;
    std::size_t expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::runtime_error("thickness CSV: malformed row '" + line + "'");
        }
        const std::size_t idx = std::stoull(line.substr(0, comma));
        if (idx != expect++) {
            throw std::runtime_error("thickness CSV: rows out of order");
        }
        field.push_back(std::stod(line.substr(comma + 1)));
    }
    return field;
}

}  // namespace spraysim
