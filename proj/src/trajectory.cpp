#include "spraysim/trajectory.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace spraysim {

void validate(const Pose& pose) {
    const Mat3& t = pose.rotation;
    if (((t * t.transpose()) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw std::invalid_argument("pose rotation is not orthonormal");
    }
    if (std::abs(t.determinant() - 1.0) > 1e-9) {
        throw std::invalid_argument("pose rotation determinant is not +1");
    }
    if (!pose.position.allFinite()) {
        throw std::invalid_argument("pose position not finite");
    }
}

Vec3 nozzle_axis(const Pose& pose) {
    return -pose.rotation.col(2);
}

Mat3 frame_from_axis(const Vec3& axis) {
    const double n = axis.norm();
    if (n < 1e-12) {
        throw std::invalid_argument("frame_from_axis: zero axis");
    }
    const Vec3 z = -axis / n;
    const Vec3 ref = std::abs(z.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
    const Vec3 x = (ref - z * ref.dot(z)).normalized();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    return r;
}

double PathPolyline::total_length() const {
    double len = 0.0;
    for (std::size_t i = 1; i < vertices.size(); ++i) {
        len += (vertices[i].pose.position - vertices[i - 1].pose.position).norm();
    }
    return len;
}

void validate(const PathPolyline& path) {
    if (path.vertices.size() < 2) {
        throw std::invalid_argument("path needs at least 2 vertices");
    }
    for (const PathVertex& v : path.vertices) {
        validate(v.pose);
        if (!(v.speed > 0)) {
            throw std::invalid_argument("path vertex speed must be > 0");
        }
        if (std::abs(v.offset_dir.norm() - 1.0) > 1e-6) {
            throw std::invalid_argument("path vertex offset direction must be unit length");
        }
    }
}

double DiscretizedTrajectory::total_time() const {
    double t = 0.0;
    for (const Waypoint& w : waypoints) t += w.dwell;
    return t;
}

namespace {

/// Arc-length sampler over a polyline: positions exactly, scalar and vector
/// attributes by linear interpolation between bracketing vertices.
class PathSampler {
public:
    explicit PathSampler(const PathPolyline& path) : path_(path) {
        cum_.resize(path.vertices.size());
        cum_[0] = 0.0;
        for (std::size_t i = 1; i < path.vertices.size(); ++i) {
            cum_[i] = cum_[i - 1] + (path.vertices[i].pose.position -
                                     path.vertices[i - 1].pose.position)
                                        .norm();
        }
    }

    double total() const { return cum_.back(); }

    struct Sample {
        Vec3 position;
        Vec3 axis;
        Vec3 offset_dir;
        double speed;
    };

    Sample at(double s) const {
        s = std::clamp(s, 0.0, total());
        std::size_t seg = std::upper_bound(cum_.begin(), cum_.end(), s) - cum_.begin();
        seg = std::min(std::max<std::size_t>(seg, 1), cum_.size() - 1) - 1;
        const double len = cum_[seg + 1] - cum_[seg];
        const double t = len > 0 ? (s - cum_[seg]) / len : 0.0;
        const PathVertex& a = path_.vertices[seg];
        const PathVertex& b = path_.vertices[seg + 1];

        Sample out;
        out.position = (1 - t) * a.pose.position + t * b.pose.position;
        out.speed = (1 - t) * a.speed + t * b.speed;
        const Vec3 axis_a = nozzle_axis(a.pose);
        const Vec3 axis_b = nozzle_axis(b.pose);
        Vec3 axis = (1 - t) * axis_a + t * axis_b;
        if (axis.norm() < 1e-9) {
            throw std::invalid_argument("cannot interpolate antipodal nozzle axes");
        }
        out.axis = axis.normalized();
        Vec3 off = (1 - t) * a.offset_dir + t * b.offset_dir;
        if (off.norm() < 1e-9) {
            throw std::invalid_argument("cannot interpolate antipodal offset directions");
        }
        out.offset_dir = off.normalized();
        return out;
    }

private:
    const PathPolyline& path_;
    std::vector<double> cum_;
};

std::size_t waypoint_count(double total, double spacing) {
    // Waypoints at arc multiples of the spacing; a trailing partial segment
    // is dropped. The relative epsilon keeps exact multiples intact.
    return static_cast<std::size_t>(std::floor(total / spacing * (1.0 + 1e-12) + 1e-12)) + 1;
}

double endpoint_aware_dwell(double spacing, double speed, std::size_t k, std::size_t count) {
    // Interior waypoints own a full step of arc; the two endpoints own half a
    // step each, so dwell sums to the exact traversal time.
    const double dt = spacing / speed;
    return (k == 0 || k + 1 == count) ? 0.5 * dt : dt;
}

}  // namespace

DiscretizedTrajectory discretize(const PathPolyline& path, double spacing) {
    validate(path);
    if (!(spacing > 0)) {
        throw std::invalid_argument("spacing must be > 0");
    }
    PathSampler sampler(path);
    if (sampler.total() < spacing) {
        throw std::invalid_argument("path shorter than one spacing step");
    }

    const std::size_t count = waypoint_count(sampler.total(), spacing);
    DiscretizedTrajectory traj;
    traj.spacing = spacing;
    traj.waypoints.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const auto s = sampler.at(static_cast<double>(k) * spacing);
        Waypoint w;
        w.pose.rotation = frame_from_axis(s.axis);
        w.pose.position = s.position;
        w.axis = s.axis;
        w.speed = s.speed;
        w.dwell = endpoint_aware_dwell(spacing, s.speed, k, count);
        w.gun_on = true;
        traj.waypoints.push_back(w);
    }
    return traj;
}

DiscretizedTrajectory apply_control(const PathPolyline& path, std::span<const double> heights,
                                    std::span<const double> speeds,
                                    std::span<const double> confidences, double spacing,
                                    const ControlBounds& bounds) {
    validate(path);
    const std::size_t kc = heights.size();
    if (kc < 2 || speeds.size() != kc || confidences.size() != kc) {
        throw std::invalid_argument("control vectors must share a length >= 2");
    }
    for (std::size_t i = 0; i < kc; ++i) {
        if (heights[i] < bounds.h_min || heights[i] > bounds.h_max) {
            throw std::invalid_argument("control height out of bounds");
        }
        if (speeds[i] < bounds.v_min || speeds[i] > bounds.v_max || !(speeds[i] > 0)) {
            throw std::invalid_argument("control speed out of bounds");
        }
        if (confidences[i] < 0.0 || confidences[i] > 1.0) {
            throw std::invalid_argument("confidence outside [0,1]");
        }
    }
    if (!(spacing > 0)) {
        throw std::invalid_argument("spacing must be > 0");
    }

    PathSampler sampler(path);
    const double total = sampler.total();
    if (total < spacing) {
        throw std::invalid_argument("path shorter than one spacing step");
    }

    // Control points pinned at equally spaced arc-length stations.
    auto interp = [&](std::span<const double> vals, double s) {
        const double u = std::clamp(s / total, 0.0, 1.0) * static_cast<double>(kc - 1);
        std::size_t j = std::min(static_cast<std::size_t>(u), kc - 2);
        const double t = u - static_cast<double>(j);
        return (1 - t) * vals[j] + t * vals[j + 1];
    };

    const std::size_t count = waypoint_count(total, spacing);
    DiscretizedTrajectory traj;
    traj.spacing = spacing;
    traj.waypoints.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double s = static_cast<double>(k) * spacing;
        const auto smp = sampler.at(s);
        const double h = interp(heights, s);
        const double v = interp(speeds, s);
        const double conf = interp(confidences, s);

        Waypoint w;
        w.axis = smp.axis;
        w.pose.rotation = frame_from_axis(smp.axis);
        w.pose.position = smp.position + h * smp.offset_dir;
        w.speed = v;
        w.dwell = endpoint_aware_dwell(spacing, v, k, count);
        w.gun_on = conf >= 0.5;
        traj.waypoints.push_back(w);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// JSON I/O

using nlohmann::json;

namespace {

Vec3 vec3_from(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) {
        throw std::runtime_error(std::string("trajectory JSON: ") + what +
                                 " must be an array of 3 numbers");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to(const Vec3& v) {
    return json::array({v.x(), v.y(), v.z()});
}

}  // namespace

PathPolyline load_path_json(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw std::runtime_error("cannot open trajectory JSON: " + file.string());
    }
    json doc = json::parse(in);
    if (!doc.contains("poses") || !doc["poses"].is_array()) {
        throw std::runtime_error("trajectory JSON: missing \"poses\" array");
    }

    PathPolyline path;
    for (const json& jp : doc["poses"]) {
        PathVertex v;
        v.pose.position = vec3_from(jp.at("p"), "p");
        v.speed = jp.at("speed").get<double>();
        v.offset_dir = vec3_from(jp.at("offset_dir"), "offset_dir").normalized();
        if (jp.contains("T")) {
            const json& jt = jp["T"];
            if (!jt.is_array() || jt.size() != 9) {
                throw std::runtime_error("trajectory JSON: \"T\" must hold 9 numbers");
            }
            Mat3 rot;
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) rot(r, c) = jt[3 * r + c].get<double>();
            }
            v.pose.rotation = rot;
        } else if (jp.contains("axis")) {
            v.pose.rotation = frame_from_axis(vec3_from(jp["axis"], "axis"));
        } else {
            throw std::runtime_error("trajectory JSON: pose needs \"axis\" or \"T\"");
        }
        path.vertices.push_back(v);
    }
    validate(path);
    return path;
}

void save_path_json(const PathPolyline& path, const std::filesystem::path& file) {
    validate(path);
    json poses = json::array();
    for (const PathVertex& v : path.vertices) {
        poses.push_back({{"p", vec3_to(v.pose.position)},
                         {"axis", vec3_to(nozzle_axis(v.pose))},
                         {"speed", v.speed},
                         {"offset_dir", vec3_to(v.offset_dir)}});
    }
    write_file_atomic(file, json{{"poses", poses}}.dump(2) + "\n");
}

void save_trajectory_json(const DiscretizedTrajectory& traj, const std::filesystem::path& file) {
    json wps = json::array();
    for (const Waypoint& w : traj.waypoints) {
        wps.push_back({{"p", vec3_to(w.pose.position)},
                       {"axis", vec3_to(w.axis)},
                       {"speed", w.speed},
                       {"dwell", w.dwell},
                       {"gun_on", w.gun_on}});
    }
    write_file_atomic(file, json{{"spacing", traj.spacing}, {"waypoints", wps}}.dump(2) + "\n");
}

}  // namespace spraysim
