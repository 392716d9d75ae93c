#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "spraysim/common.hpp"

namespace spraysim {

/// Colored point cloud: positions in centimeters, 8-bit colors, optional
/// unit normals. Positions and colors always have equal length.
struct ColorPointCloud {
    std::vector<Vec3> points;
    std::vector<Rgb8> colors;
    std::vector<Vec3> normals;  // empty, or same length as points

    std::size_t size() const { return points.size(); }
    bool has_normals() const { return !normals.empty(); }
};

/// Throws std::invalid_argument if sizes disagree or normals are not unit length.
void validate(const ColorPointCloud& cloud);

/// Load an ASCII PLY with x,y,z float and red,green,blue uchar properties;
/// nx,ny,nz optional (renormalized on load). Throws std::runtime_error with
/// the offending header line on parse errors.
ColorPointCloud load_ply(const std::filesystem::path& path);

/// Write ASCII PLY readable by load_ply. Colors written as integers,
/// coordinates with 9 significant digits.
void save_ply(const ColorPointCloud& cloud, const std::filesystem::path& path);

/// Index of the cloud point closest to `query` in Euclidean distance.
/// Ties broken by smallest index. Brute-force scan; the contract reference.
std::size_t nearest(const Vec3& query, const ColorPointCloud& cloud);

/// kd-tree over a fixed point set. Query results are behaviorally identical
/// to the brute-force nearest(): exact distances, ties by smallest index.
class KdTree {
public:
    explicit KdTree(const std::vector<Vec3>& points);

    std::size_t nearest(const Vec3& query) const;

    /// Indices of the k nearest points, ordered by (distance, index).
    std::vector<std::size_t> knearest(const Vec3& query, std::size_t k) const;

    std::size_t size() const { return points_.size(); }

private:
    struct Node {
        int axis = -1;       // -1 marks a leaf
        double split = 0.0;
        std::uint32_t left = 0, right = 0;
        std::uint32_t begin = 0, end = 0;  // leaf range into order_
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end);

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
    std::uint32_t root_ = 0;
};

/// Per-point normals from PCA over the k nearest neighbors, oriented toward
/// `viewpoint`. Degenerate neighborhoods (covariance rank < 2) get the
/// viewpoint direction and are reported in `degenerate` when non-null.
ColorPointCloud estimate_normals(const ColorPointCloud& cloud, std::size_t k,
                                 const Vec3& viewpoint,
                                 std::vector<std::size_t>* degenerate = nullptr);

}  // namespace spraysim
