#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spraysim/common.hpp"
#include "spraysim/deposition.hpp"
#include "spraysim/point_cloud.hpp"

namespace spraysim {

/// One raw correspondence: measured colors plus simulated thickness.
struct RawSample {
    Rgb8 base_color;
    Rgb8 painted_color;
    double thickness = 0.0;  // cm, strictly positive (coverage contract)
    int class_id = 0;
};

/// Normalized training row.
struct PaintSampleRecord {
    Vec3 base_color_norm;
    double thick_norm = 0.0;
    int class_id = 0;
    Vec3 painted_color_norm;
};

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

/// Normalized records plus the normalization metadata needed at inference.
struct DatasetBundle {
    std::vector<PaintSampleRecord> records;
    double thick_min = 0.0;
    double thick_max = 1.0;
    int class_count = 1;
    std::uint64_t split_seed = 0;
    std::vector<Split> split;  // empty until split() ran; aligned with records

    std::vector<std::size_t> indices_of(Split which) const;
};

/// Pair covered post-cloud points with the nearest pre-cloud point's color.
/// Returns one sample per coverage-mask index, in cloud order. An empty
/// coverage yields an empty result (and a warning on stderr).
std::vector<RawSample> build_records(const ColorPointCloud& pre, const ColorPointCloud& post,
                                     const ThicknessField& field, int class_id);

/// Min-max normalize thickness, divide colors by 255 and record the stats.
/// Throws std::invalid_argument when all thicknesses coincide.
DatasetBundle normalize(std::span<const RawSample> samples, int class_count);

/// Normalize one thickness value with the stored stats; values outside the
/// training range map outside [0,1] without clamping.
inline double normalize_thickness(const DatasetBundle& bundle, double thickness) {
    return (thickness - bundle.thick_min) / (bundle.thick_max - bundle.thick_min);
}

/// Assign a seeded 0.9/0.05/0.05 split (largest-remainder rounding).
/// Requires at least 20 records.
void split_dataset(DatasetBundle& bundle, std::uint64_t seed);

/// Standard basis vector of length `class_count`.
Eigen::VectorXd encode_class(int class_id, int class_count);

/// Dataset CSV (`r,g,b,thick_norm,class,pr,pg,pb`, normalized values) plus a
/// JSON metadata sidecar ({"thick_min","thick_max","classes","seed","split"}).
void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& csv_path,
                  const std::filesystem::path& meta_path);
DatasetBundle load_dataset(const std::filesystem::path& csv_path,
                           const std::filesystem::path& meta_path);

}  // namespace spraysim
