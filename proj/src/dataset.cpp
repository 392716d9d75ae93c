#include "spraysim/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <stdexcept>

namespace spraysim {

std::vector<std::size_t> DatasetBundle::indices_of(Split which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == which) out.push_back(i);
    }
    return out;
}

std::vector<RawSample> build_records(const ColorPointCloud& pre, const ColorPointCloud& post,
                                     const ThicknessField& field, int class_id) {
    validate(pre);
    validate(post);
    if (field.size() != post.size()) {
        throw std::invalid_argument("thickness field not aligned with post cloud");
    }
    if (pre.size() == 0) {
        throw std::invalid_argument("pre cloud is empty");
    }

    const auto mask = coverage_mask(field);
    if (mask.empty()) {
        std::cerr << "warning: empty coverage, no records built\n";
        return {};
    }

    const KdTree tree(pre.points);
    std::vector<RawSample> samples(mask.size());
    const auto n = static_cast<std::ptrdiff_t>(mask.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t m = 0; m < n; ++m) {
        const std::size_t j = mask[static_cast<std::size_t>(m)];
        const std::size_t t = tree.nearest(post.points[j]);
        samples[static_cast<std::size_t>(m)] =
            RawSample{pre.colors[t], post.colors[j], field[j], class_id};
    }
    return samples;
}

DatasetBundle normalize(std::span<const RawSample> samples, int class_count) {
    if (class_count < 1) {
        throw std::invalid_argument("class count must be >= 1");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const RawSample& s : samples) {
        lo = std::min(lo, s.thickness);
        hi = std::max(hi, s.thickness);
        if (s.class_id < 0 || s.class_id >= class_count) {
            throw std::invalid_argument("sample class id outside [0,classes)");
        }
    }
    if (samples.size() < 2 || !(hi > lo)) {
        throw std::invalid_argument("degenerate dataset: need at least two distinct thicknesses");
    }

    DatasetBundle bundle;
    bundle.thick_min = lo;
    bundle.thick_max = hi;
    bundle.class_count = class_count;
    bundle.records.reserve(samples.size());
    for (const RawSample& s : samples) {
        PaintSampleRecord r;
        r.base_color_norm = color_to_norm(s.base_color);
        r.painted_color_norm = color_to_norm(s.painted_color);
        r.thick_norm = (s.thickness - lo) / (hi - lo);
        r.class_id = s.class_id;
        bundle.records.push_back(r);
    }
    return bundle;
}

void split_dataset(DatasetBundle& bundle, std::uint64_t seed) {
    const std::size_t n = bundle.records.size();
    if (n < 20) {
        throw std::invalid_argument("split needs at least 20 records");
    }

    // Largest-remainder apportionment of 0.9/0.05/0.05.
    const double fracs[3] = {0.9, 0.05, 0.05};
    std::size_t counts[3];
    double remainders[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = fracs[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        remainders[i] = exact - std::floor(exact);
        assigned += counts[i];
    }
    int order[3] = {0, 1, 2};
    std::stable_sort(order, order + 3, [&](int a, int b) { return remainders[a] > remainders[b]; });
    for (std::size_t extra = 0; extra < n - assigned; ++extra) {
        ++counts[order[extra % 3]];
    }

    // Seeded Fisher-Yates permutation (explicit bounded draws so the result
    // does not depend on library distribution internals).
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(perm[i], perm[j]);
    }

    bundle.split.assign(n, Split::train);
    std::size_t pos = 0;
    for (int part = 0; part < 3; ++part) {
        for (std::size_t c = 0; c < counts[part]; ++c) {
            bundle.split[perm[pos++]] = static_cast<Split>(part);
        }
    }
    bundle.split_seed = seed;
}

Eigen::VectorXd encode_class(int class_id, int class_count) {
    if (class_id < 0 || class_id >= class_count) {
        throw std::invalid_argument("class id outside [0,classes)");
    }
    Eigen::VectorXd v = Eigen::VectorXd::Zero(class_count);
    v[class_id] = 1.0;
    return v;
}

using nlohmann::json;

void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& csv_path,
                  const std::filesystem::path& meta_path) {
    std::string out = "r,g,b,thick_norm,class,pr,pg,pb\n";
    char buf[256];
    for (const PaintSampleRecord& r : bundle.records) {
        const int n = std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%d,%.17g,%.17g,%.17g\n",
                                    r.base_color_norm.x(), r.base_color_norm.y(),
                                    r.base_color_norm.z(), r.thick_norm, r.class_id,
                                    r.painted_color_norm.x(), r.painted_color_norm.y(),
                                    r.painted_color_norm.z());
        out.append(buf, static_cast<std::size_t>(n));
    }
    write_file_atomic(csv_path, out);

    json meta{{"thick_min", bundle.thick_min},
              {"thick_max", bundle.thick_max},
              {"classes", bundle.class_count},
              {"seed", bundle.split_seed}};
    json split = json::array();
    for (Split s : bundle.split) split.push_back(static_cast<int>(s));
    meta["split"] = split;
    write_file_atomic(meta_path, meta.dump() + "\n");
}

DatasetBundle load_dataset(const std::filesystem::path& csv_path,
                           const std::filesystem::path& meta_path) {
    std::ifstream meta_in(meta_path);
    if (!meta_in) {
        throw std::runtime_error("cannot open dataset metadata: " + meta_path.string());
    }
    json meta = json::parse(meta_in);

    DatasetBundle bundle;
    bundle.thick_min = meta.at("thick_min").get<double>();
    bundle.thick_max = meta.at("thick_max").get<double>();
    bundle.class_count = meta.at("classes").get<int>();
    bundle.split_seed = meta.at("seed").get<std::uint64_t>();

    std::ifstream in(csv_path);
    if (!in) {
        throw std::runtime_error("cannot open dataset CSV: " + csv_path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("r,g,b,thick_norm,class,pr,pg,pb", 0) != 0) {
        throw std::runtime_error("dataset CSV: bad header in " + csv_path.string());
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        PaintSampleRecord r;
        double f[8];
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &f[0], &f[1], &f[2],
                        &f[3], &f[4], &f[5], &f[6], &f[7]) != 8) {
            throw std::runtime_error("dataset CSV: malformed row '" + line + "'");
        }
        r.base_color_norm = Vec3(f[0], f[1], f[2]);
        r.thick_norm = f[3];
        r.class_id = static_cast<int>(f[4]);
        r.painted_color_norm = Vec3(f[5], f[6], f[7]);
        bundle.records.push_back(r);
    }

    if (meta.contains("split")) {
        const json& split = meta["split"];
        if (!split.empty() && split.size() != bundle.records.size()) {
            throw std::runtime_error("dataset metadata: split length does not match records");
        }
        for (const json& s : split) {
            const int v = s.get<int>();
            if (v < 0 || v > 2) throw std::runtime_error("dataset metadata: bad split value");
            bundle.split.push_back(static_cast<Split>(v));
        }
    }
    return bundle;
}

}  // namespace spraysim
