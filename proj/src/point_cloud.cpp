#include "spraysim/point_cloud.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spraysim {

void validate(const ColorPointCloud& cloud) {
    if (cloud.points.size() != cloud.colors.size()) {
        throw std::invalid_argument("point/color count mismatch: " +
                                    std::to_string(cloud.points.size()) + " vs " +
                                    std::to_string(cloud.colors.size()));
    }
    if (!cloud.normals.empty()) {
        if (cloud.normals.size() != cloud.points.size()) {
            throw std::invalid_argument("normal count mismatch");
        }
        for (std::size_t i = 0; i < cloud.normals.size(); ++i) {
            if (std::abs(cloud.normals[i].norm() - 1.0) > 1e-6) {
                throw std::invalid_argument("normal " + std::to_string(i) +
                                            " is not unit length");
            }
        }
    }
    for (const Vec3& p : cloud.points) {
        if (!p.allFinite()) {
            throw std::invalid_argument("non-finite point coordinate");
        }
    }
}

namespace {

struct PlyProperty {
    std::string type;
    std::string name;
};

[[noreturn]] void parse_fail(int line_no, const std::string& line, const std::string& why) {
    throw std::runtime_error("PLY parse error at line " + std::to_string(line_no) + " (\"" +
                             line + "\"): " + why);
}

}  // namespace

ColorPointCloud load_ply(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open PLY file: " + path.string());
    }

    std::string line;
    int line_no = 0;
    auto next_line = [&]() {
        if (!std::getline(in, line)) {
            parse_fail(line_no, "<eof>", "unexpected end of file");
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
    };

    next_line();
    if (line != "ply") parse_fail(line_no, line, "expected 'ply' magic");
    next_line();
    if (line != "format ascii 1.0") parse_fail(line_no, line, "expected 'format ascii 1.0'");

    std::size_t vertex_count = 0;
    bool seen_vertex_element = false;
    bool in_vertex_element = false;
    std::vector<PlyProperty> props;

    for (;;) {
        next_line();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "comment" || tok.empty()) {
            continue;
        } else if (tok == "element") {
            std::string name;
            long long count = -1;
            ls >> name >> count;
            if (name.empty() || count < 0) parse_fail(line_no, line, "malformed element");
            if (name == "vertex") {
                if (seen_vertex_element) parse_fail(line_no, line, "duplicate vertex element");
                seen_vertex_element = true;
                in_vertex_element = true;
                vertex_count = static_cast<std::size_t>(count);
            } else {
                if (count != 0) parse_fail(line_no, line, "unsupported element '" + name + "'");
                in_vertex_element = false;
            }
        } else if (tok == "property") {
            if (!in_vertex_element) continue;
            PlyProperty p;
            ls >> p.type >> p.name;
            if (p.type == "list") parse_fail(line_no, line, "list properties unsupported");
            if (p.name.empty()) parse_fail(line_no, line, "malformed property");
            props.push_back(p);
        } else if (tok == "end_header") {
            break;
        } else {
            parse_fail(line_no, line, "unknown header keyword '" + tok + "'");
        }
    }

    if (!seen_vertex_element) {
        throw std::runtime_error("PLY format error: no vertex element in " + path.string());
    }

    auto find_prop = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < props.size(); ++i) {
            if (props[i].name == name) return static_cast<int>(i);
        }
        return -1;
    };

    const int ix = find_prop("x"), iy = find_prop("y"), iz = find_prop("z");
    const int ir = find_prop("red"), ig = find_prop("green"), ib = find_prop("blue");
    if (ix < 0 || iy < 0 || iz < 0) {
        throw std::runtime_error("PLY format error: missing x/y/z properties in " + path.string());
    }
    if (ir < 0 || ig < 0 || ib < 0) {
        throw std::runtime_error("PLY format error: missing red/green/blue properties in " +
                                 path.string());
    }
    const int inx = find_prop("nx"), iny = find_prop("ny"), inz = find_prop("nz");
    const bool with_normals = inx >= 0 || iny >= 0 || inz >= 0;
    if (with_normals && (inx < 0 || iny < 0 || inz < 0)) {
        throw std::runtime_error("PLY format error: incomplete nx/ny/nz in " + path.string());
    }

    ColorPointCloud cloud;
    cloud.points.reserve(vertex_count);
    cloud.colors.reserve(vertex_count);
    if (with_normals) cloud.normals.reserve(vertex_count);

    std::vector<double> row(props.size());
    for (std::size_t v = 0; v < vertex_count; ++v) {
        next_line();
        std::istringstream ls(line);
        for (std::size_t c = 0; c < props.size(); ++c) {
            if (!(ls >> row[c])) parse_fail(line_no, line, "expected numeric vertex field");
        }
        cloud.points.push_back({row[ix], row[iy], row[iz]});
        auto channel = [&](int idx) {
            const double val = row[idx];
            if (val < 0 || val > 255 || val != std::floor(val)) {
                parse_fail(line_no, line, "color channel out of [0,255]");
            }
            return static_cast<std::uint8_t>(val);
        };
        cloud.colors.push_back({channel(ir), channel(ig), channel(ib)});
        if (with_normals) {
            Vec3 n{row[inx], row[iny], row[inz]};
            const double norm = n.norm();
            if (norm <= 0.0) parse_fail(line_no, line, "zero-length normal");
            cloud.normals.push_back(n / norm);
        }
    }

    validate(cloud);
    return cloud;
}

void save_ply(const ColorPointCloud& cloud, const std::filesystem::path& path) {
    validate(cloud);
    std::string out;
    out.reserve(64 + cloud.size() * 48);
    out += "ply\nformat ascii 1.0\n";
    out += "element vertex " + std::to_string(cloud.size()) + "\n";
    out +=
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    if (cloud.has_normals()) {
        out += "property float nx\nproperty float ny\nproperty float nz\n";
    }
    out += "end_header\n";

    char buf[224];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        const Rgb8& c = cloud.colors[i];
        int n;
        if (cloud.has_normals()) {
            const Vec3& nv = cloud.normals[i];
            n = std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %u %u %u %.9g %.9g %.9g\n",
                              p.x(), p.y(), p.z(), c.r, c.g, c.b, nv.x(), nv.y(), nv.z());
        } else {
            n = std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %u %u %u\n", p.x(), p.y(),
                              p.z(), c.r, c.g, c.b);
        }
        out.append(buf, static_cast<std::size_t>(n));
    }
    write_file_atomic(path, out);
}

std::size_t nearest(const Vec3& query, const ColorPointCloud& cloud) {
    if (cloud.size() == 0) {
        throw std::invalid_argument("nearest() on empty cloud");
    }
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double d2 = (query - cloud.points[i]).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// KdTree

namespace {
constexpr std::uint32_t kLeafSize = 16;
}

KdTree::KdTree(const std::vector<Vec3>& points) : points_(points) {
    if (points_.empty()) {
        throw std::invalid_argument("KdTree over empty point set");
    }
    order_.resize(points_.size());
    for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<std::uint32_t>(order_.size()));
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
    const std::uint32_t id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= kLeafSize) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) {  // all points coincide; keep as leaf
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         return points_[a][axis] < points_[b][axis];
                     });
    const double split = points_[order_[mid]][axis];
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::size_t KdTree::nearest(const Vec3& query) const {
    double best_d2 = std::numeric_limits<double>::infinity();
    std::uint32_t best = 0;
    bool found = false;

    // Explicit stack of (node, min squared distance to its region along the
    // splitting planes crossed so far).
    struct Item {
        std::uint32_t node;
        double min_d2;
    };
    std::vector<Item> stack;
    stack.push_back({root_, 0.0});
    while (!stack.empty()) {
        const Item it = stack.back();
        stack.pop_back();
        if (found && it.min_d2 > best_d2) continue;
        const Node& n = nodes_[it.node];
        if (n.axis < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::uint32_t idx = order_[i];
                const double d2 = (query - points_[idx]).squaredNorm();
                if (!found || d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                    best_d2 = d2;
                    best = idx;
                    found = true;
                }
            }
            continue;
        }
        const double delta = query[n.axis] - n.split;
        const double plane_d2 = delta * delta;
        const std::uint32_t near_child = delta < 0 ? n.left : n.right;
        const std::uint32_t far_child = delta < 0 ? n.right : n.left;
        // Push far first so the near side is explored first.
        stack.push_back({far_child, std::max(it.min_d2, plane_d2)});
        stack.push_back({near_child, it.min_d2});
    }
    return best;
}

std::vector<std::size_t> KdTree::knearest(const Vec3& query, std::size_t k) const {
    if (k == 0 || k > points_.size()) {
        throw std::invalid_argument("knearest: k out of range");
    }
    using Entry = std::pair<double, std::uint32_t>;  // (squared distance, index)
    // Max-heap on (d2, index): the worst candidate sits on top.
    std::vector<Entry> heap;
    heap.reserve(k);
    auto worse = [](const Entry& a, const Entry& b) {
        return a.first != b.first ? a.first < b.first : a.second < b.second;
    };

    struct Item {
        std::uint32_t node;
        double min_d2;
    };
    std::vector<Item> stack;
    stack.push_back({root_, 0.0});
    while (!stack.empty()) {
        const Item it = stack.back();
        stack.pop_back();
        if (heap.size() == k && it.min_d2 > heap.front().first) continue;
        const Node& n = nodes_[it.node];
        if (n.axis < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::uint32_t idx = order_[i];
                const Entry e{(query - points_[idx]).squaredNorm(), idx};
                if (heap.size() < k) {
                    heap.push_back(e);
                    std::push_heap(heap.begin(), heap.end(), worse);
                } else if (worse(e, heap.front())) {
                    std::pop_heap(heap.begin(), heap.end(), worse);
                    heap.back() = e;
                    std::push_heap(heap.begin(), heap.end(), worse);
                }
            }
            continue;
        }
        const double delta = query[n.axis] - n.split;
        const double plane_d2 = delta * delta;
        const std::uint32_t near_child = delta < 0 ? n.left : n.right;
        const std::uint32_t far_child = delta < 0 ? n.right : n.left;
        stack.push_back({far_child, std::max(it.min_d2, plane_d2)});
        stack.push_back({near_child, it.min_d2});
    }

    std::sort(heap.begin(), heap.end());
    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].second;
    return out;
}

// ---------------------------------------------------------------------------
// Normal estimation

ColorPointCloud estimate_normals(const ColorPointCloud& cloud, std::size_t k,
                                 const Vec3& viewpoint,
                                 std::vector<std::size_t>* degenerate) {
    validate(cloud);
    if (k < 3) {
        throw std::invalid_argument("estimate_normals: k must be >= 3");
    }
    if (k > cloud.size()) {
        throw std::invalid_argument("estimate_normals: k exceeds point count");
    }

    KdTree tree(cloud.points);
    ColorPointCloud out = cloud;
    out.normals.assign(cloud.size(), Vec3::Zero());
    std::vector<char> flagged(cloud.size(), 0);

    const auto n_pts = static_cast<std::ptrdiff_t>(cloud.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t ip = 0; ip < n_pts; ++ip) {
        const std::size_t i = static_cast<std::size_t>(ip);
        const Vec3& p = cloud.points[i];
        const auto nbrs = tree.knearest(p, k);

        Vec3 mean = Vec3::Zero();
        for (std::size_t j : nbrs) mean += cloud.points[j];
        mean /= static_cast<double>(nbrs.size());

        Mat3 cov = Mat3::Zero();
        for (std::size_t j : nbrs) {
            const Vec3 d = cloud.points[j] - mean;
            cov += d * d.transpose();
        }

        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        const Vec3 evals = eig.eigenvalues();  // ascending
        Vec3 normal;
        // Covariance rank < 2: collinear or coincident neighborhood.
        if (evals[2] <= 0.0 || evals[1] <= 1e-9 * evals[2]) {
            Vec3 dir = viewpoint - p;
            normal = dir.norm() > 0 ? Vec3(dir.normalized()) : Vec3(0, 0, 1);
            flagged[i] = 1;
        } else {
            normal = eig.eigenvectors().col(0);
            if (normal.dot(viewpoint - p) < 0) normal = -normal;
        }
        out.normals[i] = normal;
    }

    if (degenerate) {
        degenerate->clear();
        for (std::size_t i = 0; i < flagged.size(); ++i) {
            if (flagged[i]) degenerate->push_back(i);
        }
    }
    return out;
}

}  // namespace spraysim
