#include "spraysim/km.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace spraysim {

void validate(const KmChannel& ch) {
    if (!(ch.S > 0) || ch.K < 0 || !std::isfinite(ch.K) || !std::isfinite(ch.S)) {
        throw std::invalid_argument("KM channel requires K >= 0 and S > 0");
    }
}

void validate(const KmPaint& paint) {
    if (paint.class_id < 0) {
        throw std::invalid_argument("paint class id must be >= 0");
    }
    for (const KmChannel& ch : paint.channels) validate(ch);
}

double km_reflectance(double background, const KmChannel& ch, double thickness) {
    validate(ch);
    if (background < 0.0 || background > 1.0) {
        throw std::invalid_argument("background reflectance outside [0,1]");
    }
    if (thickness < 0.0) {
        throw std::invalid_argument("negative layer thickness");
    }
    if (thickness == 0.0) {
        return background;  // limit value: a bare substrate reflects itself
    }

    const double a = 1.0 + ch.K / ch.S;
    const double b = std::sqrt(a * a - 1.0);

    // u = b*coth(b*S*X); coth(z) = 1 + 2/(e^{2z} - 1), stable for all z > 0,
    // with the K -> 0 limit u -> 1/(S*X).
    double u;
    if (b == 0.0) {
        u = 1.0 / (ch.S * thickness);
    } else {
        const double z = b * ch.S * thickness;
        u = (z > 360.0) ? b : b * (1.0 + 2.0 / std::expm1(2.0 * z));
    }

    double r = (1.0 - background * (a - u)) / (a - background + u);
    if (r < 0.0 && r > -1e-9) r = 0.0;
    if (r > 1.0 && r < 1.0 + 1e-9) r = 1.0;
    return r;
}

double km_masstone(const KmChannel& ch) {
    validate(ch);
    const double a = 1.0 + ch.K / ch.S;
    // a - b computed as 1/(a + b) to avoid cancellation for large K/S
    return 1.0 / (a + std::sqrt(a * a - 1.0));
}

Rgb8 km_color(const Rgb8& base, const KmPaint& paint, double thickness) {
    const Vec3 bg = color_to_norm(base);
    Vec3 out;
    for (int c = 0; c < 3; ++c) {
        out[c] = km_reflectance(bg[c], paint.channels[static_cast<std::size_t>(c)], thickness);
    }
    return norm_to_color(out);
}

using nlohmann::json;

std::vector<KmPaint> load_palette_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open palette JSON: " + path.string());
    }
    json doc = json::parse(in);
    if (!doc.contains("paints") || !doc["paints"].is_array() || doc["paints"].empty()) {
        throw std::runtime_error("palette JSON: missing non-empty \"paints\" array");
    }
    std::vector<KmPaint> palette;
    for (const json& jp : doc["paints"]) {
        KmPaint p;
        p.class_id = jp.at("class").get<int>();
        p.name = jp.value("name", std::string{});
        const json& jk = jp.at("K");
        const json& js = jp.at("S");
        if (jk.size() != 3 || js.size() != 3) {
            throw std::runtime_error("palette JSON: K and S must hold 3 numbers each");
        }
        for (std::size_t c = 0; c < 3; ++c) {
            p.channels[c].K = jk[c].get<double>();
            p.channels[c].S = js[c].get<double>();
        }
        validate(p);
        palette.push_back(std::move(p));
    }
    return palette;
}

void save_palette_json(const std::vector<KmPaint>& palette, const std::filesystem::path& path) {
    json paints = json::array();
    for (const KmPaint& p : palette) {
        validate(p);
        paints.push_back({{"class", p.class_id},
                          {"name", p.name},
                          {"K", {p.channels[0].K, p.channels[1].K, p.channels[2].K}},
                          {"S", {p.channels[0].S, p.channels[1].S, p.channels[2].S}}});
    }
    write_file_atomic(path, json{{"paints", paints}}.dump(2) + "\n");
}

}  // namespace spraysim
