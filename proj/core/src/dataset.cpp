#include "defdr/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "defdr/ppm.hpp"

namespace defdr {
namespace {

struct Palette {
    double bg[3];
    double fg[3];
};

Palette draw_palette(Prng& rng) {
    Palette p;
    // Overlapping ranges: most draws have usable contrast, a tail of
    // low-contrast items keeps the classifier off the saturation regime.
    for (int c = 0; c < 3; ++c) p.bg[c] = rng.uniform(0.0, 0.60);
    for (int c = 0; c < 3; ++c) p.fg[c] = rng.uniform(0.40, 1.0);
    return p;
}

void fill_bg(std::vector<double>& px, int side, const Palette& pal) {
    for (int i = 0; i < side * side; ++i)
        for (int c = 0; c < 3; ++c) px[i * 3 + c] = pal.bg[c];
}

inline void put_fg(std::vector<double>& px, int side, int r, int c,
                   const Palette& pal) {
    if (r < 0 || r >= side || c < 0 || c >= side) return;
    int i = r * side + c;
    for (int ch = 0; ch < 3; ++ch) px[i * 3 + ch] = pal.fg[ch];
}

void draw_circle(std::vector<double>& px, int side, Prng& rng,
                 const Palette& pal) {
    double r = rng.uniform(0.18, 0.32) * side;
    double cy = rng.uniform(r + 1.0, side - r - 1.0);
    double cx = rng.uniform(r + 1.0, side - r - 1.0);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            double dy = y - cy, dx = x - cx;
            if (dy * dy + dx * dx <= r * r) put_fg(px, side, y, x, pal);
        }
}

void draw_square_outline(std::vector<double>& px, int side, Prng& rng,
                         const Palette& pal) {
    double h = rng.uniform(0.18, 0.32) * side;  // half-size
    int cy = static_cast<int>(rng.uniform(h + 1.0, side - h - 1.0));
    int cx = static_cast<int>(rng.uniform(h + 1.0, side - h - 1.0));
    int t = std::max(1, side / 16);
    int lo_y = cy - static_cast<int>(h), hi_y = cy + static_cast<int>(h);
    int lo_x = cx - static_cast<int>(h), hi_x = cx + static_cast<int>(h);
    for (int y = lo_y; y <= hi_y; ++y)
        for (int x = lo_x; x <= hi_x; ++x) {
            bool border = y < lo_y + t || y > hi_y - t || x < lo_x + t ||
                          x > hi_x - t;
            if (border) put_fg(px, side, y, x, pal);
        }
}

void draw_triangle(std::vector<double>& px, int side, Prng& rng,
                   const Palette& pal) {
    double h = rng.uniform(0.20, 0.34) * side;
    double cy = rng.uniform(h + 1.0, side - h - 1.0);
    double cx = rng.uniform(h + 1.0, side - h - 1.0);
    // apex up, flat base
    double ay = cy - h, ax = cx;
    double by = cy + h, bx = cx - h;
    double gy = cy + h, gx = cx + h;
    auto edge = [](double py, double pxx, double qy, double qx, double ry,
                   double rx) {
        return (qx - pxx) * (ry - py) - (qy - py) * (rx - pxx);
    };
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            double d1 = edge(ay, ax, by, bx, y, x);
            double d2 = edge(by, bx, gy, gx, y, x);
            double d3 = edge(gy, gx, ay, ax, y, x);
            bool neg = d1 < 0 || d2 < 0 || d3 < 0;
            bool pos = d1 > 0 || d2 > 0 || d3 > 0;
            if (!(neg && pos)) put_fg(px, side, y, x, pal);
        }
}

void draw_plus_cross(std::vector<double>& px, int side, Prng& rng,
                     const Palette& pal) {
    double h = rng.uniform(0.22, 0.36) * side;  // arm length
    int cy = static_cast<int>(rng.uniform(h + 1.0, side - h - 1.0));
    int cx = static_cast<int>(rng.uniform(h + 1.0, side - h - 1.0));
    int t = std::max(1, side / 10);  // half bar width
    int arm = static_cast<int>(h);
    for (int y = cy - arm; y <= cy + arm; ++y)
        for (int x = cx - t; x <= cx + t; ++x) put_fg(px, side, y, x, pal);
    for (int y = cy - t; y <= cy + t; ++y)
        for (int x = cx - arm; x <= cx + arm; ++x) put_fg(px, side, y, x, pal);
}

void draw_stripes(std::vector<double>& px, int side, Prng& rng,
                  const Palette& pal) {
    int period = rng.uniform_int(4, std::max(4, side / 4));
    int phase = rng.uniform_int(0, period - 1);
    int band = std::max(1, period / 2);
    for (int y = 0; y < side; ++y) {
        if (((y + phase) % period) < band)
            for (int x = 0; x < side; ++x) put_fg(px, side, y, x, pal);
    }
}

}  // namespace

LabeledDataset gen_shapes_dataset(uint64_t seed, int n, int image_side) {
    if (image_side < 16)
        throw std::invalid_argument("gen_shapes_dataset: image_side must be >= 16");
    if (n < kShapeClassCount)
        throw std::invalid_argument("gen_shapes_dataset: n must be >= class count");

    Prng rng(seed);
    LabeledDataset ds;
    ds.class_count = kShapeClassCount;
    ds.items.reserve(n);

    std::vector<double> px(static_cast<size_t>(image_side) * image_side * 3);
    for (int i = 0; i < n; ++i) {
        int cls = i % kShapeClassCount;  // round-robin keeps labels balanced
        Palette pal = draw_palette(rng);
        fill_bg(px, image_side, pal);
        switch (cls) {
            case 0: draw_circle(px, image_side, rng, pal); break;
            case 1: draw_square_outline(px, image_side, rng, pal); break;
            case 2: draw_triangle(px, image_side, rng, pal); break;
            case 3: draw_plus_cross(px, image_side, rng, pal); break;
            case 4: draw_stripes(px, image_side, rng, pal); break;
        }
        for (double& v : px) v += rng.uniform(-0.05, 0.05);
        ds.items.emplace_back(ImageTensor(image_side, image_side, px), cls);
    }
    return ds;
}

LabeledDataset load_manifest(const std::string& csv_text,
                             const std::string& base_dir) {
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("manifest: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "path,label")
        throw std::runtime_error("manifest: expected header 'path,label'");

    LabeledDataset ds;
    int max_label = -1;
    int row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        auto where = [&](const std::string& msg) {
            return std::runtime_error("manifest: row " + std::to_string(row) +
                                      ": " + msg);
        };
        size_t comma = line.rfind(',');
        if (comma == std::string::npos) throw where("missing comma");
        std::string path = line.substr(0, comma);
        std::string label_str = line.substr(comma + 1);
        if (label_str.empty() || label_str.size() > 9)
            throw where("non-integer label");
        for (char c : label_str)
            if (c < '0' || c > '9') throw where("non-integer label");
        int label = std::stoi(label_str);

        std::filesystem::path full = std::filesystem::path(base_dir) / path;
        ImageTensor img = [&] {
            try {
                return load_ppm_file(full.string());
            } catch (const std::exception& e) {
                throw where(e.what());
            }
        }();
        if (!ds.items.empty() && !img.same_shape(ds.items.front().first))
            throw where("dimension mismatch");
        max_label = std::max(max_label, label);
        ds.items.emplace_back(std::move(img), label);
    }
    ds.class_count = max_label + 1;
    return ds;
}

void save_dataset(const LabeledDataset& ds, const std::string& dir,
                  const std::string& prefix) {
    std::filesystem::create_directories(dir);
    std::ostringstream manifest;
    manifest << "path,label\n";
    for (size_t i = 0; i < ds.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%05zu.ppm", prefix.c_str(), i);
        save_ppm_file(ds.image(i), (std::filesystem::path(dir) / name).string());
        manifest << name << ',' << ds.label(i) << '\n';
    }
    std::ofstream out(std::filesystem::path(dir) / "manifest.csv",
                      std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest in " + dir);
    out << manifest.str();
}

}  // namespace defdr
