#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "convfeat/dataset.hpp"
#include "convfeat/errors.hpp"

namespace convfeat {

namespace {

constexpr double kPi = 3.14159265358979323846;

// 0 at d<=lo, 1 at d>=hi, smooth in between.
double smoothstep(double lo, double hi, double d) {
    if (d <= lo) return 0.0;
    if (d >= hi) return 1.0;
    const double t = (d - lo) / (hi - lo);
    return t * t * (3.0 - 2.0 * t);
}

// Soft indicator of |d| <= half, with edge width `soft`.
double band(double d, double half, double soft) {
    return 1.0 - smoothstep(half - soft, half + soft, std::abs(d));
}

// Soft filled disc of radius r around distance value `dist`.
double disc(double dist, double r, double soft) { return 1.0 - smoothstep(r - soft, r + soft, dist); }

double dist_point_segment(double px, double py, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double wx = px - ax, wy = py - ay;
    const double vv = vx * vx + vy * vy;
    double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
    return std::hypot(dx, dy);
}

struct ClassShape {
    int archetype = 0;  // 0..11
    int variant = 0;    // bumps counts/thickness when n_classes > 12
    double aspect = 1.0;
    std::vector<double> dots_x, dots_y;  // archetype 4 only
    double arc_start = 0.0;              // archetype 5 only
};

const char* kArchetypeNames[12] = {"twinblob", "ring",   "bar",      "cross",
                                   "dots",     "arc",    "doublering", "spokes",
                                   "rails",    "triangle", "checker",  "crescent"};

// Shape intensity in canonical (unrotated, unit-scale) coordinates; u,v in
// roughly [-1.2, 1.2] inside the figure.
double shape_mask(const ClassShape& s, double u, double v) {
    const double soft = 0.10;
    const double thick = 0.16 * std::pow(0.85, s.variant);
    const double r = std::hypot(u, v);
    switch (s.archetype) {
        case 0: {  // two blobs of unequal size
            const double d1 = std::hypot(u + 0.45, v + 0.05);
            const double d2 = std::hypot(u - 0.50, v - 0.15);
            return std::max(disc(d1, 0.48, 0.14), disc(d2, 0.33, 0.12));
        }
        case 1:
            return band(r - 0.72, thick, soft);
        case 2:
            return band(v, 0.20, soft) * disc(std::abs(u), 0.95, 0.12);
        case 3:
            return std::max(band(v, thick, soft) * disc(std::abs(u), 0.92, 0.10),
                            band(u, thick, soft) * disc(std::abs(v), 0.92, 0.10));
        case 4: {  // fixed constellation of dots
            double m = 0.0;
            for (std::size_t i = 0; i < s.dots_x.size(); ++i) {
                m = std::max(m, disc(std::hypot(u - s.dots_x[i], v - s.dots_y[i]), 0.17, 0.08));
            }
            return m;
        }
        case 5: {  // open arc
            const double phi = std::atan2(v, u);
            double rel = phi - s.arc_start;
            rel -= 2.0 * kPi * std::floor(rel / (2.0 * kPi));
            const double span = 2.2 + 0.3 * s.variant;
            const double ang = 1.0 - smoothstep(span - 0.15, span + 0.15, rel);
            return band(r - 0.80, thick, soft) * ang;
        }
        case 6:
            return std::max(band(r - 0.42, 0.11, soft), band(r - 0.90, 0.11, soft));
        case 7: {  // radial spokes
            const int m = 3 + s.variant;
            const double phi = std::atan2(v, u);
            const double wave = std::cos(static_cast<double>(m) * phi);  // 1 at spoke centers
            return band(1.0 - wave, 0.45, 0.25) * disc(r, 1.0, 0.10) *
                   smoothstep(0.08, 0.22, r);
        }
        case 8: {  // two rails plus crossbar
            const double rail1 = band(v - 0.55, 0.14, soft) * disc(std::abs(u), 0.88, 0.10);
            const double rail2 = band(v + 0.55, 0.14, soft) * disc(std::abs(u), 0.88, 0.10);
            const double bar = band(u, 0.14, soft) * disc(std::abs(v), 0.55, 0.10);
            return std::max({rail1, rail2, bar});
        }
        case 9: {  // triangle outline
            double vx[3], vy[3];
            for (int k = 0; k < 3; ++k) {
                const double a = kPi / 2.0 + 2.0 * kPi * k / 3.0;
                vx[k] = 0.95 * std::cos(a);
                vy[k] = 0.95 * std::sin(a);
            }
            double d = 1e9;
            for (int k = 0; k < 3; ++k) {
                d = std::min(d, dist_point_segment(u, v, vx[k], vy[k], vx[(k + 1) % 3],
                                                   vy[(k + 1) % 3]));
            }
            return band(d, thick, soft);
        }
        case 10: {  // checkerboard patch
            const double cell = 1.6 + 0.4 * s.variant;
            const int iu = static_cast<int>(std::floor((u + 4.0) * cell));
            const int iv = static_cast<int>(std::floor((v + 4.0) * cell));
            const double parity = ((iu + iv) % 2 == 0) ? 1.0 : 0.0;
            return parity * disc(r, 1.0, 0.10);
        }
        default: {  // crescent
            const double body = disc(r, 0.88, 0.10);
            const double bite = disc(std::hypot(u - 0.42, v), 0.70, 0.10);
            return std::max(body - bite, 0.0);
        }
    }
}

}  // namespace

SplitDataset synth_generate(const SynthParams& params, Rng& rng) {
    if (params.n_classes < 2) throw BadParam("synth needs at least 2 classes");
    if (params.per_class < 3) throw BadParam("synth needs at least 3 samples per class");
    if (params.side < 8) throw BadParam("synth side must be >= 8");

    const int side = params.side;
    std::vector<LabeledImage> pool;
    pool.reserve(static_cast<std::size_t>(params.n_classes) * params.per_class);
    std::vector<std::string> class_names;

    for (int c = 0; c < params.n_classes; ++c) {
        // Offset past the rng_streams ids so class streams never collide with
        // the split fork below.
        Rng class_rng = rng.fork(16 + static_cast<std::uint64_t>(c));
        ClassShape shape;
        shape.archetype = c % 12;
        shape.variant = c / 12;
        class_names.push_back(std::string(kArchetypeNames[shape.archetype]) +
                              (shape.variant ? "_v" + std::to_string(shape.variant) : ""));

        // Per-class base parameters, drawn before any sample.
        shape.aspect = class_rng.next_uniform(0.85, 1.2);
        if (shape.archetype == 4) {
            const int n_dots = 5 + shape.variant;
            for (int i = 0; i < n_dots; ++i) {
                const double a = class_rng.next_uniform(0.0, 2.0 * kPi);
                const double rr = 0.85 * std::sqrt(class_rng.next_unit());
                shape.dots_x.push_back(rr * std::cos(a));
                shape.dots_y.push_back(rr * std::sin(a));
            }
        }
        if (shape.archetype == 5) shape.arc_start = class_rng.next_uniform(0.0, 2.0 * kPi);

        for (int i = 0; i < params.per_class; ++i) {
            const double theta = class_rng.next_uniform(0.0, 2.0 * kPi);
            const double scale =
                0.34 * static_cast<double>(side) * class_rng.next_uniform(0.80, 1.15);
            const double cx = (0.5 + class_rng.next_uniform(-0.06, 0.06)) * (side - 1);
            const double cy = (0.5 + class_rng.next_uniform(-0.06, 0.06)) * (side - 1);
            const double fg = class_rng.next_uniform(0.60, 0.95);
            const double ct = std::cos(theta), st = std::sin(theta);

            LabeledImage img;
            img.pixels = Tensor({static_cast<std::size_t>(side), static_cast<std::size_t>(side)});
            img.class_id = c;
            img.source_path = class_names.back() + "/" + std::to_string(i);
            for (int y = 0; y < side; ++y) {
                for (int x = 0; x < side; ++x) {
                    const double dx = (x - cx) / scale, dy = (y - cy) / scale;
                    const double u = ct * dx + st * dy;
                    const double v = (-st * dx + ct * dy) / shape.aspect;
                    double val = fg * shape_mask(shape, u, v);
                    val += class_rng.next_uniform(-0.05, 0.05);
                    img.pixels(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                        std::clamp(val, 0.0, 1.0);
                }
            }
            pool.push_back(std::move(img));
        }
    }

    Rng split_rng = rng.fork(rng_streams::split_shuffle);
    return make_split(std::move(pool), std::move(class_names), params.split, split_rng);
}

}  // namespace convfeat
