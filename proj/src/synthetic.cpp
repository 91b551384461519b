#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mlgt/data.hpp"
#include "mlgt/errors.hpp"

namespace mlgt {

namespace {

struct Point {
    double x, y;
};

using Path = std::vector<Point>;

/// Shape geometry in a [-1,1] frame: closed rings are filled (even-odd) in
/// images and outlined in sketches; open strokes are drawn thick in images
/// and thin in sketches.
struct ShapeGeometry {
    std::vector<Path> rings;
    std::vector<Path> strokes;
};

Path regular(std::size_t n, double r, double phase = 0.0) {
    Path p;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = phase + 2.0 * std::numbers::pi * double(i) / double(n);
        p.push_back({r * std::cos(a), r * std::sin(a)});
    }
    return p;
}

Path rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

ShapeGeometry shape_for(std::size_t cls) {
    constexpr double pi = std::numbers::pi;
    ShapeGeometry g;
    switch (cls) {
        case 0:  // circle
            g.rings.push_back(regular(40, 0.9));
            break;
        case 1:  // square
            g.rings.push_back(rect(-0.75, -0.75, 0.75, 0.75));
            break;
        case 2:  // triangle
            g.rings.push_back(regular(3, 0.95, -pi / 2));
            break;
        case 3:  // cross
            g.rings.push_back({{-0.3, -0.9}, {0.3, -0.9}, {0.3, -0.3}, {0.9, -0.3}, {0.9, 0.3}, {0.3, 0.3},
                               {0.3, 0.9}, {-0.3, 0.9}, {-0.3, 0.3}, {-0.9, 0.3}, {-0.9, -0.3}, {-0.3, -0.3}});
            break;
        case 4: {  // star
            Path p;
            for (std::size_t i = 0; i < 10; ++i) {
                const double r = i % 2 == 0 ? 0.95 : 0.4;
                const double a = -pi / 2 + pi * double(i) / 5.0;
                p.push_back({r * std::cos(a), r * std::sin(a)});
            }
            g.rings.push_back(p);
            break;
        }
        case 5:  // ring
            g.rings.push_back(regular(40, 0.9));
            g.rings.push_back(regular(40, 0.5));
            break;
        case 6:  // parallel bars
            g.rings.push_back(rect(-0.8, -0.9, -0.3, 0.9));
            g.rings.push_back(rect(0.3, -0.9, 0.8, 0.9));
            break;
        case 7:  // grid
            for (double v : {-0.6, 0.0, 0.6}) {
                g.strokes.push_back({{v, -0.85}, {v, 0.85}});
                g.strokes.push_back({{-0.85, v}, {0.85, v}});
            }
            break;
        case 8:  // T-junction
            g.strokes.push_back({{-0.85, -0.65}, {0.85, -0.65}});
            g.strokes.push_back({{0.0, -0.65}, {0.0, 0.9}});
            break;
        case 9: {  // S-curve
            Path p;
            for (int i = 0; i <= 30; ++i) {
                const double t = -0.85 + 1.7 * i / 30.0;
                p.push_back({0.6 * std::sin(pi * t / 0.85), t});
            }
            g.strokes.push_back(p);
            break;
        }
        case 10:  // diamond
            g.rings.push_back({{0.0, -0.95}, {0.5, 0.0}, {0.0, 0.95}, {-0.5, 0.0}});
            break;
        case 11: {  // spiral
            Path p;
            for (int i = 0; i <= 80; ++i) {
                const double t = 4.0 * pi * i / 80.0;
                const double r = 0.1 + 0.8 * t / (4.0 * pi);
                p.push_back({r * std::cos(t), r * std::sin(t)});
            }
            g.strokes.push_back(p);
            break;
        }
        default:
            throw ContractError("no synthetic shape for class index " + std::to_string(cls));
    }
    return g;
}

struct Placement {
    double cx, cy, radius, angle;

    Point apply(Point p) const {
        const double c = std::cos(angle), s = std::sin(angle);
        return {cx + radius * (c * p.x - s * p.y), cy + radius * (s * p.x + c * p.y)};
    }
};

Placement random_placement(std::size_t size, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> jitter(-0.05, 0.05), scale(0.34, 0.4), angle(-0.15, 0.15);
    const double half = double(size) / 2.0;
    return {half + jitter(rng) * double(size), half + jitter(rng) * double(size), scale(rng) * double(size), angle(rng)};
}

double segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
    return std::sqrt(ex * ex + ey * ey);
}

bool inside_even_odd(Point p, const std::vector<Path>& rings) {
    bool inside = false;
    for (const auto& ring : rings) {
        for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
            const Point a = ring[i], b = ring[j];
            if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
        }
    }
    return inside;
}

struct Segment {
    Point a, b;
};

/// Fraction of a 4x4 supersample grid inside the shape.
template <typename Fn>
std::vector<double> coverage(std::size_t size, Fn&& covered) {
    constexpr int ss = 4;
    std::vector<double> out(size * size, 0.0);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            int hits = 0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx) {
                    const Point p{double(x) + (sx + 0.5) / ss, double(y) + (sy + 0.5) / ss};
                    if (covered(p)) ++hits;
                }
            out[y * size + x] = double(hits) / (ss * ss);
        }
    return out;
}

std::vector<Segment> segments_of(const std::vector<Path>& paths, bool closed) {
    std::vector<Segment> segs;
    for (const auto& p : paths) {
        for (std::size_t i = 0; i + 1 < p.size(); ++i) segs.push_back({p[i], p[i + 1]});
        if (closed && p.size() > 2) segs.push_back({p.back(), p.front()});
    }
    return segs;
}

bool near_any(Point p, const std::vector<Segment>& segs, double half_width) {
    for (const auto& s : segs)
        if (segment_distance(p, s.a, s.b) <= half_width) return true;
    return false;
}

std::vector<Path> transform(const std::vector<Path>& paths, const Placement& pl) {
    std::vector<Path> out;
    for (const auto& p : paths) {
        Path q;
        for (const auto& pt : p) q.push_back(pl.apply(pt));
        out.push_back(std::move(q));
    }
    return out;
}

Image render_image(const ShapeGeometry& g, std::size_t size, std::mt19937_64& rng) {
    const Placement pl = random_placement(size, rng);
    const auto rings = transform(g.rings, pl);
    const auto strokes = segments_of(transform(g.strokes, pl), false);
    const double half_thickness = 0.11 * pl.radius;
    const auto cov = coverage(size, [&](Point p) {
        return (!rings.empty() && inside_even_odd(p, rings)) || near_any(p, strokes, half_thickness);
    });

    // textured background: coarse value noise plus per-pixel grain
    std::uniform_real_distribution<double> base(50.0, 110.0), coarse(-25.0, 25.0), grain(-10.0, 10.0),
        fill(170.0, 230.0), tint(-20.0, 20.0);
    const double b0 = base(rng), f0 = fill(rng);
    const double bg[3] = {b0 + tint(rng), b0 + tint(rng), b0 + tint(rng)};
    const double fg[3] = {f0 + tint(rng), f0 + tint(rng), f0 + tint(rng)};
    constexpr std::size_t cells = 8;
    std::vector<double> lattice((cells + 1) * (cells + 1));
    for (auto& v : lattice) v = coarse(rng);

    Image img(size, size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const double u = double(x) / double(size) * cells, v = double(y) / double(size) * cells;
            const std::size_t i = std::min<std::size_t>(std::size_t(u), cells - 1);
            const std::size_t j = std::min<std::size_t>(std::size_t(v), cells - 1);
            const double fu = u - double(i), fv = v - double(j);
            const double n = lattice[j * (cells + 1) + i] * (1 - fu) * (1 - fv) +
                             lattice[j * (cells + 1) + i + 1] * fu * (1 - fv) +
                             lattice[(j + 1) * (cells + 1) + i] * (1 - fu) * fv +
                             lattice[(j + 1) * (cells + 1) + i + 1] * fu * fv;
            const double a = cov[y * size + x];
            auto* px = img.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                const double value = (bg[c] + n) * (1 - a) + fg[c] * a + grain(rng);
                px[c] = static_cast<std::uint8_t>(std::clamp(std::round(value), 0.0, 255.0));
            }
        }
    return img;
}

Image render_sketch(const ShapeGeometry& g, std::size_t size, std::mt19937_64& rng) {
    const Placement pl = random_placement(size, rng);
    std::normal_distribution<double> wobble(0.0, 0.03);
    auto jitter = [&](std::vector<Path> paths) {
        for (auto& p : paths)
            for (auto& pt : p) pt = {pt.x + wobble(rng), pt.y + wobble(rng)};
        return paths;
    };
    auto segs = segments_of(transform(jitter(g.rings), pl), true);
    const auto open = segments_of(transform(jitter(g.strokes), pl), false);
    segs.insert(segs.end(), open.begin(), open.end());
    std::uniform_real_distribution<double> width(1.0, 2.5);
    const double half_width = width(rng) * double(size) / 64.0 / 2.0;
    const auto cov = coverage(size, [&](Point p) { return near_any(p, segs, half_width); });

    Image img(size, size);
    for (std::size_t i = 0; i < size * size; ++i) {
        const auto v = static_cast<std::uint8_t>(std::round(255.0 * (1.0 - cov[i])));
        img.rgb[3 * i] = img.rgb[3 * i + 1] = img.rgb[3 * i + 2] = v;
    }
    return img;
}

std::string numbered(std::size_t i) {
    std::string s = std::to_string(i);
    return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

}  // namespace

const std::vector<std::string>& synthetic_vocabulary() {
    static const std::vector<std::string> names{"circle", "square",     "triangle", "cross",   "star",    "ring",
                                                "parallel-bars", "grid", "t-junction", "s-curve", "diamond", "spiral"};
    return names;
}

Dataset generate_synthetic(const SyntheticOptions& options) {
    const auto& vocab = synthetic_vocabulary();
    if (options.classes > vocab.size()) {
        throw ContractError("generate_synthetic: at most " + std::to_string(vocab.size()) + " classes, asked for " +
                            std::to_string(options.classes));
    }
    if (options.classes == 0 || options.size == 0) throw ContractError("generate_synthetic: empty request");
    std::mt19937_64 rng(options.seed);
    Dataset ds;
    for (std::size_t c = 0; c < options.classes; ++c) {
        const auto& name = vocab[c];
        const auto geometry = shape_for(c);
        ds.classes.push_back(name);
        for (std::size_t i = 0; i < options.sketches_per_class; ++i) {
            ds.items.push_back({"sketches/" + name + "/" + name + "_" + numbered(i) + ".png", Modality::Sketch, name, {},
                                std::make_shared<const Image>(render_sketch(geometry, options.size, rng))});
        }
        for (std::size_t i = 0; i < options.images_per_class; ++i) {
            ds.items.push_back({"images/" + name + "/" + name + "_" + numbered(i) + ".png", Modality::Image, name, {},
                                std::make_shared<const Image>(render_image(geometry, options.size, rng))});
        }
    }
    std::sort(ds.classes.begin(), ds.classes.end());
    std::sort(ds.items.begin(), ds.items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    ds.validate();
    return ds;
}

}  // namespace mlgt
