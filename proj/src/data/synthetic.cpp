#include "sizemorph/data/synthetic.hpp"

#include "sizemorph/errors.hpp"
#include "sizemorph/io/png.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace sizemorph::data {

namespace {

// Body geometry in normalized canvas coordinates: u to the right, v down,
// chin at v = 0 and the knee line at v = 1.
struct Body {
    double cx = 0.5;
    double rotation = 0.0;  // radians, about the canvas center
    double neck_hw = 0.045;
    double shoulder_v = 0.10;
    double shoulder_hw = 0.14;
    double waist_v = 0.42;
    double waist_hw = 0.12;
    double hip_v = 0.60;
    double hip_hw = 0.14;
    double hem_v = 0.6;
    double waistband_v = 0.48;
    double shorts_v = 0.85;
    double flare = 0.05;
    double arm_w = 0.06;
    double arm_len = 0.62;
    double sleeve_len = 0.25;  // fraction of the arm covered by the sleeve
    double arm_angle[2] = {0.1, 0.1};
    bool hair = false;
    double hair_len = 0.15;
    bool necklace = false;
    int bracelet_arm = -1;
    double lighting = 1.0;
    Color skin{}, hair_color{}, lower_color{}, bg_top{}, bg_bottom{}, accessory_color{};
};

double lerp(double a, double b, double t) { return a + (b - a) * std::clamp(t, 0.0, 1.0); }

double torso_half_width(const Body& b, double v) {
    const double s0 = b.shoulder_v - 0.03;
    const double s1 = b.shoulder_v + 0.03;
    if (v < s0) return b.neck_hw;
    if (v < s1) return lerp(b.neck_hw, b.shoulder_hw, (v - s0) / (s1 - s0));
    if (v < b.waist_v) return lerp(b.shoulder_hw, b.waist_hw, (v - s1) / (b.waist_v - s1));
    if (v < b.hip_v) return lerp(b.waist_hw, b.hip_hw, (v - b.waist_v) / (b.hip_v - b.waist_v));
    return b.hip_hw;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Color random_color(std::mt19937_64& rng, double lo, double hi) {
    return {static_cast<float>(uniform(rng, lo, hi)), static_cast<float>(uniform(rng, lo, hi)),
            static_cast<float>(uniform(rng, lo, hi))};
}

double intensity(const Color& c) { return (c[0] + c[1] + c[2]) / 3.0; }

Color jitter(std::mt19937_64& rng, Color c, double amount) {
    for (auto& v : c) v = static_cast<float>(std::clamp(v + uniform(rng, -amount, amount), 0.0, 1.0));
    return c;
}

Body sample_body(const BodyParams& params, SizeLabel size, std::mt19937_64& rng) {
    static const Color kSkinTones[] = {
        {0.96f, 0.80f, 0.69f}, {0.89f, 0.69f, 0.55f}, {0.78f, 0.56f, 0.42f},
        {0.62f, 0.42f, 0.30f}, {0.45f, 0.30f, 0.21f}, {0.33f, 0.22f, 0.16f},
    };
    static const Color kHair[] = {
        {0.08f, 0.06f, 0.05f}, {0.30f, 0.19f, 0.10f}, {0.62f, 0.45f, 0.23f}, {0.85f, 0.72f, 0.45f},
    };
    const auto& dist = params.distribution(size);
    Body b;
    const double hip = std::max(0.08, std::normal_distribution<double>(dist.hip_mean, dist.hip_sd)(rng));
    b.hip_hw = hip / 2.0;
    b.shoulder_hw = b.hip_hw * uniform(rng, 0.95, 1.05);
    b.waist_hw = b.hip_hw * uniform(rng, 0.80, 0.90);
    b.neck_hw = 0.04 + 0.05 * b.hip_hw;
    b.arm_w = hip * uniform(rng, 0.20, 0.24);
    b.cx = 0.5 + uniform(rng, -params.max_center_shift, params.max_center_shift);
    const double max_rot = params.max_rotation_deg * std::numbers::pi / 180.0;
    b.rotation = uniform(rng, -max_rot, max_rot);
    b.shoulder_v = uniform(rng, 0.09, 0.12);
    b.waist_v = uniform(rng, 0.40, 0.45);
    b.hip_v = uniform(rng, 0.58, 0.63);
    b.waistband_v = uniform(rng, 0.46, 0.50);
    b.shorts_v = uniform(rng, 0.80, 0.90);
    b.flare = uniform(rng, 0.0, 0.12);
    b.arm_len = uniform(rng, 0.58, 0.66);
    b.sleeve_len = uniform(rng, 0.15, 0.35);
    for (double& a : b.arm_angle) {
        a = uniform(rng, params.min_arm_angle_deg, params.max_arm_angle_deg) * std::numbers::pi / 180.0;
    }
    b.hair = uniform(rng, 0.0, 1.0) < 0.7;
    b.hair_len = uniform(rng, 0.08, 0.22);
    b.necklace = uniform(rng, 0.0, 1.0) < 0.3;
    b.bracelet_arm = uniform(rng, 0.0, 1.0) < 0.3 ? static_cast<int>(rng() % 2) : -1;
    b.lighting = uniform(rng, 0.95, 1.05);
    b.skin = jitter(rng, kSkinTones[rng() % std::size(kSkinTones)], 0.03);
    b.hair_color = jitter(rng, kHair[rng() % std::size(kHair)], 0.03);
    b.lower_color = random_color(rng, 0.05, 0.6);
    b.bg_top = random_color(rng, 0.55, 0.98);
    b.bg_bottom = jitter(rng, b.bg_top, 0.08);
    b.accessory_color = random_color(rng, 0.6, 1.0);
    return b;
}

struct Shaded {
    Segment label;
    Color color;
};

Color garment_color(const GarmentSpec& g, double top_v, double hem_v, double v) {
    if (g.stripe_count <= 0) return g.base_color;
    // 2k + 1 equal bands; odd bands carry the stripe color so the top and
    // bottom edges stay in the base color.
    const int bands = 2 * g.stripe_count + 1;
    const int band = std::clamp(static_cast<int>(std::floor((v - top_v) / (hem_v - top_v) * bands)), 0, bands - 1);
    return band % 2 ? g.stripe_color : g.base_color;
}

Shaded shade(const Body& b, const GarmentSpec& g, double u, double v) {
    const double t_bg = std::clamp(v, 0.0, 1.0);
    Shaded s{Segment::Background,
             {static_cast<float>(lerp(b.bg_top[0], b.bg_bottom[0], t_bg)),
              static_cast<float>(lerp(b.bg_top[1], b.bg_bottom[1], t_bg)),
              static_cast<float>(lerp(b.bg_top[2], b.bg_bottom[2], t_bg))}};
    const double du = u - b.cx;
    const double garment_top = b.shoulder_v - 0.03;

    if (v >= b.shorts_v - 0.02) {
        for (int side : {-1, 1}) {
            const double center = b.cx + side * b.hip_hw * 0.5;
            const double half = b.hip_hw * 0.47 * (1.0 - 0.3 * (v - b.shorts_v));
            if (std::abs(u - center) <= half) s = {Segment::Legs, b.skin};
        }
    }
    if (v >= b.waistband_v && v <= b.shorts_v) {
        const double half = v < b.hip_v ? torso_half_width(b, v) * 1.03 : b.hip_hw * 1.04 + b.flare * (v - b.hip_v);
        if (std::abs(du) <= half) s = {Segment::LowerGarment, b.lower_color};
    }
    if (v >= 0.0 && v <= b.waistband_v + 0.02 && std::abs(du) <= torso_half_width(b, v)) {
        s = {Segment::TorsoSkin, b.skin};
    }
    if (v >= garment_top && v <= b.hem_v) {
        const double half = torso_half_width(b, v) * 1.04 + 0.004;
        const double nu = du / 0.07;
        const double nv = (v - garment_top) / 0.06;
        const bool in_neckline = nu * nu + nv * nv < 1.0;
        if (std::abs(du) <= half && !in_neckline) s = {Segment::UpperGarment, garment_color(g, garment_top, b.hem_v, v)};
    }
    if (b.necklace) {
        const double nu = du / 0.08;
        const double nv = (v - garment_top) / 0.07;
        const double r = std::sqrt(nu * nu + nv * nv);
        if (v > garment_top && r > 0.86 && r < 1.0) s = {Segment::Accessories, b.accessory_color};
    }
    for (int arm = 0; arm < 2; ++arm) {
        const double side = arm == 0 ? -1.0 : 1.0;
        const double px = b.cx + side * (b.shoulder_hw - b.arm_w * 0.5);
        const double py = b.shoulder_v + 0.01;
        const double dx = side * std::sin(b.arm_angle[arm]);
        const double dy = std::cos(b.arm_angle[arm]);
        // Projection onto the arm axis, as a fraction of its length.
        const double t = std::clamp(((u - px) * dx + (v - py) * dy) / b.arm_len, 0.0, 1.0);
        const double qx = px + dx * t * b.arm_len;
        const double qy = py + dy * t * b.arm_len;
        const double half = b.arm_w * 0.5 * (1.0 - 0.25 * t);
        if (std::hypot(u - qx, v - qy) > half) continue;
        if (t < b.sleeve_len) {
            s = {Segment::UpperGarment, garment_color(g, garment_top, b.hem_v, v)};
        } else if (arm == b.bracelet_arm && t > 0.84 && t < 0.89) {
            s = {Segment::Accessories, b.accessory_color};
        } else {
            s = {Segment::Arms, b.skin};
        }
    }
    if (b.hair && v < b.hair_len) {
        const double a = std::abs(du);
        if (a >= b.neck_hw + 0.004 && a <= b.neck_hw + 0.06) s = {Segment::Hair, b.hair_color};
    }
    return s;
}

struct Rendered {
    torch::Tensor image;   // [3, R, R]
    torch::Tensor labels;  // [R, R] uint8
    Keypoints keypoints;
};

Rendered render(const Body& b, const GarmentSpec& g, int res) {
    auto image = torch::empty({3, res, res});
    auto labels = torch::empty({res, res}, torch::kUInt8);
    auto img = image.accessor<float, 3>();
    auto lab = labels.accessor<std::uint8_t, 2>();
    const double c = std::cos(b.rotation);
    const double s = std::sin(b.rotation);
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            // Inverse-rotate the pixel center into body coordinates.
            const double ou = (x + 0.5) / res - 0.5;
            const double ov = (y + 0.5) / res - 0.5;
            const double u = c * ou + s * ov + 0.5;
            const double v = -s * ou + c * ov + 0.5;
            const auto sh = shade(b, g, u, v);
            lab[y][x] = static_cast<std::uint8_t>(sh.label);
            for (int ch = 0; ch < 3; ++ch) img[ch][y][x] = static_cast<float>(sh.color[ch] * b.lighting);
        }
    }
    auto to_pixels = [&](double u, double v) {
        const double ou = u - 0.5;
        const double ov = v - 0.5;
        return Point{(c * ou - s * ov + 0.5) * res, (s * ou + c * ov + 0.5) * res};
    };
    Rendered r;
    r.image = io::quantize_unit(image);
    r.labels = labels;
    r.keypoints.left_hip = to_pixels(b.cx - b.hip_hw, b.hip_v);
    r.keypoints.right_hip = to_pixels(b.cx + b.hip_hw, b.hip_v);
    r.keypoints.chin = to_pixels(b.cx, 0.0);
    r.keypoints.knee_line = to_pixels(b.cx, 1.0);
    for (Point* p : {&r.keypoints.chin, &r.keypoints.knee_line}) {
        p->x = std::clamp(p->x, 0.0, static_cast<double>(res));
        p->y = std::clamp(p->y, 0.0, static_cast<double>(res));
    }
    return r;
}

}  // namespace

std::vector<std::string> validate(const BodyParams& params) {
    if (params.resolution < 8) throw ConfigError("resolution must be at least 8");
    if (!(params.small.hip_mean > 0.0) || !(params.plus.hip_mean > 0.0) || params.small.hip_sd < 0.0 ||
        params.plus.hip_sd < 0.0) {
        throw ConfigError("hip distributions need positive means and non-negative spreads");
    }
    if (!(params.small.hip_mean < params.plus.hip_mean)) {
        throw ConfigError("small hip mean must be strictly below the plus hip mean");
    }
    std::vector<std::string> warnings;
    const double gap = params.plus.hip_mean - params.small.hip_mean;
    const double spread = std::hypot(params.small.hip_sd, params.plus.hip_sd);
    if (gap < 3.0 * spread) {
        warnings.push_back("size distributions overlap: mean gap is below 3 standard deviations of the difference");
    }
    return warnings;
}

GarmentSpec random_garment(std::mt19937_64& rng) {
    GarmentSpec g;
    g.stripe_count = static_cast<int>(rng() % 5);
    g.base_color = random_color(rng, 0.05, 0.95);
    g.stripe_color = random_color(rng, 0.05, 0.95);
    while (std::abs(intensity(g.stripe_color) - intensity(g.base_color)) < 0.3) {
        g.stripe_color = random_color(rng, 0.05, 0.95);
    }
    g.top_length = uniform(rng, 0.55, 0.68);
    return g;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    // splitmix64 over the combined value
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

PairedSample generate_pair(const GarmentSpec& garment, const BodyParams& body, std::uint64_t seed) {
    validate(body);
    std::mt19937_64 rng(seed);
    PairedSample p;
    p.garment = garment;
    char gid[24];
    std::snprintf(gid, sizeof(gid), "g%016llx", static_cast<unsigned long long>(derive_seed(seed, 0)));
    p.garment_id = gid;
    p.size_a = SizeLabel::Small;
    p.size_b = SizeLabel::Plus;
    for (int side = 0; side < 2; ++side) {
        auto b = sample_body(body, side == 0 ? p.size_a : p.size_b, rng);
        b.hem_v = garment.top_length;
        auto r = render(b, garment, body.resolution);
        auto seg = SegmentationMap::from_labels(r.labels);
        if (side == 0) {
            p.image_a = Image(r.image);
            p.seg_a = seg;
            p.keypoints_a = r.keypoints;
        } else {
            p.image_b = Image(r.image);
            p.seg_b = seg;
            p.keypoints_b = r.keypoints;
        }
    }
    return p;
}

}  // namespace sizemorph::data
