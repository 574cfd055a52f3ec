#pragma once

#include "sizemorph/data/sample.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sizemorph::data {

/// Gaussian hip-width distribution, in fractions of the image width.
struct SizeDistribution {
    double hip_mean = 0.28;
    double hip_sd = 0.02;
};

/// Body-side generation parameters: per-size hip distributions and pose jitter.
struct BodyParams {
    SizeDistribution small{0.28, 0.02};
    SizeDistribution plus{0.38, 0.02};
    double max_rotation_deg = 5.0;
    double max_center_shift = 0.03;
    double min_arm_angle_deg = 3.0;
    double max_arm_angle_deg = 14.0;
    int resolution = 64;

    const SizeDistribution& distribution(SizeLabel size) const { return size == SizeLabel::Small ? small : plus; }
};

/// Non-fatal problems with a generation config.
std::vector<std::string> validate(const BodyParams& params);

/// Draws a random garment pattern (0..4 stripes, contrasting colors).
GarmentSpec random_garment(std::mt19937_64& rng);

/// Render one size-A (small) and one size-B (plus) image of the same garment.
///
/// Everything except the garment pattern (pose, skin, hair, background,
/// lighting, lower garment) is drawn independently for the two images.
/// Deterministic for a fixed seed.
PairedSample generate_pair(const GarmentSpec& garment, const BodyParams& body, std::uint64_t seed);

/// Per-sample seed derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace sizemorph::data
