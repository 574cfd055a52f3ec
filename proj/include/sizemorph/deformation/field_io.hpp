#pragma once

#include "sizemorph/deformation/types.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace sizemorph {

/// `.dfield` files: int32 height, int32 width, then H*W*2 float32 values in
/// row-major (y, x, component) order with dx before dy. Little-endian.
void save_dfield(const std::filesystem::path& path, const DeformationField& field);
DeformationField load_dfield(const std::filesystem::path& path);

/// One arrow of a quiver plot, in field pixel coordinates.
struct QuiverArrow {
    double x = 0;   // pixel-center column of the sample point
    double y = 0;
    double u = 0;   // apparent content motion in pixels (negated sampling offset)
    double v = 0;
};

/// Arrows for every `stride`-th pixel in both directions, starting at (0, 0).
std::vector<QuiverArrow> quiver_arrows(const DeformationField& field, int stride = 20);

/// Writes a quiver plot PNG. The canvas is upscaled so its longer side is at
/// least 512 px; zero-length arrows are drawn as dots. When `background` is
/// given (same size as the field) it is drawn underneath.
void visualize_field(const DeformationField& field, const std::filesystem::path& out_path, int stride = 20,
                     const std::optional<Image>& background = std::nullopt);

}  // namespace sizemorph
