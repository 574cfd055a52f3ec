#pragma once

#include "sizemorph/deformation/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace sizemorph::io {

/// 8-bit raster as read from or written to disk, row-major, interleaved.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 (indices or gray) or 3 (RGB)
    std::vector<std::uint8_t> data;
};

using Palette = std::vector<std::array<std::uint8_t, 3>>;

void write_png_rgb(const std::filesystem::path& path, const Raster& rgb);
void write_png_indexed(const std::filesystem::path& path, const Raster& indices, const Palette& palette);

/// Reads any PNG as 8-bit RGB (palette expanded, alpha dropped).
Raster read_png_rgb(const std::filesystem::path& path);
/// Reads the raw palette indices of a paletted PNG; grayscale 8-bit PNGs are
/// accepted as-is so that externally produced label maps also load.
Raster read_png_indices(const std::filesystem::path& path);

/// Fixed palette for the nine segment classes.
const Palette& segment_palette();

Raster to_raster(const Image& image);
Image to_image(const Raster& rgb);

void save_image(const std::filesystem::path& path, const Image& image);
Image load_image(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const SegmentationMap& seg);
SegmentationMap load_labels(const std::filesystem::path& path);

/// Quantize to the 8-bit grid so that save/load round-trips exactly.
torch::Tensor quantize_unit(const torch::Tensor& values);

}  // namespace sizemorph::io
