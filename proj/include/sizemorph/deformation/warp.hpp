#pragma once

#include "sizemorph/deformation/types.hpp"

#include <torch/torch.h>

namespace sizemorph {

/// Differentiable bilinear resampling (spatial transformer).
///
/// `source` is [N, C, H, W] and `field` is [N, 2, H, W] in normalized units.
/// Output pixel (x, y) reads the source at (x + dx * W / 2, y + dy * H / 2) in
/// pixel-center coordinates, clamping sample positions to the border. A zero
/// displacement reproduces the source bitwise. Gradients flow to both the
/// source values and the displacements; positions clamped at the border get
/// zero displacement gradient. Supports float and double.
torch::Tensor warp(const torch::Tensor& source, const torch::Tensor& field);

Image warp_image(const Image& image, const DeformationField& field);

/// Channel-wise warp of the soft segmentation. Channel sums are preserved
/// because every output pixel is a convex combination of source pixels.
SegmentationMap warp_segmentation(const SegmentationMap& seg, const DeformationField& field);

}  // namespace sizemorph
