#pragma once

#include "sizemorph/deformation/types.hpp"

#include <span>
#include <vector>

namespace sizemorph {

DeformationField identity_field(int height, int width);

/// Bilinear upsampling with pixel-center alignment. Normalized units need no
/// magnitude rescale. Throws DimensionError when asked to shrink.
DeformationField upsample_field(const DeformationField& field, int target_h, int target_w);

/// Batched form on [N, 2, h, w] tensors.
torch::Tensor upsample_field(const torch::Tensor& field, int target_h, int target_w);

/// Sum of every level upsampled straight to the finest resolution.
///
/// Each level must exactly double the previous one in both dimensions,
/// otherwise ShapeError.
DeformationField compose_pyramid(std::span<const DeformationField> levels);

/// Batched form; each element is [N, 2, r, r].
torch::Tensor compose_pyramid(std::span<const torch::Tensor> levels);

/// Mean squared forward difference, summed over both components, per axis,
/// and then over the two axes. Accepts [2, H, W] or [N, 2, H, W]; batched
/// input is averaged over the batch. Differentiable.
torch::Tensor smoothness_loss(const torch::Tensor& field);
double smoothness_loss(const DeformationField& field);

/// Horizontal scaling about the vertical centerline by `ratio`, as a field.
DeformationField single_axis_field(int height, int width, double ratio);

/// Scale image content horizontally by `ratio` on an unchanged canvas.
Image single_axis_resize(const Image& image, double ratio);

/// Ratio of mean hip-keypoint distances, target over source.
double estimate_hip_ratio(std::span<const double> hip_distances_a,
                          std::span<const double> hip_distances_b);

}  // namespace sizemorph
