#include "sizemorph/deformation/field_ops.hpp"

#include "sizemorph/deformation/warp.hpp"
#include "sizemorph/errors.hpp"

#include <numeric>
#include <string>

namespace sizemorph {

namespace F = torch::nn::functional;

DeformationField identity_field(int height, int width) { return DeformationField::zeros(height, width); }

torch::Tensor upsample_field(const torch::Tensor& field, int target_h, int target_w) {
    if (field.dim() != 4 || field.size(1) != 2) throw ShapeError("upsample_field expects [N, 2, h, w]");
    const auto h = field.size(2);
    const auto w = field.size(3);
    if (target_h < h || target_w < w) {
        throw DimensionError("upsample_field cannot downsample " + std::to_string(h) + "x" + std::to_string(w) +
                             " to " + std::to_string(target_h) + "x" + std::to_string(target_w));
    }
    if (target_h == h && target_w == w) return field;
    return F::interpolate(field, F::InterpolateFuncOptions()
                                     .size(std::vector<int64_t>{target_h, target_w})
                                     .mode(torch::kBilinear)
                                     .align_corners(false));
}

DeformationField upsample_field(const DeformationField& field, int target_h, int target_w) {
    return DeformationField(upsample_field(field.tensor().unsqueeze(0), target_h, target_w).squeeze(0));
}

torch::Tensor compose_pyramid(std::span<const torch::Tensor> levels) {
    if (levels.empty()) throw ShapeError("compose_pyramid needs at least one level");
    for (size_t i = 1; i < levels.size(); ++i) {
        const auto& prev = levels[i - 1];
        const auto& cur = levels[i];
        if (cur.size(2) != 2 * prev.size(2) || cur.size(3) != 2 * prev.size(3)) {
            throw ShapeError("compose_pyramid: level " + std::to_string(i) + " does not double level " +
                             std::to_string(i - 1));
        }
    }
    const auto& finest = levels.back();
    const int out_h = static_cast<int>(finest.size(2));
    const int out_w = static_cast<int>(finest.size(3));
    torch::Tensor total = finest;
    for (size_t i = 0; i + 1 < levels.size(); ++i) {
        total = total + upsample_field(levels[i], out_h, out_w);
    }
    return total;
}

DeformationField compose_pyramid(std::span<const DeformationField> levels) {
    std::vector<torch::Tensor> batched;
    batched.reserve(levels.size());
    for (const auto& l : levels) batched.push_back(l.tensor().unsqueeze(0));
    return DeformationField(compose_pyramid(std::span<const torch::Tensor>(batched)).squeeze(0));
}

torch::Tensor smoothness_loss(const torch::Tensor& field) {
    auto f = field.dim() == 3 ? field.unsqueeze(0) : field;
    if (f.dim() != 4 || f.size(1) != 2) throw ShapeError("smoothness_loss expects [2, H, W] or [N, 2, H, W]");
    auto loss = torch::zeros({}, f.options());
    if (f.size(3) > 1) {
        auto d = f.narrow(3, 1, f.size(3) - 1) - f.narrow(3, 0, f.size(3) - 1);
        loss = loss + d.pow(2).sum(1).mean();
    }
    if (f.size(2) > 1) {
        auto d = f.narrow(2, 1, f.size(2) - 1) - f.narrow(2, 0, f.size(2) - 1);
        loss = loss + d.pow(2).sum(1).mean();
    }
    return loss;
}

double smoothness_loss(const DeformationField& field) {
    return smoothness_loss(field.tensor().to(torch::kDouble)).item<double>();
}

DeformationField single_axis_field(int height, int width, double ratio) {
    if (!(ratio > 0.0)) throw ArgumentError("single-axis ratio must be positive");
    if (height < 1 || width < 1) throw DimensionError("field dimensions must be positive");
    // Normalized pixel-center x coordinate, scaled so output x samples x / ratio.
    auto xs = (torch::arange(width, torch::kDouble) + 0.5) * (2.0 / width) - 1.0;
    auto dx = (xs * (1.0 / ratio - 1.0)).to(torch::kFloat).view({1, width}).expand({height, width});
    auto dy = torch::zeros({height, width});
    return DeformationField(torch::stack({dx, dy}));
}

Image single_axis_resize(const Image& image, double ratio) {
    return warp_image(image, single_axis_field(image.height(), image.width(), ratio));
}

double estimate_hip_ratio(std::span<const double> hip_distances_a, std::span<const double> hip_distances_b) {
    if (hip_distances_a.empty() || hip_distances_b.empty()) {
        throw ArgumentError("hip distance lists must be non-empty");
    }
    for (double d : hip_distances_a) {
        if (!(d > 0.0)) throw ArgumentError("hip distances must be positive");
    }
    for (double d : hip_distances_b) {
        if (!(d > 0.0)) throw ArgumentError("hip distances must be positive");
    }
    const double mean_a = std::accumulate(hip_distances_a.begin(), hip_distances_a.end(), 0.0) /
                          static_cast<double>(hip_distances_a.size());
    const double mean_b = std::accumulate(hip_distances_b.begin(), hip_distances_b.end(), 0.0) /
                          static_cast<double>(hip_distances_b.size());
    return mean_b / mean_a;
}

}  // namespace sizemorph
