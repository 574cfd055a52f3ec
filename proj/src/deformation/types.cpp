#include "sizemorph/deformation/types.hpp"

#include "sizemorph/errors.hpp"

#include <string>

namespace sizemorph {

namespace {

std::string shape_str(const torch::Tensor& t) {
    std::string s = "[";
    for (int64_t i = 0; i < t.dim(); ++i) {
        if (i) s += ", ";
        s += std::to_string(t.size(i));
    }
    return s + "]";
}

}  // namespace

Image::Image(torch::Tensor pixels) : pixels_(std::move(pixels)) {
    if (pixels_.dim() != 3 || pixels_.size(0) != 3) {
        throw ShapeError("image tensor must be [3, H, W], got " + shape_str(pixels_));
    }
    if (pixels_.size(1) < 1 || pixels_.size(2) < 1) {
        throw DimensionError("image must be at least 1x1");
    }
    if (!pixels_.is_floating_point()) {
        throw ArgumentError("image tensor must be floating point");
    }
    pixels_ = pixels_.contiguous();
}

Image Image::filled(int height, int width, float r, float g, float b) {
    if (height < 1 || width < 1) throw DimensionError("image must be at least 1x1");
    auto t = torch::empty({3, height, width});
    t[0].fill_(r);
    t[1].fill_(g);
    t[2].fill_(b);
    return Image(t);
}

Image Image::clamped() const { return Image(pixels_.clamp(0.0, 1.0)); }

SegmentationMap SegmentationMap::from_labels(const torch::Tensor& labels) {
    if (labels.dim() != 2) throw ShapeError("label map must be [H, W], got " + shape_str(labels));
    if (labels.size(0) < 1 || labels.size(1) < 1) throw DimensionError("label map must be at least 1x1");
    auto l = labels.to(torch::kLong);
    if (l.min().item<int64_t>() < 0 || l.max().item<int64_t>() >= kNumClasses) {
        throw ArgumentError("segment labels must lie in 0..8");
    }
    SegmentationMap m;
    m.soft_ = torch::one_hot(l, kNumClasses).permute({2, 0, 1}).to(torch::kFloat).contiguous();
    m.labels_ = l.to(torch::kUInt8).contiguous();
    return m;
}

SegmentationMap SegmentationMap::from_soft(torch::Tensor soft) {
    if (soft.dim() != 3 || soft.size(0) != kNumClasses) {
        throw ShapeError("soft segmentation must be [9, H, W], got " + shape_str(soft));
    }
    if (!soft.is_floating_point()) throw ArgumentError("soft segmentation must be floating point");
    if (soft.min().item<double>() < -1e-6) throw ArgumentError("soft segmentation has negative mass");
    const double dev = (soft.sum(0) - 1.0).abs().max().item<double>();
    if (dev > 1e-5) throw ArgumentError("soft segmentation channels must sum to one per pixel");
    SegmentationMap m;
    m.soft_ = soft.contiguous();
    m.labels_ = soft.argmax(0).to(torch::kUInt8).contiguous();
    return m;
}

torch::Tensor SegmentationMap::mask(Segment segment) const {
    return labels_ == static_cast<int64_t>(segment);
}

DeformationField::DeformationField(torch::Tensor displacements) : disp_(std::move(displacements)) {
    if (disp_.dim() != 3 || disp_.size(0) != 2) {
        throw ShapeError("deformation field must be [2, H, W], got " + shape_str(disp_));
    }
    if (disp_.size(1) < 1 || disp_.size(2) < 1) throw DimensionError("deformation field must be at least 1x1");
    if (!disp_.is_floating_point()) throw ArgumentError("deformation field must be floating point");
    if (!torch::isfinite(disp_).all().item<bool>()) {
        throw ArgumentError("deformation field contains non-finite displacements");
    }
    disp_ = disp_.contiguous();
}

DeformationField DeformationField::zeros(int height, int width) {
    if (height < 1 || width < 1) {
        throw DimensionError("field dimensions must be positive, got " + std::to_string(height) + "x" +
                             std::to_string(width));
    }
    return DeformationField(torch::zeros({2, height, width}));
}

torch::Tensor one_hot_labels(const torch::Tensor& labels) {
    return torch::one_hot(labels.to(torch::kLong), kNumClasses).permute({0, 3, 1, 2}).to(torch::kFloat).contiguous();
}

}  // namespace sizemorph
