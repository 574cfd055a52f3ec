#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace sizemorph {

/// Number of coarse segmentation classes.
inline constexpr int kNumClasses = 9;

/// Coarse segment labels, in palette order.
enum class Segment : std::uint8_t {
    Background = 0,
    UpperGarment = 1,
    LowerGarment = 2,
    Accessories = 3,
    Face = 4,
    Hair = 5,
    Arms = 6,
    Legs = 7,
    TorsoSkin = 8,
};

/// RGB image stored channel-first as a [3, H, W] tensor with values in [0, 1].
class Image {
public:
    Image() = default;
    explicit Image(torch::Tensor pixels);

    static Image filled(int height, int width, float r, float g, float b);

    int height() const { return static_cast<int>(pixels_.size(1)); }
    int width() const { return static_cast<int>(pixels_.size(2)); }
    const torch::Tensor& tensor() const { return pixels_; }

    /// Copy with every value clamped to [0, 1].
    Image clamped() const;

private:
    torch::Tensor pixels_;
};

/// Per-pixel segment labels plus their soft (one-hot or interpolated) form.
///
/// The soft form is a [9, H, W] tensor whose channels sum to one per pixel;
/// the hard labels are always its argmax.
class SegmentationMap {
public:
    SegmentationMap() = default;

    /// From hard labels, a [H, W] integer tensor with values in 0..8.
    static SegmentationMap from_labels(const torch::Tensor& labels);
    /// From a soft [9, H, W] tensor; validates nonnegativity and unit channel sums.
    static SegmentationMap from_soft(torch::Tensor soft);

    int height() const { return static_cast<int>(soft_.size(1)); }
    int width() const { return static_cast<int>(soft_.size(2)); }

    const torch::Tensor& soft() const { return soft_; }
    /// [H, W] uint8 tensor.
    const torch::Tensor& labels() const { return labels_; }
    /// Boolean [H, W] mask of one segment.
    torch::Tensor mask(Segment segment) const;

private:
    torch::Tensor soft_;
    torch::Tensor labels_;
};

/// Dense displacement field stored as [2, H, W] (dx, dy).
///
/// Displacements are in normalized coordinates: a value of 1 moves the sample
/// point by half the image extent along that axis. The zero field is the
/// identity warp.
class DeformationField {
public:
    DeformationField() = default;
    explicit DeformationField(torch::Tensor displacements);

    static DeformationField zeros(int height, int width);

    int height() const { return static_cast<int>(disp_.size(1)); }
    int width() const { return static_cast<int>(disp_.size(2)); }
    const torch::Tensor& tensor() const { return disp_; }
    torch::Tensor dx() const { return disp_[0]; }
    torch::Tensor dy() const { return disp_[1]; }

private:
    torch::Tensor disp_;
};

/// One-hot encode a batch of labels [N, H, W] into [N, 9, H, W] float.
torch::Tensor one_hot_labels(const torch::Tensor& labels);

}  // namespace sizemorph
