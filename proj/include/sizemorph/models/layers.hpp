#pragma once

#include <torch/torch.h>

namespace sizemorph::models {

/// Leaky ReLU (slope 0.2) rescaled by sqrt(2) to keep activations unit-variance.
torch::Tensor scaled_lrelu(const torch::Tensor& x);

/// Fully connected layer with equalized learning rate: weights are stored at
/// unit variance and scaled at runtime by lr_mul / sqrt(fan_in).
struct EqualLinearImpl : torch::nn::Module {
    EqualLinearImpl(int64_t in_features, int64_t out_features, double lr_mul = 1.0, double bias_init = 0.0);
    torch::Tensor forward(const torch::Tensor& x);

    torch::Tensor weight, bias;
    double scale, lr_mul;
};
TORCH_MODULE(EqualLinear);

struct EqualConv2dImpl : torch::nn::Module {
    EqualConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t stride = 1,
                    bool zero_init = false);
    torch::Tensor forward(const torch::Tensor& x);

    torch::Tensor weight, bias;
    double scale;
    int64_t stride, padding;
};
TORCH_MODULE(EqualConv2d);

/// Style-modulated convolution with weight demodulation.
///
/// A per-sample style vector scales the input channels of the kernel; the
/// kernel is then renormalized per output channel. Implemented as a grouped
/// convolution over the batch.
struct ModulatedConv2dImpl : torch::nn::Module {
    ModulatedConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t style_dim);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& w);

    EqualLinear affine{nullptr};
    torch::Tensor weight, bias;
    double scale;
    int64_t in_channels, out_channels, kernel;
};
TORCH_MODULE(ModulatedConv2d);

}  // namespace sizemorph::models
