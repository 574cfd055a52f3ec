#include "sizemorph/models/layers.hpp"

#include <cmath>

namespace sizemorph::models {

namespace F = torch::nn::functional;

torch::Tensor scaled_lrelu(const torch::Tensor& x) {
    return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)) * std::sqrt(2.0);
}

EqualLinearImpl::EqualLinearImpl(int64_t in_features, int64_t out_features, double lr_mul_, double bias_init)
    : scale(lr_mul_ / std::sqrt(static_cast<double>(in_features))), lr_mul(lr_mul_) {
    weight = register_parameter("weight", torch::randn({out_features, in_features}) / lr_mul);
    bias = register_parameter("bias", torch::full({out_features}, bias_init / lr_mul));
}

torch::Tensor EqualLinearImpl::forward(const torch::Tensor& x) {
    return F::linear(x, weight * scale, bias * lr_mul);
}

EqualConv2dImpl::EqualConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t stride_,
                                 bool zero_init)
    : scale(1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel))),
      stride(stride_),
      padding(kernel / 2) {
    auto w = zero_init ? torch::zeros({out_channels, in_channels, kernel, kernel})
                       : torch::randn({out_channels, in_channels, kernel, kernel});
    weight = register_parameter("weight", w);
    bias = register_parameter("bias", torch::zeros({out_channels}));
}

torch::Tensor EqualConv2dImpl::forward(const torch::Tensor& x) {
    return F::conv2d(x, weight * scale, F::Conv2dFuncOptions().bias(bias).stride(stride).padding(padding));
}

ModulatedConv2dImpl::ModulatedConv2dImpl(int64_t in_channels_, int64_t out_channels_, int64_t kernel_,
                                         int64_t style_dim)
    : scale(1.0 / std::sqrt(static_cast<double>(in_channels_ * kernel_ * kernel_))),
      in_channels(in_channels_),
      out_channels(out_channels_),
      kernel(kernel_) {
    // Styles start at one so the initial layer behaves like a plain conv.
    affine = register_module("affine", EqualLinear(style_dim, in_channels, 1.0, 1.0));
    weight = register_parameter("weight", torch::randn({out_channels, in_channels, kernel, kernel}));
    bias = register_parameter("bias", torch::zeros({out_channels}));
}

torch::Tensor ModulatedConv2dImpl::forward(const torch::Tensor& x, const torch::Tensor& w) {
    const auto n = x.size(0);
    const auto h = x.size(2);
    const auto wd = x.size(3);
    auto styles = affine(w).view({n, 1, in_channels, 1, 1});
    auto kernel_w = weight.unsqueeze(0) * scale * styles;  // [N, out, in, k, k]
    auto demod = torch::rsqrt(kernel_w.pow(2).sum({2, 3, 4}) + 1e-8);
    kernel_w = kernel_w * demod.view({n, out_channels, 1, 1, 1});
    auto out = F::conv2d(x.reshape({1, n * in_channels, h, wd}),
                         kernel_w.reshape({n * out_channels, in_channels, kernel, kernel}),
                         F::Conv2dFuncOptions().padding(kernel / 2).groups(n));
    return out.view({n, out_channels, h, wd}) + bias.view({1, out_channels, 1, 1});
}

}  // namespace sizemorph::models
