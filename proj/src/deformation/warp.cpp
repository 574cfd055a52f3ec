#include "sizemorph/deformation/warp.hpp"

#include "sizemorph/errors.hpp"

#include <ATen/Dispatch.h>

#include <algorithm>
#include <cmath>

namespace sizemorph {

namespace {

// Sample location for one output pixel, resolved into the four bilinear taps.
template <typename T>
struct Tap {
    int64_t x0, x1, y0, y1;
    T fx, fy;
    bool x_inside, y_inside;  // false when the position was clamped to the border
};

template <typename T>
inline Tap<T> locate(int64_t x, int64_t y, T dx, T dy, int64_t w, int64_t h) {
    Tap<T> t;
    T px = static_cast<T>(x) + dx * static_cast<T>(w) / T(2);
    T py = static_cast<T>(y) + dy * static_cast<T>(h) / T(2);
    const T max_x = static_cast<T>(w - 1);
    const T max_y = static_cast<T>(h - 1);
    t.x_inside = px >= T(0) && px <= max_x;
    t.y_inside = py >= T(0) && py <= max_y;
    px = std::clamp(px, T(0), max_x);
    py = std::clamp(py, T(0), max_y);
    t.x0 = static_cast<int64_t>(std::floor(px));
    t.y0 = static_cast<int64_t>(std::floor(py));
    t.x1 = std::min(t.x0 + 1, w - 1);
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.fx = px - static_cast<T>(t.x0);
    t.fy = py - static_cast<T>(t.y0);
    return t;
}

template <typename T>
void warp_forward_kernel(const torch::Tensor& src, const torch::Tensor& field, torch::Tensor& out) {
    const int64_t n = src.size(0), c = src.size(1), h = src.size(2), w = src.size(3);
    const auto s = src.accessor<T, 4>();
    const auto f = field.accessor<T, 4>();
    auto o = out.accessor<T, 4>();
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const auto t = locate<T>(x, y, f[b][0][y][x], f[b][1][y][x], w, h);
                const T w00 = (T(1) - t.fx) * (T(1) - t.fy);
                const T w01 = t.fx * (T(1) - t.fy);
                const T w10 = (T(1) - t.fx) * t.fy;
                const T w11 = t.fx * t.fy;
                for (int64_t ch = 0; ch < c; ++ch) {
                    const auto plane = s[b][ch];
                    o[b][ch][y][x] = w00 * plane[t.y0][t.x0] + w01 * plane[t.y0][t.x1] +
                                     w10 * plane[t.y1][t.x0] + w11 * plane[t.y1][t.x1];
                }
            }
        }
    }
}

template <typename T>
void warp_backward_kernel(const torch::Tensor& src, const torch::Tensor& field, const torch::Tensor& grad_out,
                          torch::Tensor& grad_src, torch::Tensor& grad_field, bool want_src, bool want_field) {
    const int64_t n = src.size(0), c = src.size(1), h = src.size(2), w = src.size(3);
    const auto s = src.accessor<T, 4>();
    const auto f = field.accessor<T, 4>();
    const auto g = grad_out.accessor<T, 4>();
    auto gs = grad_src.accessor<T, 4>();
    auto gf = grad_field.accessor<T, 4>();
    const T half_w = static_cast<T>(w) / T(2);
    const T half_h = static_cast<T>(h) / T(2);
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const auto t = locate<T>(x, y, f[b][0][y][x], f[b][1][y][x], w, h);
                const T w00 = (T(1) - t.fx) * (T(1) - t.fy);
                const T w01 = t.fx * (T(1) - t.fy);
                const T w10 = (T(1) - t.fx) * t.fy;
                const T w11 = t.fx * t.fy;
                T d_px = 0;
                T d_py = 0;
                for (int64_t ch = 0; ch < c; ++ch) {
                    const T go = g[b][ch][y][x];
                    if (go == T(0)) continue;
                    if (want_src) {
                        auto plane = gs[b][ch];
                        plane[t.y0][t.x0] += w00 * go;
                        plane[t.y0][t.x1] += w01 * go;
                        plane[t.y1][t.x0] += w10 * go;
                        plane[t.y1][t.x1] += w11 * go;
                    }
                    if (want_field) {
                        const auto p = s[b][ch];
                        const T v00 = p[t.y0][t.x0], v01 = p[t.y0][t.x1];
                        const T v10 = p[t.y1][t.x0], v11 = p[t.y1][t.x1];
                        d_px += go * ((T(1) - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
                        d_py += go * ((T(1) - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
                    }
                }
                if (want_field) {
                    gf[b][0][y][x] = t.x_inside ? d_px * half_w : T(0);
                    gf[b][1][y][x] = t.y_inside ? d_py * half_h : T(0);
                }
            }
        }
    }
}

class WarpFunction : public torch::autograd::Function<WarpFunction> {
public:
    static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& source,
                                 const torch::Tensor& field) {
        auto src = source.contiguous();
        auto fld = field.contiguous();
        ctx->save_for_backward({src, fld});
        auto out = torch::empty_like(src);
        AT_DISPATCH_FLOATING_TYPES(src.scalar_type(), "warp_forward",
                                   [&] { warp_forward_kernel<scalar_t>(src, fld, out); });
        return out;
    }

    static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                   torch::autograd::variable_list grad_outputs) {
        const auto saved = ctx->get_saved_variables();
        const auto& src = saved[0];
        const auto& fld = saved[1];
        auto grad_out = grad_outputs[0].contiguous();
        const bool want_src = ctx->needs_input_grad(0);
        const bool want_field = ctx->needs_input_grad(1);
        auto grad_src = torch::zeros_like(src);
        auto grad_field = torch::zeros_like(fld);
        AT_DISPATCH_FLOATING_TYPES(src.scalar_type(), "warp_backward", [&] {
            warp_backward_kernel<scalar_t>(src, fld, grad_out, grad_src, grad_field, want_src, want_field);
        });
        return {want_src ? grad_src : torch::Tensor(), want_field ? grad_field : torch::Tensor()};
    }
};

}  // namespace

torch::Tensor warp(const torch::Tensor& source, const torch::Tensor& field) {
    if (source.dim() != 4 || field.dim() != 4 || field.size(1) != 2) {
        throw ShapeError("warp expects source [N, C, H, W] and field [N, 2, H, W]");
    }
    if (source.size(0) != field.size(0) || source.size(2) != field.size(2) || source.size(3) != field.size(3)) {
        throw ShapeError("warp: source and field dimensions differ");
    }
    if (source.scalar_type() != field.scalar_type()) {
        throw ArgumentError("warp: source and field must share a floating dtype");
    }
    return WarpFunction::apply(source, field);
}

Image warp_image(const Image& image, const DeformationField& field) {
    if (image.height() != field.height() || image.width() != field.width()) {
        throw ShapeError("warp_image: image and field dimensions differ");
    }
    auto disp = field.tensor().to(image.tensor().scalar_type());
    return Image(warp(image.tensor().unsqueeze(0), disp.unsqueeze(0)).squeeze(0));
}

SegmentationMap warp_segmentation(const SegmentationMap& seg, const DeformationField& field) {
    if (seg.height() != field.height() || seg.width() != field.width()) {
        throw ShapeError("warp_segmentation: segmentation and field dimensions differ");
    }
    auto disp = field.tensor().to(seg.soft().scalar_type());
    return SegmentationMap::from_soft(warp(seg.soft().unsqueeze(0), disp.unsqueeze(0)).squeeze(0));
}

}  // namespace sizemorph
