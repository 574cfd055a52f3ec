#include "sizemorph/models/networks.hpp"

#include "sizemorph/deformation/field_ops.hpp"
#include "sizemorph/deformation/warp.hpp"
#include "sizemorph/errors.hpp"

#include <bit>
#include <string>

namespace sizemorph::models {

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace {

void expect_shape(const torch::Tensor& t, int channels, int resolution, const char* what) {
    if (t.dim() != 4 || t.size(1) != channels || t.size(2) != resolution || t.size(3) != resolution) {
        throw ShapeError(std::string(what) + ": expected [N, " + std::to_string(channels) + ", " +
                         std::to_string(resolution) + ", " + std::to_string(resolution) + "]");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// GeneratorSpec
// ---------------------------------------------------------------------------

GeneratorSpec GeneratorSpec::defaults(int resolution) {
    GeneratorSpec s;
    s.resolution = resolution;
    if (resolution <= 64) {
        s.channels = {{4, 256}, {8, 256}, {16, 128}, {32, 64}, {64, 32}};
    } else {
        s.channels = {{4, 512}, {8, 512}, {16, 512}, {32, 512}, {64, 256}, {128, 128}, {256, 64}, {512, 32}};
        for (int r = 1024; r <= resolution; r *= 2) s.channels[r] = 32;
    }
    for (auto it = s.channels.begin(); it != s.channels.end();) {
        it = it->first > resolution ? s.channels.erase(it) : std::next(it);
    }
    return s;
}

std::vector<int> GeneratorSpec::resolutions() const {
    std::vector<int> out;
    for (int r = 4; r <= resolution; r *= 2) out.push_back(r);
    return out;
}

int GeneratorSpec::channels_at(int res) const {
    auto it = channels.find(res);
    if (it == channels.end()) throw ConfigError("no channel width configured for resolution " + std::to_string(res));
    return it->second;
}

void GeneratorSpec::validate() const {
    if (resolution < 4 || !std::has_single_bit(static_cast<unsigned>(resolution))) {
        throw ConfigError("generator resolution must be a power of two >= 4, got " + std::to_string(resolution));
    }
    if (latent_dim < 1 || style_dim < 1 || mapping_layers < 1) throw ConfigError("latent/style dims must be positive");
    for (int r : resolutions()) {
        if (channels_at(r) < 1) throw ConfigError("channel widths must be positive");
    }
}

nlohmann::json GeneratorSpec::to_json() const {
    nlohmann::json ch = nlohmann::json::object();
    for (const auto& [r, c] : channels) ch[std::to_string(r)] = c;
    return {{"resolution", resolution},
            {"latent_dim", latent_dim},
            {"style_dim", style_dim},
            {"mapping_layers", mapping_layers},
            {"channels", ch}};
}

GeneratorSpec GeneratorSpec::from_json(const nlohmann::json& j) {
    GeneratorSpec s = defaults(j.at("resolution").get<int>());
    s.latent_dim = j.value("latent_dim", s.latent_dim);
    s.style_dim = j.value("style_dim", s.style_dim);
    s.mapping_layers = j.value("mapping_layers", s.mapping_layers);
    if (j.contains("channels")) {
        s.channels.clear();
        for (const auto& [k, v] : j.at("channels").items()) s.channels[std::stoi(k)] = v.get<int>();
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Generator pieces
// ---------------------------------------------------------------------------

ConditionEncoderImpl::ConditionEncoderImpl(const GeneratorSpec& spec) : resolution(spec.resolution) {
    from_input = register_module("from_input", EqualConv2d(3 + kNumClasses, spec.channels_at(resolution), 1));
    int i = 0;
    for (int r = resolution; r > 4; r /= 2, ++i) {
        down.push_back(register_module("down" + std::to_string(i),
                                       EqualConv2d(spec.channels_at(r), spec.channels_at(r / 2), 3, 2)));
    }
    final_conv = register_module("final", EqualConv2d(spec.channels_at(4), spec.channels_at(4), 3));
}

torch::Tensor ConditionEncoderImpl::forward(const torch::Tensor& image, const torch::Tensor& seg) {
    expect_shape(image, 3, resolution, "encode_condition image");
    expect_shape(seg, kNumClasses, resolution, "encode_condition segmentation");
    auto x = scaled_lrelu(from_input(torch::cat({image * 2.0 - 1.0, seg}, 1)));
    for (auto& d : down) x = scaled_lrelu(d(x));
    return scaled_lrelu(final_conv(x));
}

MappingNetworkImpl::MappingNetworkImpl(const GeneratorSpec& spec) : latent_dim(spec.latent_dim) {
    for (int i = 0; i < spec.mapping_layers; ++i) {
        const int in = i == 0 ? spec.latent_dim : spec.style_dim;
        layers.push_back(register_module("fc" + std::to_string(i), EqualLinear(in, spec.style_dim, 0.01)));
    }
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z) {
    if (z.dim() != 2 || z.size(1) != latent_dim) {
        throw ShapeError("map_latent: expected z of shape [N, " + std::to_string(latent_dim) + "]");
    }
    auto x = z * torch::rsqrt(z.pow(2).mean(1, true) + 1e-8);
    for (auto& l : layers) x = scaled_lrelu(l(x));
    return x;
}

FieldSynthesisImpl::FieldSynthesisImpl(const GeneratorSpec& spec) : resolutions(spec.resolutions()) {
    int prev = spec.channels_at(4);
    for (int r : resolutions) {
        const int c = spec.channels_at(r);
        const auto tag = std::to_string(r);
        convs.push_back(register_module("conv" + tag, ModulatedConv2d(prev, c, 3, spec.style_dim)));
        heads.push_back(register_module("field" + tag, EqualConv2d(c, 2, 1, 1, /*zero_init=*/true)));
        prev = c;
    }
}

std::vector<torch::Tensor> FieldSynthesisImpl::forward(const torch::Tensor& cond, const torch::Tensor& w) {
    std::vector<torch::Tensor> fields;
    auto x = cond;
    for (size_t i = 0; i < convs.size(); ++i) {
        if (i > 0) {
            x = F::interpolate(x, F::InterpolateFuncOptions()
                                      .scale_factor(std::vector<double>{2.0, 2.0})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
        }
        x = scaled_lrelu(convs[i](x, w));
        fields.push_back(heads[i](x));
    }
    return fields;
}

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec_) : spec(spec_) {
    spec.validate();
    encoder = register_module("encoder", ConditionEncoder(spec));
    mapping = register_module("mapping", MappingNetwork(spec));
    synthesis = register_module("synthesis", FieldSynthesis(spec));
}

torch::Tensor GeneratorImpl::encode_condition(const torch::Tensor& image, const torch::Tensor& seg) {
    return encoder(image, seg);
}

torch::Tensor GeneratorImpl::map_latent(const torch::Tensor& z) { return mapping(z); }

std::vector<torch::Tensor> GeneratorImpl::generate_fields(const torch::Tensor& cond, const torch::Tensor& w) {
    if (cond.dim() != 4 || cond.size(1) != spec.channels_at(4) || cond.size(2) != 4 || cond.size(3) != 4) {
        throw ShapeError("generate_fields: condition must be [N, C4, 4, 4]");
    }
    if (w.dim() != 2 || w.size(0) != cond.size(0) || w.size(1) != spec.style_dim) {
        throw ShapeError("generate_fields: style must be [N, style_dim]");
    }
    return synthesis(cond, w);
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& image, const torch::Tensor& seg, const torch::Tensor& z) {
    GeneratorOutput out;
    auto cond = encode_condition(image, seg);
    if (z.dim() != 2 || z.size(0) != image.size(0)) throw ShapeError("generator: one latent per sample required");
    auto w = map_latent(z);
    out.levels = generate_fields(cond, w);
    out.field = compose_pyramid(std::span<const torch::Tensor>(out.levels));
    out.image = warp(image, out.field);
    out.seg = warp(seg, out.field);
    return out;
}

ResizeResult resize(Generator& generator, const Image& image, const SegmentationMap& seg, const torch::Tensor& z) {
    torch::NoGradGuard no_grad;
    auto out = generator->forward(image.tensor().unsqueeze(0), seg.soft().unsqueeze(0),
                                  z.dim() == 1 ? z.unsqueeze(0) : z);
    return {Image(out.image.squeeze(0)), SegmentationMap::from_soft(out.seg.squeeze(0)),
            DeformationField(out.field.squeeze(0))};
}

// ---------------------------------------------------------------------------
// Discriminators
// ---------------------------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(const GeneratorSpec& spec, int in_channels_)
    : resolution(spec.resolution), in_channels(in_channels_) {
    from_input = register_module("from_input", EqualConv2d(in_channels, spec.channels_at(resolution), 1));
    int i = 0;
    for (int r = resolution; r > 4; r /= 2, ++i) {
        down.push_back(register_module("down" + std::to_string(i),
                                       EqualConv2d(spec.channels_at(r), spec.channels_at(r / 2), 3, 2)));
    }
    const int c4 = spec.channels_at(4);
    final_conv = register_module("final", EqualConv2d(c4, c4, 3));
    fc = register_module("fc", EqualLinear(c4 * 16, c4));
    out = register_module("out", EqualLinear(c4, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
    expect_shape(x, in_channels, resolution, "discriminator input");
    auto h = scaled_lrelu(from_input(x));
    for (auto& d : down) h = scaled_lrelu(d(h));
    h = scaled_lrelu(final_conv(h));
    h = scaled_lrelu(fc(h.flatten(1)));
    return out(h).squeeze(1);
}

torch::Tensor discriminate_image(Discriminator& d, const torch::Tensor& image) { return d(image * 2.0 - 1.0); }

torch::Tensor discriminate_seg_pair(Discriminator& d, const torch::Tensor& seg_a, const torch::Tensor& seg_x) {
    return d(torch::cat({seg_a, seg_x}, 1));
}

// ---------------------------------------------------------------------------
// Size classifier
// ---------------------------------------------------------------------------

namespace {

struct BasicBlockImpl : nn::Module {
    BasicBlockImpl(int in, int out, int stride) {
        conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)));
        bn1 = register_module("bn1", nn::BatchNorm2d(out));
        conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
        bn2 = register_module("bn2", nn::BatchNorm2d(out));
        if (stride != 1 || in != out) {
            shortcut = register_module(
                "shortcut", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                                           nn::BatchNorm2d(out)));
        }
    }
    torch::Tensor forward(torch::Tensor x) {
        auto y = torch::relu(bn1(conv1(x)));
        y = bn2(conv2(y));
        return torch::relu(y + (shortcut ? shortcut->forward(x) : x));
    }
    nn::Conv2d conv1{nullptr}, conv2{nullptr};
    nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
    nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(BasicBlock);

struct BottleneckImpl : nn::Module {
    BottleneckImpl(int in, int width, int stride) {
        const int out = width * 4;
        conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, width, 1).bias(false)));
        bn1 = register_module("bn1", nn::BatchNorm2d(width));
        conv2 = register_module("conv2",
                                nn::Conv2d(nn::Conv2dOptions(width, width, 3).stride(stride).padding(1).bias(false)));
        bn2 = register_module("bn2", nn::BatchNorm2d(width));
        conv3 = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(width, out, 1).bias(false)));
        bn3 = register_module("bn3", nn::BatchNorm2d(out));
        if (stride != 1 || in != out) {
            shortcut = register_module(
                "shortcut", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                                           nn::BatchNorm2d(out)));
        }
    }
    torch::Tensor forward(torch::Tensor x) {
        auto y = torch::relu(bn1(conv1(x)));
        y = torch::relu(bn2(conv2(y)));
        y = bn3(conv3(y));
        return torch::relu(y + (shortcut ? shortcut->forward(x) : x));
    }
    nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
    nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
    nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(Bottleneck);

}  // namespace

ClassifierSpec ClassifierSpec::defaults(int resolution) {
    ClassifierSpec s;
    if (resolution <= 64) {
        s.input_resolution = resolution;
        s.base_width = 16;
        s.depth = 18;
    } else {
        s.input_resolution = 224;
        s.base_width = 64;
        s.depth = 50;
    }
    return s;
}

nlohmann::json ClassifierSpec::to_json() const {
    return {{"input_resolution", input_resolution}, {"base_width", base_width}, {"depth", depth}};
}

ClassifierSpec ClassifierSpec::from_json(const nlohmann::json& j) {
    ClassifierSpec s;
    s.input_resolution = j.at("input_resolution").get<int>();
    s.base_width = j.at("base_width").get<int>();
    s.depth = j.at("depth").get<int>();
    return s;
}

SizeClassifierImpl::SizeClassifierImpl(const ClassifierSpec& spec_) : spec(spec_) {
    if (spec.depth != 18 && spec.depth != 50) throw ConfigError("classifier depth must be 18 or 50");
    if (spec.input_resolution < 8 || spec.base_width < 1) throw ConfigError("invalid classifier spec");
    const int w = spec.base_width;
    stem = nn::Sequential();
    if (spec.input_resolution >= 128) {
        stem->push_back(nn::Conv2d(nn::Conv2dOptions(3, w, 7).stride(2).padding(3).bias(false)));
        stem->push_back(nn::BatchNorm2d(w));
        stem->push_back(nn::ReLU());
        stem->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
    } else {
        stem->push_back(nn::Conv2d(nn::Conv2dOptions(3, w, 3).padding(1).bias(false)));
        stem->push_back(nn::BatchNorm2d(w));
        stem->push_back(nn::ReLU());
    }
    register_module("stem", stem);

    stages = nn::Sequential();
    const bool bottleneck = spec.depth == 50;
    const std::vector<int> blocks = bottleneck ? std::vector<int>{3, 4, 6, 3} : std::vector<int>{2, 2, 2, 2};
    int in = w;
    for (int s = 0; s < 4; ++s) {
        const int width = w << s;
        for (int b = 0; b < blocks[s]; ++b) {
            const int stride = (b == 0 && s > 0) ? 2 : 1;
            if (bottleneck) {
                stages->push_back(Bottleneck(in, width, stride));
                in = width * 4;
            } else {
                stages->push_back(BasicBlock(in, width, stride));
                in = width;
            }
        }
    }
    register_module("stages", stages);
    fc = register_module("fc", nn::Linear(in, 1));
}

torch::Tensor SizeClassifierImpl::forward(const torch::Tensor& image) {
    if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("classify_size: expected [N, 3, H, W]");
    auto x = image;
    if (x.size(2) != spec.input_resolution || x.size(3) != spec.input_resolution) {
        x = F::interpolate(x, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{spec.input_resolution, spec.input_resolution})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
    }
    x = stages->forward(stem->forward(x * 2.0 - 1.0));
    x = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1)).flatten(1);
    return fc(x).squeeze(1);
}

}  // namespace sizemorph::models
