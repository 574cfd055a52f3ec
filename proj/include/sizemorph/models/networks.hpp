#pragma once

#include "sizemorph/deformation/types.hpp"
#include "sizemorph/models/layers.hpp"

#include "json.hpp"

#include <map>
#include <string>
#include <vector>

namespace sizemorph::models {

/// Architecture of the conditional field generator and its discriminators.
struct GeneratorSpec {
    int resolution = 64;
    int latent_dim = 128;
    int style_dim = 128;
    int mapping_layers = 4;
    /// Feature width per resolution, 4 .. resolution.
    std::map<int, int> channels;

    /// Desk-scale defaults for resolution <= 64, StyleGAN2-like widths above.
    static GeneratorSpec defaults(int resolution);

    /// 4, 8, ..., resolution.
    std::vector<int> resolutions() const;
    int channels_at(int res) const;
    /// Throws ConfigError on a non power-of-two resolution or missing widths.
    void validate() const;

    nlohmann::json to_json() const;
    static GeneratorSpec from_json(const nlohmann::json& j);
};

/// Downsamples the concatenated image and soft segmentation (3 + 9 channels)
/// to a 4x4 feature grid that replaces the constant synthesis input.
struct ConditionEncoderImpl : torch::nn::Module {
    explicit ConditionEncoderImpl(const GeneratorSpec& spec);
    torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& seg);

    int resolution;
    EqualConv2d from_input{nullptr};
    std::vector<EqualConv2d> down;
    EqualConv2d final_conv{nullptr};
};
TORCH_MODULE(ConditionEncoder);

/// z -> w through normalized fully connected layers.
struct MappingNetworkImpl : torch::nn::Module {
    explicit MappingNetworkImpl(const GeneratorSpec& spec);
    torch::Tensor forward(const torch::Tensor& z);

    int latent_dim;
    std::vector<EqualLinear> layers;
};
TORCH_MODULE(MappingNetwork);

/// Style-modulated synthesis stack emitting one displacement field per
/// resolution. Field heads are zero-initialized 1x1 convolutions, so an
/// untrained generator produces the identity warp.
struct FieldSynthesisImpl : torch::nn::Module {
    explicit FieldSynthesisImpl(const GeneratorSpec& spec);
    std::vector<torch::Tensor> forward(const torch::Tensor& cond, const torch::Tensor& w);

    std::vector<int> resolutions;
    std::vector<ModulatedConv2d> convs;
    std::vector<EqualConv2d> heads;
};
TORCH_MODULE(FieldSynthesis);

struct GeneratorOutput {
    torch::Tensor image;                // [N, 3, R, R]
    torch::Tensor seg;                  // [N, 9, R, R] soft
    torch::Tensor field;                // [N, 2, R, R]
    std::vector<torch::Tensor> levels;  // per-resolution fields, coarse to fine
};

struct GeneratorImpl : torch::nn::Module {
    explicit GeneratorImpl(const GeneratorSpec& spec);

    torch::Tensor encode_condition(const torch::Tensor& image, const torch::Tensor& seg);
    torch::Tensor map_latent(const torch::Tensor& z);
    std::vector<torch::Tensor> generate_fields(const torch::Tensor& cond, const torch::Tensor& w);
    /// Full pipeline: encode, map, generate, compose, and warp image + seg.
    GeneratorOutput forward(const torch::Tensor& image, const torch::Tensor& seg, const torch::Tensor& z);

    GeneratorSpec spec;
    ConditionEncoder encoder{nullptr};
    MappingNetwork mapping{nullptr};
    FieldSynthesis synthesis{nullptr};
};
TORCH_MODULE(Generator);

/// Single-sample convenience wrapper around Generator::forward.
struct ResizeResult {
    Image image;
    SegmentationMap seg;
    DeformationField field;
};
ResizeResult resize(Generator& generator, const Image& image, const SegmentationMap& seg, const torch::Tensor& z);

/// Convolutional critic over `in_channels` at the generator resolution:
/// 3 for images, 18 for (seg_A, seg_X) pairs.
struct DiscriminatorImpl : torch::nn::Module {
    DiscriminatorImpl(const GeneratorSpec& spec, int in_channels);
    torch::Tensor forward(const torch::Tensor& x);

    int resolution;
    int in_channels;
    EqualConv2d from_input{nullptr};
    std::vector<EqualConv2d> down;
    EqualConv2d final_conv{nullptr};
    EqualLinear fc{nullptr};
    EqualLinear out{nullptr};
};
TORCH_MODULE(Discriminator);

torch::Tensor discriminate_image(Discriminator& d, const torch::Tensor& image);
/// Channel order matters: the conditioning segmentation comes first.
torch::Tensor discriminate_seg_pair(Discriminator& d, const torch::Tensor& seg_a, const torch::Tensor& seg_x);

struct ClassifierSpec {
    int input_resolution = 64;
    int base_width = 16;
    int depth = 18;  // 18 (basic blocks) or 50 (bottlenecks)

    static ClassifierSpec defaults(int resolution);
    nlohmann::json to_json() const;
    static ClassifierSpec from_json(const nlohmann::json& j);
};

/// Residual network producing one logit for the plus size.
struct SizeClassifierImpl : torch::nn::Module {
    explicit SizeClassifierImpl(const ClassifierSpec& spec);
    /// Images in [0, 1]; resized bilinearly to the input resolution if needed.
    torch::Tensor forward(const torch::Tensor& image);

    ClassifierSpec spec;
    torch::nn::Sequential stem{nullptr};
    torch::nn::Sequential stages{nullptr};
    torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(SizeClassifier);

}  // namespace sizemorph::models
