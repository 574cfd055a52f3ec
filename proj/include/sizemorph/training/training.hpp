#pragma once

#include "sizemorph/data/dataset.hpp"
#include "sizemorph/models/checkpoint.hpp"
#include "sizemorph/models/networks.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sizemorph::training {

namespace fs = std::filesystem;

struct LossWeights {
    double smooth = 30.0;
    double bce = 1000.0;
    double adv_img = 1.0;
    double adv_seg = 1.0;

    /// Throws ConfigError on a negative weight.
    void validate() const;
    nlohmann::json to_json() const;
    static LossWeights from_json(const nlohmann::json& j);
};

enum class Direction { SmallToPlus, PlusToSmall };
std::string to_string(Direction d);  // "small2plus" / "plus2small"
Direction parse_direction(const std::string& s);
data::SizeLabel source_size(Direction d);
data::SizeLabel target_size(Direction d);

/// Paired tensors for one split, oriented so that `src` is the conditional
/// input and `tgt` the matching sample from the target size distribution.
struct PairTensors {
    std::vector<std::string> ids;
    torch::Tensor image_src, seg_src;  // [N, 3, R, R], [N, 9, R, R]
    torch::Tensor image_tgt, seg_tgt;
    data::SizeLabel src_size = data::SizeLabel::Small;
    data::SizeLabel tgt_size = data::SizeLabel::Plus;

    int64_t size() const { return static_cast<int64_t>(ids.size()); }
};

/// Loads a split; pairs whose sizes do not match the direction are skipped.
PairTensors load_pairs(const data::Dataset& dataset, data::Split split, Direction direction);

// ---------------------------------------------------------------------------
// Classifier pretraining
// ---------------------------------------------------------------------------

struct ClassifierConfig {
    fs::path dataset;
    fs::path out_dir;
    models::ClassifierSpec spec;
    int epochs = 5;
    int batch_size = 16;
    double lr = 1e-3;
    uint64_t seed = 0;
    double jitter = 0.2;        // brightness / contrast / saturation amplitude
    bool flip_labels = false;   // sanity mode: train and validate on inverted labels

    nlohmann::json to_json() const;
    static ClassifierConfig from_json(const nlohmann::json& j);
};

struct ClassifierResult {
    std::vector<double> val_accuracy;  // per epoch
    double best_val_accuracy = 0.0;
    int best_epoch = -1;
    fs::path checkpoint;
    fs::path log;
};

/// Trains on both sides of every train pair (plus = 1) with horizontal flips
/// and color jitter, validating after each epoch. Writes the best-val
/// checkpoint to out_dir/classifier.ckpt. Throws ConfigError when the
/// training split contains a single size.
ClassifierResult pretrain_classifier(const ClassifierConfig& config);

models::SizeClassifier load_classifier(const fs::path& path);

/// Fraction of `images` classified correctly against per-image labels.
double classifier_accuracy(models::SizeClassifier& classifier, const torch::Tensor& images,
                           const torch::Tensor& labels, int batch_size = 64);

// ---------------------------------------------------------------------------
// Adversarial training
// ---------------------------------------------------------------------------

struct TrainConfig {
    fs::path dataset;
    fs::path classifier;
    fs::path out_dir;
    models::GeneratorSpec generator = models::GeneratorSpec::defaults(64);
    LossWeights weights;
    Direction direction = Direction::SmallToPlus;
    int batch_size = 16;
    int64_t steps = 2000;
    double lr_g = 2e-3;
    double lr_d = 2e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double r1_weight = 1.0;
    int r1_interval = 4;        // lazy R1, rescaled by the interval
    double grad_clip = 100.0;   // max generator gradient norm, 0 disables
    bool flip_augment = true;
    uint64_t seed = 117;
    int64_t log_every = 50;
    int64_t eval_every = 500;
    int64_t checkpoint_every = 500;
    bool resume = true;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    /// The subset of the config that determines the trained parameters.
    /// Paths, run length, and logging cadence are excluded so a longer run
    /// can resume from a shorter one.
    nlohmann::json identity() const;
};

struct Networks {
    models::Generator generator{nullptr};
    models::Discriminator d_img{nullptr};
    models::Discriminator d_seg{nullptr};
    models::SizeClassifier classifier{nullptr};
};

struct Batch {
    torch::Tensor image_src, seg_src, image_tgt, seg_tgt;
    torch::Tensor z;
    torch::Tensor flip;  // [N] bool, horizontal flip applied to discriminator inputs
};

struct GeneratorLoss {
    torch::Tensor total;
    torch::Tensor adv_img, adv_seg, bce, smooth;  // unweighted terms
    models::GeneratorOutput output;
};

/// Generator objective for one batch. The classifier must be frozen and in
/// eval mode. Terms with zero weight are still computed for logging, except
/// adv_seg which is skipped (reported as 0) when its weight is 0.
GeneratorLoss generator_loss(const Batch& batch, Networks& nets, const LossWeights& weights,
                             data::SizeLabel target);

struct DiscriminatorLosses {
    double img = 0.0, seg = 0.0;          // logistic terms
    double r1_img = 0.0, r1_seg = 0.0;    // penalty terms (weighted)
    double gap_img = 0.0, gap_seg = 0.0;  // mean real logit minus mean fake logit
};

struct DiscriminatorOptimizers {
    torch::optim::Adam* img;
    torch::optim::Adam* seg;  // may be null when the seg term is disabled
};

/// One update of both discriminators on real target samples against
/// generator outputs produced without gradient. `r1_scale` multiplies the
/// penalty (0 disables it).
DiscriminatorLosses discriminator_step(const Batch& batch, Networks& nets, DiscriminatorOptimizers opt,
                                       double r1_scale, bool use_seg);

struct FieldStats {
    double mean_abs = 0.0;
    double max_abs = 0.0;
    double smoothness = 0.0;
};
FieldStats field_stats(const torch::Tensor& field);

struct TrainResult {
    fs::path model;
    fs::path log;
    int64_t steps = 0;
    double val_accuracy = 0.0;
    FieldStats val_field;
    std::string config_hash;
    uint64_t classifier_hash_start = 0;
    uint64_t classifier_hash_end = 0;
};

/// Full adversarial run. Writes out_dir/config.json, out_dir/metrics.ndjson,
/// out_dir/last.ckpt (periodic, used for resume), out_dir/model.ckpt and
/// out_dir/summary.json with the final validation metrics.
/// Throws ConfigError when the classifier checkpoint is missing.
TrainResult train_gan(const TrainConfig& config);

models::Generator load_generator(const fs::path& path);

/// Generator outputs for every sample of `pairs`, latents drawn from `seed`.
struct Outputs {
    torch::Tensor image, seg, field;
};
Outputs run_generator(models::Generator& generator, const PairTensors& pairs, uint64_t seed, int batch_size = 32);

struct AblationEntry {
    std::string name;
    LossWeights weights;
    std::string config_hash;
    TrainResult result;
    double test_accuracy = 0.0;
    double smoothness = 0.0;
};

struct AblationResult {
    std::vector<AblationEntry> entries;  // img_only, img_seg, full
    bool ordering_holds = false;          // full >= img_only on test accuracy
    fs::path report;
};

/// Trains {image disc only}, {+ seg disc}, {+ seg disc + classifier} under
/// out_dir/<name>, evaluates each on the test split with `eval_classifier`
/// (the training classifier if empty), and writes out_dir/ablation.json.
AblationResult ablation_suite(const TrainConfig& base, const fs::path& eval_classifier = {});

}  // namespace sizemorph::training
