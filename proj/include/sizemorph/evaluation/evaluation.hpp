#pragma once

#include "sizemorph/training/training.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sizemorph::evaluation {

namespace fs = std::filesystem;

inline constexpr int kHistogramBins = 32;
inline constexpr int kReportVersion = 1;

/// Fraction of images whose classifier probability lies on the target side
/// of 0.5. Throws ArgumentError on an empty set.
double target_size_accuracy(const std::vector<Image>& outputs, models::SizeClassifier& classifier,
                            data::SizeLabel target);
double target_size_accuracy(const torch::Tensor& images, models::SizeClassifier& classifier,
                            data::SizeLabel target);

/// Probability assigned to `target` for each image of [N, 3, H, W].
torch::Tensor target_probabilities(const torch::Tensor& images, models::SizeClassifier& classifier,
                                   data::SizeLabel target);

/// Upper-garment pixels as a [H, W] bool mask. For one-hot maps this is the
/// hard label; on warped soft maps only pixels sampled entirely from garment
/// pixels qualify, so boundary blends are excluded.
torch::Tensor garment_mask(const SegmentationMap& seg, double min_confidence = 0.999);

/// Per-channel 32-bin color histograms over the masked pixels, normalized,
/// then the L1 distance averaged over channels. Range [0, 2]; nullopt when
/// either mask is empty.
std::optional<double> garment_histogram_distance(const Image& source, const torch::Tensor& source_mask,
                                                 const Image& output, const torch::Tensor& output_mask);

/// Number of horizontal stripes inside the mask: the row-averaged intensity
/// profile is smoothed over 3 rows and its crossings of the mid level are
/// counted with hysteresis. A garment drawn as alternating base and stripe
/// bands starting and ending with base yields its stripe count. nullopt when
/// the mask is empty.
std::optional<int> stripe_count(const Image& image, const torch::Tensor& mask);

using training::FieldStats;
FieldStats field_statistics(const DeformationField& field);

struct SampleRecord {
    std::string id;
    double target_size_prob = 0.0;
    std::optional<double> histogram_distance;
    std::optional<int> stripe_count_src;
    std::optional<int> stripe_count_out;
    double mean_abs_displacement = 0.0;
    double smoothness = 0.0;
};

struct Aggregates {
    int count = 0;
    double target_size_accuracy = 0.0;
    double mean_histogram_distance = 0.0;  // over samples with a defined distance
    double stripe_preservation = 0.0;      // fraction with equal src/out counts, over defined pairs
    double mean_abs_displacement = 0.0;
    double mean_smoothness = 0.0;
};

Aggregates aggregate(const std::vector<SampleRecord>& samples);

struct EvalReport {
    std::string method;  // sizegan | single_axis_<ratio>
    data::SizeLabel target = data::SizeLabel::Plus;
    std::vector<SampleRecord> samples;
    Aggregates aggregates;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

/// Scores generated outputs against their sources.
EvalReport evaluate_outputs(const std::string& method, const training::PairTensors& pairs,
                            const training::Outputs& outputs, models::SizeClassifier& classifier);

/// Horizontal scaling of every source about the vertical centerline. For a
/// reverse (plus to small) set the content is shrunk by 1 / ratio instead.
training::Outputs single_axis_outputs(const training::PairTensors& pairs, double ratio);

std::string baseline_tag(double ratio);

struct MethodResult {
    EvalReport report;
    training::Outputs outputs;
};

/// SizeGAN plus one single-axis baseline per ratio, all on the same samples
/// in the same order.
std::vector<MethodResult> compare_methods(const training::PairTensors& pairs, models::Generator& generator,
                                          const std::vector<double>& ratios, models::SizeClassifier& classifier,
                                          uint64_t seed = 117);

/// Writes out_dir/report.json, out_dir/report.md and out_dir/grids/*.png.
/// Grid rows are samples; columns are source, each method, ground truth.
/// Throws ArgumentError when `results` is empty.
void render_report(const std::vector<MethodResult>& results, const training::PairTensors& pairs,
                   const fs::path& out_dir, int rows_per_grid = 8);

/// Parses report.json back into reports.
std::vector<EvalReport> load_reports(const fs::path& report_json);

}  // namespace sizemorph::evaluation
