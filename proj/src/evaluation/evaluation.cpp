#include "sizemorph/evaluation/evaluation.hpp"

#include "sizemorph/deformation/field_ops.hpp"
#include "sizemorph/deformation/warp.hpp"
#include "sizemorph/errors.hpp"
#include "sizemorph/io/png.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace sizemorph::evaluation {

namespace {

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> json_opt(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

nlohmann::json aggregates_json(const Aggregates& a) {
    return {{"count", a.count},
            {"target_size_accuracy", a.target_size_accuracy},
            {"mean_histogram_distance", a.mean_histogram_distance},
            {"stripe_preservation", a.stripe_preservation},
            {"mean_abs_displacement", a.mean_abs_displacement},
            {"mean_smoothness", a.mean_smoothness}};
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

torch::Tensor target_probabilities(const torch::Tensor& images, models::SizeClassifier& classifier,
                                   data::SizeLabel target) {
    if (images.dim() != 4 || images.size(0) == 0) throw ArgumentError("target_size_accuracy: no images");
    torch::NoGradGuard no_grad;
    const bool was_training = classifier->is_training();
    classifier->eval();
    std::vector<torch::Tensor> probs;
    for (int64_t i = 0; i < images.size(0); i += 64) {
        const auto n = std::min<int64_t>(64, images.size(0) - i);
        probs.push_back(torch::sigmoid(classifier(images.narrow(0, i, n))).to(torch::kDouble));
    }
    classifier->train(was_training);
    auto p = torch::cat(probs);
    return target == data::SizeLabel::Plus ? p : 1.0 - p;
}

double target_size_accuracy(const torch::Tensor& images, models::SizeClassifier& classifier,
                            data::SizeLabel target) {
    auto p = target_probabilities(images, classifier, target);
    return (p > 0.5).to(torch::kDouble).mean().item<double>();
}

double target_size_accuracy(const std::vector<Image>& outputs, models::SizeClassifier& classifier,
                            data::SizeLabel target) {
    if (outputs.empty()) throw ArgumentError("target_size_accuracy: no images");
    std::vector<torch::Tensor> t;
    for (const auto& img : outputs) t.push_back(img.tensor());
    return target_size_accuracy(torch::stack(t), classifier, target);
}

torch::Tensor garment_mask(const SegmentationMap& seg, double min_confidence) {
    return seg.soft()[static_cast<int>(Segment::UpperGarment)] >= min_confidence;
}

std::optional<double> garment_histogram_distance(const Image& source, const torch::Tensor& source_mask,
                                                 const Image& output, const torch::Tensor& output_mask) {
    auto hist = [](const Image& img, const torch::Tensor& mask) -> std::optional<torch::Tensor> {
        if (mask.sizes() != torch::IntArrayRef{img.height(), img.width()}) {
            throw ShapeError("garment mask must match the image size");
        }
        auto m = mask.to(torch::kBool);
        const auto count = m.sum().item<int64_t>();
        if (count == 0) return std::nullopt;
        std::vector<torch::Tensor> h;
        for (int c = 0; c < 3; ++c) {
            auto v = img.tensor()[c].masked_select(m);
            auto bins = (v * kHistogramBins).floor().clamp(0, kHistogramBins - 1).to(torch::kLong);
            h.push_back(torch::bincount(bins, {}, kHistogramBins).to(torch::kDouble) / static_cast<double>(count));
        }
        return torch::stack(h);
    };
    auto a = hist(source, source_mask);
    auto b = hist(output, output_mask);
    if (!a || !b) return std::nullopt;
    return (*a - *b).abs().sum(1).mean().item<double>();
}

std::optional<int> stripe_count(const Image& image, const torch::Tensor& mask) {
    if (mask.sizes() != torch::IntArrayRef{image.height(), image.width()}) {
        throw ShapeError("garment mask must match the image size");
    }
    auto m = mask.to(torch::kDouble);
    auto gray = image.tensor().to(torch::kDouble).mean(0);
    auto per_row = m.sum(1);
    auto rows = (per_row >= 2).nonzero().flatten();
    if (rows.numel() == 0) return std::nullopt;
    auto profile_t = ((gray * m).sum(1) / per_row.clamp_min(1)).index_select(0, rows);
    std::vector<double> profile(profile_t.data_ptr<double>(), profile_t.data_ptr<double>() + profile_t.numel());

    const int n = static_cast<int>(profile.size());
    std::vector<double> smooth(n);
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        int k = 0;
        for (int j = std::max(0, i - 1); j <= std::min(n - 1, i + 1); ++j, ++k) sum += profile[j];
        smooth[i] = sum / k;
    }
    const auto [lo, hi] = std::minmax_element(smooth.begin(), smooth.end());
    const double range = *hi - *lo;
    if (range < 0.1) return 0;
    const double mid = 0.5 * (*hi + *lo);
    const double band = 0.25 * range;

    int state = 0;  // -1 below, +1 above, 0 undecided
    int changes = 0;
    for (double v : smooth) {
        int s = v > mid + band ? 1 : (v < mid - band ? -1 : 0);
        if (s == 0) continue;
        if (state != 0 && s != state) ++changes;
        state = s;
    }
    return (changes + 1) / 2;
}

FieldStats field_statistics(const DeformationField& field) { return training::field_stats(field.tensor()); }

Aggregates aggregate(const std::vector<SampleRecord>& samples) {
    Aggregates a;
    a.count = static_cast<int>(samples.size());
    if (samples.empty()) return a;
    int correct = 0, hist_n = 0, stripe_n = 0, stripe_same = 0;
    double hist_sum = 0.0, disp_sum = 0.0, smooth_sum = 0.0;
    for (const auto& s : samples) {
        correct += s.target_size_prob > 0.5;
        if (s.histogram_distance) {
            hist_sum += *s.histogram_distance;
            ++hist_n;
        }
        if (s.stripe_count_src && s.stripe_count_out) {
            ++stripe_n;
            stripe_same += *s.stripe_count_src == *s.stripe_count_out;
        }
        disp_sum += s.mean_abs_displacement;
        smooth_sum += s.smoothness;
    }
    const double n = static_cast<double>(samples.size());
    a.target_size_accuracy = correct / n;
    a.mean_histogram_distance = hist_n ? hist_sum / hist_n : 0.0;
    a.stripe_preservation = stripe_n ? static_cast<double>(stripe_same) / stripe_n : 0.0;
    a.mean_abs_displacement = disp_sum / n;
    a.mean_smoothness = smooth_sum / n;
    return a;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : samples) {
        per.push_back({{"id", s.id},
                       {"target_size_prob", s.target_size_prob},
                       {"histogram_distance", opt_json(s.histogram_distance)},
                       {"stripe_count_src", opt_json(s.stripe_count_src)},
                       {"stripe_count_out", opt_json(s.stripe_count_out)},
                       {"mean_abs_displacement", s.mean_abs_displacement},
                       {"smoothness", s.smoothness}});
    }
    return {{"method", method},
            {"target", std::string(data::to_string(target))},
            {"per_sample", per},
            {"aggregates", aggregates_json(aggregates)}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.target = data::parse_size(j.at("target").get<std::string>());
    for (const auto& p : j.at("per_sample")) {
        SampleRecord s;
        s.id = p.at("id").get<std::string>();
        s.target_size_prob = p.at("target_size_prob").get<double>();
        s.histogram_distance = json_opt<double>(p, "histogram_distance");
        s.stripe_count_src = json_opt<int>(p, "stripe_count_src");
        s.stripe_count_out = json_opt<int>(p, "stripe_count_out");
        s.mean_abs_displacement = p.at("mean_abs_displacement").get<double>();
        s.smoothness = p.at("smoothness").get<double>();
        r.samples.push_back(std::move(s));
    }
    const auto& a = j.at("aggregates");
    r.aggregates.count = a.at("count").get<int>();
    r.aggregates.target_size_accuracy = a.at("target_size_accuracy").get<double>();
    r.aggregates.mean_histogram_distance = a.at("mean_histogram_distance").get<double>();
    r.aggregates.stripe_preservation = a.at("stripe_preservation").get<double>();
    r.aggregates.mean_abs_displacement = a.at("mean_abs_displacement").get<double>();
    r.aggregates.mean_smoothness = a.at("mean_smoothness").get<double>();
    return r;
}

EvalReport evaluate_outputs(const std::string& method, const training::PairTensors& pairs,
                            const training::Outputs& outputs, models::SizeClassifier& classifier) {
    if (outputs.image.size(0) != pairs.size()) throw ShapeError("one output per sample required");
    EvalReport r;
    r.method = method;
    r.target = pairs.tgt_size;
    auto probs = target_probabilities(outputs.image, classifier, pairs.tgt_size);
    for (int64_t i = 0; i < pairs.size(); ++i) {
        Image src(pairs.image_src[i]);
        Image out(outputs.image[i]);
        auto src_mask = garment_mask(SegmentationMap::from_soft(pairs.seg_src[i]));
        auto out_mask = garment_mask(SegmentationMap::from_soft(outputs.seg[i]));
        auto stats = training::field_stats(outputs.field[i]);
        SampleRecord s;
        s.id = pairs.ids[i];
        s.target_size_prob = probs[i].item<double>();
        s.histogram_distance = garment_histogram_distance(src, src_mask, out, out_mask);
        s.stripe_count_src = stripe_count(src, src_mask);
        s.stripe_count_out = stripe_count(out, out_mask);
        s.mean_abs_displacement = stats.mean_abs;
        s.smoothness = stats.smoothness;
        r.samples.push_back(std::move(s));
    }
    r.aggregates = aggregate(r.samples);
    return r;
}

training::Outputs single_axis_outputs(const training::PairTensors& pairs, double ratio) {
    const double r = pairs.tgt_size == data::SizeLabel::Plus ? ratio : 1.0 / ratio;
    const auto h = static_cast<int>(pairs.image_src.size(2));
    const auto w = static_cast<int>(pairs.image_src.size(3));
    auto field = single_axis_field(h, w, r).tensor().unsqueeze(0).expand({pairs.size(), 2, h, w}).contiguous();
    torch::NoGradGuard no_grad;
    return {warp(pairs.image_src, field), warp(pairs.seg_src, field), field};
}

std::string baseline_tag(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", ratio);
    return std::string("single_axis_") + buf;
}

std::vector<MethodResult> compare_methods(const training::PairTensors& pairs, models::Generator& generator,
                                          const std::vector<double>& ratios, models::SizeClassifier& classifier,
                                          uint64_t seed) {
    std::vector<MethodResult> out;
    auto gen = training::run_generator(generator, pairs, seed);
    out.push_back({evaluate_outputs("sizegan", pairs, gen, classifier), gen});
    for (double r : ratios) {
        auto o = single_axis_outputs(pairs, r);
        out.push_back({evaluate_outputs(baseline_tag(r), pairs, o, classifier), o});
    }
    return out;
}

void render_report(const std::vector<MethodResult>& results, const training::PairTensors& pairs,
                   const fs::path& out_dir, int rows_per_grid) {
    if (results.empty()) throw ArgumentError("render_report: no reports");
    if (rows_per_grid < 1) throw ArgumentError("render_report: rows_per_grid must be positive");
    fs::create_directories(out_dir / "grids");

    nlohmann::json reports = nlohmann::json::array();
    for (const auto& r : results) reports.push_back(r.report.to_json());
    {
        std::ofstream js(out_dir / "report.json", std::ios::trunc);
        if (!js) throw IoError("cannot write " + (out_dir / "report.json").string());
        js << nlohmann::json{{"version", kReportVersion}, {"reports", reports}}.dump(2) << "\n";
    }

    std::ofstream md(out_dir / "report.md", std::ios::trunc);
    if (!md) throw IoError("cannot write " + (out_dir / "report.md").string());
    md << "# Evaluation report\n\n";
    md << "Target size: " << data::to_string(results.front().report.target) << ", samples: " << pairs.size()
       << "\n\n";
    md << "Sizing is measured by the size classifier. Faithfulness and realism columns are automated\n"
          "proxies (color histogram distance, stripe preservation, field smoothness), not human judgments.\n\n";
    md << "| method | target-size accuracy | histogram distance | stripe preservation | mean abs displacement | "
          "smoothness |\n";
    md << "|---|---|---|---|---|---|\n";
    for (const auto& r : results) {
        const auto& a = r.report.aggregates;
        md << "| " << r.report.method << " | " << fixed(a.target_size_accuracy) << " | "
           << fixed(a.mean_histogram_distance) << " | " << fixed(a.stripe_preservation) << " | "
           << fixed(a.mean_abs_displacement) << " | " << fixed(a.mean_smoothness, 8) << " |\n";
    }
    md << "\nGrid columns: source";
    for (const auto& r : results) md << " | " << r.report.method;
    md << " | ground truth\n";

    const int64_t n = pairs.size();
    for (int64_t start = 0, page = 0; start < n; start += rows_per_grid, ++page) {
        const auto rows = std::min<int64_t>(rows_per_grid, n - start);
        std::vector<torch::Tensor> lines;
        for (int64_t i = start; i < start + rows; ++i) {
            std::vector<torch::Tensor> cols{pairs.image_src[i]};
            for (const auto& r : results) cols.push_back(r.outputs.image[i].clamp(0, 1));
            cols.push_back(pairs.image_tgt[i]);
            lines.push_back(torch::cat(cols, 2));
        }
        auto grid = torch::cat(lines, 1);
        char name[32];
        std::snprintf(name, sizeof name, "grid_%03d.png", static_cast<int>(page));
        io::save_image(out_dir / "grids" / name, Image(grid.contiguous()));
        md << "\n![" << name << "](grids/" << name << ")\n";
    }
}

std::vector<EvalReport> load_reports(const fs::path& report_json) {
    std::ifstream in(report_json);
    if (!in) throw LoadError("cannot open " + report_json.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed " + report_json.string() + ": " + e.what());
    }
    if (j.value("version", 0) != kReportVersion) throw LoadError("unsupported report version in " + report_json.string());
    std::vector<EvalReport> out;
    for (const auto& r : j.at("reports")) out.push_back(EvalReport::from_json(r));
    return out;
}

}  // namespace sizemorph::evaluation
