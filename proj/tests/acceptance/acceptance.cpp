// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
// Usage: acceptance [--work DIR] [criterion ...]
// Without criterion numbers all eight run. Criteria 5 to 7 need the dataset
// and classifiers from criterion 3 and build them when they are missing.

#include "sizemorph/data/dataset.hpp"
#include "sizemorph/deformation/field_ops.hpp"
#include "sizemorph/deformation/warp.hpp"
#include "sizemorph/evaluation/evaluation.hpp"
#include "sizemorph/models/networks.hpp"
#include "sizemorph/training/training.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace sizemorph;
namespace fs = std::filesystem;

namespace {

// Pinned scale of the acceptance runs.
constexpr int kResolution = 64;
constexpr int kPairs = 600;
constexpr uint64_t kDataSeed = 7;
constexpr int kBatch = 16;
constexpr uint64_t kTrainSeed = 117;
constexpr uint64_t kHeldOutSeed = 5;
constexpr int kWidthDivisor = 4;
constexpr int64_t kSteps = 2000;
constexpr int64_t kAblationSteps = 600;

constexpr double kGradTolerance = 1e-4;
constexpr int kProbes = 100;
constexpr double kLinearityTolerance = 1e-6;
constexpr double kTranslationTolerance = 1e-9;
constexpr double kMassTolerance = 1e-6;
constexpr double kMinClassifierAccuracy = 0.95;
constexpr double kMinTargetAccuracy = 0.90;
constexpr double kMaxHistogramDistance = 0.15;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    std::vector<std::string> failed;
    std::ostringstream detail;

    bool pass() const { return failed.empty(); }
    void require(bool ok, const std::string& what) {
        if (!ok) failed.push_back(what);
    }
};

struct Context {
    fs::path work;
    fs::path dataset() const { return work / "data"; }
    fs::path classifier(uint64_t seed) const {
        return work / ("classifier_" + std::to_string(seed)) / "classifier.ckpt";
    }
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// 1. Warping core properties
// ---------------------------------------------------------------------------

double relative_error(double fd, double an) {
    return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
}

// Central differences of a scalar objective along single entries of `x`,
// compared with the autograd gradient. `skip` rejects probes that would
// straddle a kink of the objective.
double worst_gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& objective,
                            const torch::Tensor& x, std::mt19937& rng,
                            const std::function<bool(int64_t)>& skip) {
    auto leaf = x.clone().requires_grad_(true);
    objective(leaf).backward();
    const auto grad = leaf.grad().flatten();
    const double step = 1e-4;
    double worst = 0.0;
    int checked = 0;
    while (checked < kProbes) {
        const auto i = static_cast<int64_t>(rng() % x.numel());
        if (skip(i)) continue;
        auto plus = x.clone();
        auto minus = x.clone();
        plus.view(-1)[i] += step;
        minus.view(-1)[i] -= step;
        const double fd = (objective(plus).item<double>() - objective(minus).item<double>()) / (2 * step);
        worst = std::max(worst, relative_error(fd, grad[i].item<double>()));
        ++checked;
    }
    return worst;
}

Outcome warping_core(const Context&) {
    Outcome o;
    const auto start = Clock::now();
    torch::manual_seed(1);
    std::mt19937 rng(11);

    // Zero field returns the input bitwise, for images and soft maps, in
    // float and double.
    bool identity = true;
    for (auto dtype : {torch::kFloat, torch::kDouble}) {
        for (auto [n, c, h, w] : std::vector<std::array<int64_t, 4>>{{1, 3, 64, 64}, {4, 3, 17, 23}, {2, 9, 64, 64}}) {
            auto src = torch::rand({n, c, h, w}, dtype);
            identity = identity && torch::equal(warp(src, torch::zeros({n, 2, h, w}, dtype)), src);
        }
    }
    const Image img(torch::rand({3, 64, 64}));
    identity = identity && torch::equal(warp_image(img, identity_field(64, 64)).tensor(), img.tensor());
    o.require(identity, "zero-field identity");

    // Gradients of warp (field and source) and smoothness, double precision.
    const int h = 12, w = 10;
    auto image = torch::rand({1, 3, h, w}, torch::kDouble);
    auto field = (torch::rand({1, 2, h, w}, torch::kDouble) - 0.5) * 0.6;
    auto weights = torch::randn({1, 3, h, w}, torch::kDouble);
    const auto flat_field = field.flatten();
    // Bilinear sampling has kinks on the pixel grid and at the clamped border.
    auto near_kink = [&](int64_t i) {
        const int64_t c = i / (h * w);
        const int64_t y = (i / w) % h;
        const int64_t x = i % w;
        const double d = flat_field[i].item<double>();
        const double pos = c == 0 ? x + d * w / 2.0 : y + d * h / 2.0;
        const double extent = c == 0 ? w : h;
        const double frac = pos - std::floor(pos);
        return frac < 0.01 || frac > 0.99 || pos < 0.01 || pos > extent - 1.01;
    };
    const double warp_field_err = worst_gradient_error(
        [&](const torch::Tensor& f) { return (warp(image, f) * weights).sum(); }, field, rng, near_kink);
    const double warp_image_err = worst_gradient_error(
        [&](const torch::Tensor& s) { return (warp(s, field) * weights).sum(); }, image, rng,
        [](int64_t) { return false; });
    const double smooth_err = worst_gradient_error(
        [&](const torch::Tensor& f) { return smoothness_loss(f); }, torch::randn({1, 2, h, w}, torch::kDouble), rng,
        [](int64_t) { return false; });
    o.require(warp_field_err < kGradTolerance, "warp field gradient");
    o.require(warp_image_err < kGradTolerance, "warp source gradient");
    o.require(smooth_err < kGradTolerance, "smoothness gradient");

    // Pyramid composition is linear in the levels.
    double linearity = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<torch::Tensor> a, b, mix;
        const double alpha = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
        for (int r = 4; r <= kResolution; r *= 2) {
            a.push_back(torch::randn({2, 2, r, r}, torch::kDouble) * 0.1);
            b.push_back(torch::randn({2, 2, r, r}, torch::kDouble) * 0.1);
            mix.push_back(a.back() * alpha + b.back());
        }
        const auto lhs = compose_pyramid(mix);
        const auto rhs = compose_pyramid(a) * alpha + compose_pyramid(b);
        linearity = std::max(linearity, (lhs - rhs).abs().max().item<double>());
    }
    o.require(linearity < kLinearityTolerance, "pyramid linearity");

    // Smoothness ignores a constant offset.
    double translation = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        auto f = torch::randn({2, 2, 32, 32}, torch::kDouble) * 0.2;
        auto offset = torch::randn({1, 2, 1, 1}, torch::kDouble);
        translation = std::max(
            translation, std::abs(smoothness_loss(f + offset).item<double>() - smoothness_loss(f).item<double>()));
    }
    o.require(translation < kTranslationTolerance, "smoothness translation invariance");

    // Warped soft segmentations keep unit mass per pixel.
    double mass = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        auto labels = torch::randint(0, kNumClasses, {kResolution, kResolution}, torch::kLong);
        const auto seg = SegmentationMap::from_labels(labels);
        const DeformationField f(torch::randn({2, kResolution, kResolution}) * 0.3);
        const auto out = warp_segmentation(seg, f);
        mass = std::max(mass, (out.soft().sum(0) - 1.0).abs().max().item<double>());
    }
    o.require(mass < kMassTolerance, "segmentation mass");

    const double elapsed = seconds_since(start);
    o.require(elapsed < 60.0, "runtime under 1 min");
    o.detail << "grad rel err field " << fmt(warp_field_err, 3) << " source " << fmt(warp_image_err, 3)
             << " smoothness " << fmt(smooth_err, 3) << "; linearity " << fmt(linearity, 3) << "; translation "
             << fmt(translation, 3) << "; mass " << fmt(mass, 3) << "; " << fmt(elapsed, 3) << " s";
    return o;
}

// ---------------------------------------------------------------------------
// 2. Single-axis width law
// ---------------------------------------------------------------------------

int mask_width(const torch::Tensor& row) {
    auto idx = torch::nonzero(row).flatten();
    if (idx.numel() == 0) return 0;
    return static_cast<int>(idx.max().item<int64_t>() - idx.min().item<int64_t>() + 1);
}

Outcome single_axis_law(const Context&) {
    Outcome o;
    double worst = 0.0;
    for (int size : {64, 128, 256}) {
        for (int base : {size / 8, size / 4, size / 3, size / 2 + 2}) {
            auto labels = torch::zeros({size, size}, torch::kLong);
            labels.narrow(1, (size - base) / 2, base).narrow(0, size / 4, size / 2).fill_(1);
            const auto seg = SegmentationMap::from_labels(labels);
            const Image image(seg.mask(Segment::UpperGarment).to(torch::kFloat).unsqueeze(0).repeat({3, 1, 1}));
            for (double ratio : {1.2, 1.36, 1.5}) {
                const auto resized = single_axis_resize(image, ratio);
                const auto warped = warp_segmentation(seg, single_axis_field(size, size, ratio));
                for (int row : {size / 4, size / 2, 3 * size / 4 - 1}) {
                    const double expected = ratio * base;
                    const int w_img = mask_width(resized.tensor()[0][row] > 0.5);
                    const int w_seg = mask_width(warped.soft()[1][row] > 0.5);
                    worst = std::max({worst, std::abs(w_img - expected), std::abs(w_seg - expected)});
                }
            }
        }
    }
    o.require(worst <= 1.0, "width within 1 px");
    o.detail << "worst width error " << fmt(worst, 3) << " px over 3 ratios, 12 masks";
    return o;
}

// ---------------------------------------------------------------------------
// 3. Classifier pretraining
// ---------------------------------------------------------------------------

void ensure_dataset(const Context& ctx) {
    if (fs::exists(ctx.dataset() / "manifest.json")) return;
    data::BodyParams body;
    body.resolution = kResolution;
    data::generate_dataset(ctx.dataset(), kPairs, data::SplitFractions{}, body, kDataSeed);
}

training::ClassifierResult train_classifier(const Context& ctx, uint64_t seed) {
    training::ClassifierConfig c;
    c.dataset = ctx.dataset();
    c.out_dir = ctx.classifier(seed).parent_path();
    c.spec = models::ClassifierSpec::defaults(kResolution);
    c.epochs = 5;
    c.batch_size = kBatch;
    c.seed = seed;
    return training::pretrain_classifier(c);
}

void ensure_classifier(const Context& ctx, uint64_t seed) {
    ensure_dataset(ctx);
    if (!fs::exists(ctx.classifier(seed))) train_classifier(ctx, seed);
}

Outcome classifier_pretraining(const Context& ctx) {
    Outcome o;
    ensure_dataset(ctx);
    const auto start = Clock::now();
    o.detail << "best val accuracy";
    for (uint64_t seed : {0, 1, 2}) {
        const auto r = train_classifier(ctx, seed);
        o.detail << " seed " << seed << " " << fmt(r.best_val_accuracy);
        o.require(r.best_val_accuracy >= kMinClassifierAccuracy, "seed " + std::to_string(seed) + " accuracy");
    }
    const double elapsed = seconds_since(start);
    o.require(elapsed < 600.0, "runtime under 10 min");
    o.detail << "; " << fmt(elapsed) << " s for 3 seeds";
    return o;
}

// ---------------------------------------------------------------------------
// 4. Zero-init identity
// ---------------------------------------------------------------------------

Outcome zero_init_identity(const Context&) {
    Outcome o;
    torch::manual_seed(4);
    const auto spec = models::GeneratorSpec::defaults(kResolution);
    models::Generator generator(spec);
    generator->eval();
    torch::NoGradGuard no_grad;
    int exact = 0;
    for (int i = 0; i < 20; ++i) {
        auto image = torch::rand({1, 3, kResolution, kResolution});
        auto seg = one_hot_labels(torch::randint(0, kNumClasses, {1, kResolution, kResolution}, torch::kLong));
        auto z = torch::randn({1, spec.latent_dim});
        const auto out = generator->forward(image, seg, z);
        if (torch::equal(out.image, image) && torch::equal(out.seg, seg)) ++exact;
    }
    o.require(exact == 20, "bitwise identity");
    o.detail << exact << "/20 inputs returned bitwise";
    return o;
}

// ---------------------------------------------------------------------------
// 5 and 6. Training outcome in each direction
// ---------------------------------------------------------------------------

training::TrainConfig acceptance_config(const Context& ctx, training::Direction direction, const fs::path& out,
                                        int64_t steps) {
    training::TrainConfig t;
    t.dataset = ctx.dataset();
    t.classifier = ctx.classifier(0);
    t.out_dir = out;
    t.direction = direction;
    t.batch_size = kBatch;
    t.steps = steps;
    t.seed = kTrainSeed;
    t.log_every = 50;
    t.eval_every = 500;
    t.checkpoint_every = 500;
    t.resume = false;
    t.generator = models::GeneratorSpec::defaults(kResolution);
    for (auto& [r, c] : t.generator.channels) c = std::max(4, c / kWidthDivisor);
    return t;
}

evaluation::Aggregates score(const fs::path& model, const training::PairTensors& pairs,
                             models::SizeClassifier& held_out) {
    auto generator = training::load_generator(model);
    const auto outputs = training::run_generator(generator, pairs, kTrainSeed);
    return evaluation::evaluate_outputs("sizegan", pairs, outputs, held_out).aggregates;
}

Outcome training_outcome(const Context& ctx, training::Direction direction) {
    Outcome o;
    ensure_classifier(ctx, 0);
    ensure_classifier(ctx, kHeldOutSeed);
    const auto start = Clock::now();
    const auto root = ctx.work / training::to_string(direction);

    const auto full = training::train_gan(acceptance_config(ctx, direction, root / "full", kSteps));
    auto control_config = acceptance_config(ctx, direction, root / "no_smooth", kSteps);
    control_config.weights.smooth = 0.0;
    const auto control = training::train_gan(control_config);

    const auto dataset = data::load_dataset(ctx.dataset());
    const auto pairs = training::load_pairs(dataset, data::Split::Test, direction);
    auto held_out = training::load_classifier(ctx.classifier(kHeldOutSeed));
    const auto a = score(full.model, pairs, held_out);
    const auto c = score(control.model, pairs, held_out);

    // Side-by-side report with the single-axis baselines, for inspection.
    auto generator = training::load_generator(full.model);
    const auto results = evaluation::compare_methods(pairs, generator, {1.2, 1.36, 1.5}, held_out, kTrainSeed);
    evaluation::render_report(results, pairs, root / "report");

    o.require(a.target_size_accuracy >= kMinTargetAccuracy, "target-size accuracy");
    o.require(a.mean_histogram_distance < kMaxHistogramDistance, "histogram distance");
    o.require(a.mean_smoothness < c.mean_smoothness, "smoothness below control");
    o.detail << kSteps << " steps, " << pairs.size() << " test outputs: accuracy " << fmt(a.target_size_accuracy)
             << ", histogram distance " << fmt(a.mean_histogram_distance) << ", smoothness "
             << fmt(a.mean_smoothness, 3) << " vs control " << fmt(c.mean_smoothness, 3) << "; "
             << fmt(seconds_since(start)) << " s";
    return o;
}

Outcome small_to_plus(const Context& ctx) { return training_outcome(ctx, training::Direction::SmallToPlus); }
Outcome plus_to_small(const Context& ctx) { return training_outcome(ctx, training::Direction::PlusToSmall); }

// ---------------------------------------------------------------------------
// 7. Ablation ordering
// ---------------------------------------------------------------------------

Outcome ablation_ordering(const Context& ctx) {
    Outcome o;
    ensure_classifier(ctx, 0);
    ensure_classifier(ctx, kHeldOutSeed);
    const auto start = Clock::now();
    o.detail << kAblationSteps << " steps, test accuracy img_only/img_seg/full:";
    for (uint64_t seed : {117, 118, 119}) {
        auto base = acceptance_config(ctx, training::Direction::SmallToPlus,
                                      ctx.work / ("ablation_" + std::to_string(seed)), kAblationSteps);
        base.seed = seed;
        const auto r = training::ablation_suite(base, ctx.classifier(kHeldOutSeed));
        o.detail << " seed " << seed;
        for (const auto& e : r.entries) o.detail << (e.name == "img_only" ? " " : "/") << fmt(e.test_accuracy, 3);
        const bool reported = fs::exists(r.report);
        o.require(reported, "ablation report for seed " + std::to_string(seed));
        if (!r.ordering_holds) o.detail << " (ordering flagged)";
        o.require(r.ordering_holds, "ordering for seed " + std::to_string(seed));
    }
    o.detail << "; " << fmt(seconds_since(start)) << " s";
    return o;
}

// ---------------------------------------------------------------------------
// 8. Determinism
// ---------------------------------------------------------------------------

Outcome determinism(const Context& ctx) {
    Outcome o;
    ensure_classifier(ctx, 0);
    std::vector<std::string> logs;
    for (const char* name : {"run_a", "run_b"}) {
        auto t = acceptance_config(ctx, training::Direction::SmallToPlus, ctx.work / "determinism" / name, 40);
        t.log_every = 1;
        t.eval_every = 20;
        t.checkpoint_every = 20;
        fs::remove_all(t.out_dir);
        const auto r = training::train_gan(t);
        logs.push_back(slurp(r.log));
    }
    o.require(!logs[0].empty(), "non-empty metric log");
    o.require(logs[0] == logs[1], "identical metric logs");
    o.detail << "metrics.ndjson " << logs[0].size() << " bytes, " << (logs[0] == logs[1] ? "identical" : "different");
    return o;
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*run)(const Context&);
};

const std::vector<Criterion> kCriteria{
    {1, "warping core properties", warping_core},
    {2, "single-axis width law", single_axis_law},
    {3, "classifier pretraining", classifier_pretraining},
    {4, "zero-init identity", zero_init_identity},
    {5, "small to plus training outcome", small_to_plus},
    {6, "plus to small training outcome", plus_to_small},
    {7, "ablation ordering", ablation_ordering},
    {8, "determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
    Context ctx;
    if (const char* env = std::getenv("SIZEMORPH_ACCEPTANCE_DIR")) ctx.work = env;
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--work" && i + 1 < argc) {
            ctx.work = argv[++i];
        } else {
            try {
                selected.insert(std::stoi(arg));
            } catch (const std::exception&) {
                std::cerr << "usage: acceptance [--work DIR] [criterion ...]\n";
                return 2;
            }
        }
    }
    if (ctx.work.empty()) ctx.work = fs::temp_directory_path() / "sizemorph_acceptance";
    fs::create_directories(ctx.work);
    torch::set_num_threads(1);

    int failures = 0;
    for (const auto& c : kCriteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        Outcome o;
        try {
            o = c.run(ctx);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        std::string line = o.detail.str();
        if (!o.pass()) {
            ++failures;
            line += " (failed:";
            for (size_t i = 0; i < o.failed.size(); ++i) line += (i ? ", " : " ") + o.failed[i];
            line += ")";
        }
        std::cout << (o.pass() ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << ": " << line
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
