#include "test_support.hpp"

#include "sizemorph/deformation/field_ops.hpp"
#include "sizemorph/deformation/warp.hpp"
#include "sizemorph/errors.hpp"
#include "sizemorph/evaluation/evaluation.hpp"
#include "sizemorph/io/png.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

using namespace sizemorph;
using namespace sizemorph::evaluation;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("sizemorph_eval_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

data::PairedSample striped(int stripes, uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto g = data::random_garment(rng);
    g.stripe_count = stripes;
    return data::generate_pair(g, data::BodyParams{}, seed);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

models::GeneratorSpec tiny_spec() {
    auto s = models::GeneratorSpec::defaults(64);
    s.latent_dim = 8;
    s.style_dim = 8;
    s.mapping_layers = 1;
    for (auto& [r, c] : s.channels) c = 4;
    return s;
}

// Shared small dataset for the pipeline-level cases.
const fs::path& small_dataset() {
    static const fs::path root = [] {
        auto p = temp_dir("dataset");
        data::generate_dataset(p, 40, {}, {}, 3);
        return p;
    }();
    return root;
}

}  // namespace

TEST_CASE("target size accuracy") {
    torch::manual_seed(0);
    models::SizeClassifier c(models::ClassifierSpec{64, 4, 18});
    c->eval();
    CHECK_THROWS_AS(target_size_accuracy(std::vector<Image>{}, c, data::SizeLabel::Plus), ArgumentError);
    CHECK_THROWS_AS(target_size_accuracy(torch::zeros({0, 3, 64, 64}), c, data::SizeLabel::Plus), ArgumentError);

    auto a = torch::rand({7, 3, 64, 64});
    auto b = torch::rand({5, 3, 64, 64}) * 0.2;
    for (auto target : {data::SizeLabel::Plus, data::SizeLabel::Small}) {
        const double acc_a = target_size_accuracy(a, c, target);
        const double acc_b = target_size_accuracy(b, c, target);
        const double both = target_size_accuracy(torch::cat({a, b}), c, target);
        CHECK(both == doctest::Approx((7 * acc_a + 5 * acc_b) / 12.0).epsilon(1e-12));
    }
    const double plus = target_size_accuracy(a, c, data::SizeLabel::Plus);
    const double small = target_size_accuracy(a, c, data::SizeLabel::Small);
    CHECK(plus + small == doctest::Approx(1.0));

    std::vector<Image> list;
    for (int i = 0; i < 7; ++i) list.emplace_back(a[i]);
    CHECK(target_size_accuracy(list, c, data::SizeLabel::Plus) == plus);
}

TEST_CASE("garment histogram distance") {
    auto s = striped(2, 11);
    auto mask = garment_mask(s.seg_a);
    REQUIRE(mask.sum().item<int64_t>() > 0);

    auto same = garment_histogram_distance(s.image_a, mask, s.image_a, mask);
    REQUIRE(same.has_value());
    CHECK(*same == 0.0);

    // Complementary colors land in mirrored bins.
    Image complement(1.0 - s.image_a.tensor());
    auto far = garment_histogram_distance(s.image_a, mask, complement, mask);
    REQUIRE(far.has_value());
    CHECK(*far >= 1.8);
    CHECK(*far <= 2.0);

    auto empty = torch::zeros_like(mask);
    CHECK_FALSE(garment_histogram_distance(s.image_a, empty, s.image_a, mask).has_value());
    CHECK_FALSE(garment_histogram_distance(s.image_a, mask, s.image_a, empty).has_value());
    CHECK_THROWS_AS(garment_histogram_distance(s.image_a, torch::ones({8, 8}, torch::kBool), s.image_a, mask),
                    ShapeError);
}

TEST_CASE("pure warp of a solid garment has zero histogram distance") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        auto s = striped(0, 100 + trial);
        auto src_mask = garment_mask(s.seg_a);
        // Smooth random field plus the single-axis scalings.
        std::vector<DeformationField> fields;
        for (double r : {1.2, 1.36, 1.5}) fields.push_back(single_axis_field(64, 64, r));
        auto coarse = torch::randn({1, 2, 4, 4}) * 0.05;
        fields.emplace_back(upsample_field(coarse, 64, 64).squeeze(0));
        for (const auto& f : fields) {
            auto out = warp_image(s.image_a, f);
            auto seg = warp_segmentation(s.seg_a, f);
            auto d = garment_histogram_distance(s.image_a, src_mask, out, garment_mask(seg));
            REQUIRE(d.has_value());
            CHECK(*d == 0.0);
        }
    }
}

TEST_CASE("single-axis outputs stay within the faithfulness calibration bound") {
    for (int i = 0; i < 10; ++i) {
        std::mt19937_64 rng(40 + i);
        auto g = data::random_garment(rng);
        auto s = data::generate_pair(g, data::BodyParams{}, 40 + i);
        for (double r : {1.2, 1.36, 1.5}) {
            auto f = single_axis_field(64, 64, r);
            auto out = warp_image(s.image_a, f);
            auto seg = warp_segmentation(s.seg_a, f);
            auto d = garment_histogram_distance(s.image_a, garment_mask(s.seg_a), out, garment_mask(seg));
            REQUIRE(d.has_value());
            CHECK(*d < 0.1);
        }
    }
}

TEST_CASE("stripe count") {
    for (int k = 0; k <= 4; ++k) {
        for (uint64_t seed : {1u, 2u, 3u}) {
            auto s = striped(k, 1000 * k + seed);
            CAPTURE(k);
            CAPTURE(seed);
            CHECK(stripe_count(s.image_a, garment_mask(s.seg_a)) == k);
            CHECK(stripe_count(s.image_b, garment_mask(s.seg_b)) == k);
        }
    }
    for (uint64_t seed : {7u, 8u, 9u}) {
        auto s = striped(5, seed);
        CHECK(stripe_count(s.image_a, garment_mask(s.seg_a)) == 5);
        auto f = single_axis_field(64, 64, 1.36);
        auto out = warp_image(s.image_a, f);
        auto seg = warp_segmentation(s.seg_a, f);
        CHECK(stripe_count(out, garment_mask(seg)) == 5);
    }
    auto solid = striped(0, 77);
    CHECK(stripe_count(solid.image_a, garment_mask(solid.seg_a)) == 0);
    CHECK_FALSE(stripe_count(solid.image_a, torch::zeros({64, 64}, torch::kBool)).has_value());
}

TEST_CASE("field statistics") {
    auto zero = field_statistics(identity_field(16, 16));
    CHECK(zero.mean_abs == 0.0);
    CHECK(zero.max_abs == 0.0);
    CHECK(zero.smoothness == 0.0);

    auto t = torch::zeros({2, 16, 16}, torch::kDouble);
    t[0].fill_(0.1);
    auto c = field_statistics(DeformationField(t));
    CHECK(c.mean_abs == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(c.max_abs == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(c.smoothness == 0.0);

    // dx = xn (1/r - 1) with xn at pixel centers: mean |xn| = 1/2 for even W,
    // max |xn| = 1 - 1/W, and every x step is 2/W.
    for (double r : {1.2, 1.36, 1.5}) {
        const int w = 64;
        const double k = std::abs(1.0 / r - 1.0);
        auto s = field_statistics(single_axis_field(32, w, r));
        CHECK(s.mean_abs == doctest::Approx(0.5 * k).epsilon(1e-6));
        CHECK(s.max_abs == doctest::Approx(k * (1.0 - 1.0 / w)).epsilon(1e-6));
        const double step = 2.0 * k / w;
        CHECK(s.smoothness == doctest::Approx(step * step).epsilon(1e-5));
    }
}

TEST_CASE("report aggregates are recomputable and round trip") {
    torch::manual_seed(1);
    auto ds = data::load_dataset(small_dataset());
    auto pairs = training::load_pairs(ds, data::Split::Train, training::Direction::SmallToPlus);
    models::SizeClassifier c(models::ClassifierSpec{64, 4, 18});
    auto out = single_axis_outputs(pairs, 1.36);
    auto r = evaluate_outputs("single_axis_1.36", pairs, out, c);
    CHECK(r.samples.size() == static_cast<size_t>(pairs.size()));
    auto again = aggregate(r.samples);
    CHECK(again.target_size_accuracy == r.aggregates.target_size_accuracy);
    CHECK(again.mean_histogram_distance == r.aggregates.mean_histogram_distance);
    CHECK(r.aggregates.mean_histogram_distance < 0.1);
    CHECK(r.aggregates.stripe_preservation == 1.0);

    auto back = EvalReport::from_json(r.to_json());
    CHECK(back.to_json() == r.to_json());
    CHECK(aggregate(back.samples).mean_smoothness == r.aggregates.mean_smoothness);

    // Identical inputs give identical reports.
    CHECK(evaluate_outputs("single_axis_1.36", pairs, out, c).to_json().dump() == r.to_json().dump());
}

TEST_CASE("reverse baseline shrinks") {
    auto ds = data::load_dataset(small_dataset());
    auto fwd = training::load_pairs(ds, data::Split::Train, training::Direction::SmallToPlus);
    auto rev = training::load_pairs(ds, data::Split::Train, training::Direction::PlusToSmall);
    CHECK(rev.tgt_size == data::SizeLabel::Small);
    CHECK(torch::equal(rev.image_src, fwd.image_tgt));
    auto grow = single_axis_outputs(fwd, 1.36);
    auto shrink = single_axis_outputs(rev, 1.36);
    CHECK(grow.field[0][0][0][0].item<float>() > 0.0f);  // left edge samples inward
    CHECK(shrink.field[0][0][0][0].item<float>() < 0.0f);  // left edge samples outward
}

TEST_CASE("compare methods and render report") {
    torch::manual_seed(2);
    auto ds = data::load_dataset(small_dataset());
    auto pairs = training::load_pairs(ds, data::Split::Train, training::Direction::SmallToPlus);
    models::Generator g(tiny_spec());
    models::SizeClassifier c(models::ClassifierSpec{64, 4, 18});
    auto results = compare_methods(pairs, g, {1.2, 1.36, 1.5}, c);
    REQUIRE(results.size() == 4);
    CHECK(results[0].report.method == "sizegan");
    CHECK(results[1].report.method == "single_axis_1.2");
    CHECK(results[2].report.method == "single_axis_1.36");
    CHECK(results[3].report.method == "single_axis_1.5");
    for (const auto& r : results) {
        REQUIRE(r.report.samples.size() == static_cast<size_t>(pairs.size()));
        for (size_t i = 0; i < r.report.samples.size(); ++i) CHECK(r.report.samples[i].id == pairs.ids[i]);
    }
    // The untrained generator is the identity.
    CHECK(results[0].report.aggregates.mean_histogram_distance == 0.0);
    CHECK(results[0].report.aggregates.mean_abs_displacement == 0.0);

    auto dir = temp_dir("report");
    render_report(results, pairs, dir / "a", 8);
    render_report(results, pairs, dir / "b", 8);
    CHECK(fs::exists(dir / "a" / "report.md"));
    auto grid = io::load_image(dir / "a" / "grids" / "grid_000.png");
    CHECK(grid.width() == 64 * (4 + 2));
    CHECK(grid.height() == 64 * 8);
    const int pages = static_cast<int>((pairs.size() + 7) / 8);
    CHECK(std::distance(fs::directory_iterator(dir / "a" / "grids"), fs::directory_iterator{}) == pages);

    for (const auto& name : {"report.json", "report.md", "grids/grid_000.png"}) {
        CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
    }
    auto loaded = load_reports(dir / "a" / "report.json");
    REQUIRE(loaded.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(loaded[i].method == results[i].report.method);
        CHECK(loaded[i].aggregates.target_size_accuracy == results[i].report.aggregates.target_size_accuracy);
        CHECK(aggregate(loaded[i].samples).mean_histogram_distance ==
              results[i].report.aggregates.mean_histogram_distance);
    }
    CHECK_THROWS_AS(render_report({}, pairs, dir / "c"), ArgumentError);
}
