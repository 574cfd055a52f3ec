#include "test_support.hpp"

#include "cli.hpp"

#include "sizemorph/deformation/field_io.hpp"
#include "sizemorph/evaluation/evaluation.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

using namespace sizemorph;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("sizemorph_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    }
    return files;
}

// Parses the JSON object printed by --dry-run (after the optional weights line).
json dry_config(const std::string& out) { return json::parse(out.substr(out.find('{'))); }

const fs::path& small_dataset() {
    static const fs::path root = [] {
        auto p = temp_dir("dataset") / "ds";
        auto r = run({"gen-data", "--n", "40", "--resolution", "32", "--seed", "2", "--out", p.string()});
        REQUIRE(r.code == 0);
        return p;
    }();
    return root;
}

const fs::path& small_classifier() {
    static const fs::path path = [] {
        auto dir = temp_dir("classifier");
        auto r = run({"train-classifier", "--dataset", small_dataset().string(), "--epochs", "1", "--base-width", "4",
                      "--out", dir.string()});
        REQUIRE(r.code == 0);
        return dir / "classifier.ckpt";
    }();
    return path;
}

std::vector<std::string> gan_args(const fs::path& out) {
    return {"train-gan",      "--dataset", small_dataset().string(), "--classifier", small_classifier().string(),
            "--steps",        "4",         "--batch-size",           "4",            "--width-divisor",
            "64",             "--log-every", "1",                    "--eval-every", "2",
            "--out",          out.string()};
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"nope"}).code == cli::kUsage);
    CHECK(run({"gen-data", "--bogus"}).code == cli::kUsage);
    CHECK(run({"gen-data", "--n", "abc"}).code == cli::kUsage);
    CHECK(run({"gen-data", "--n", "2", "--out", temp_dir("n2").string()}).code == cli::kUsage);
    CHECK(run({"train-gan"}).code == cli::kUsage);  // missing --dataset
    CHECK(run({"train-gan", "--dataset", "x", "--classifier", "y", "--direction", "up"}).code == cli::kUsage);
    CHECK(run({"train-gan", "--dataset", "x", "--classifier", "y", "--lambda-bce", "-1"}).code == cli::kUsage);
    CHECK(run({"baseline", "--input-dir", "x", "--split", "dev"}).code == cli::kUsage);

    auto help = run({"--help"});
    CHECK(help.code == cli::kSuccess);
    CHECK(help.out.find("train-gan") != std::string::npos);
}

TEST_CASE("gen-data splits and reproduces") {
    auto a = temp_dir("gen_a");
    auto b = temp_dir("gen_b");
    auto ra = run({"gen-data", "--n", "600", "--resolution", "64", "--seed", "7", "--out", (a / "ds").string()});
    REQUIRE(ra.code == 0);
    CHECK(ra.out.find("train 546  val 36  test 18") != std::string::npos);
    CHECK(ra.out.find("out: ") != std::string::npos);
    auto rb = run({"gen-data", "--n", "600", "--resolution", "64", "--seed", "7", "--out", (b / "ds").string()});
    REQUIRE(rb.code == 0);
    auto ta = tree(a / "ds");
    auto tb = tree(b / "ds");
    CHECK(ta.size() == 600 * 5 + 2);
    CHECK(ta == tb);
    CHECK(json::parse(ta.at("resolved_config.json"))["seed"] == 7);
}

TEST_CASE("config precedence: flag over file over default") {
    auto dir = temp_dir("precedence");
    {
        std::ofstream f(dir / "run.json");
        f << json{{"steps", 5}, {"lr_g", 0.001}, {"direction", "plus2small"}, {"out", (dir / "from_file").string()}}.dump();
    }
    auto r = run({"train-gan", "--dataset", "d", "--classifier", "c", "--config", (dir / "run.json").string(), "--steps",
                  "7", "--dry-run"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("loss weights (smooth/bce/adv_img/adv_seg): 30/1000/1/1") != std::string::npos);
    auto cfg = dry_config(r.out);
    CHECK(cfg["steps"] == 7);
    CHECK(cfg["lr_g"] == 0.001);
    CHECK(cfg["direction"] == "plus2small");
    CHECK(cfg["lr_d"] == 2e-3);
    CHECK(cfg["seed"] == 117);
    CHECK(cfg["resume"] == true);
    CHECK(cfg["out"] == (dir / "from_file").string());
    CHECK_FALSE(fs::exists(dir / "from_file"));  // dry run touches nothing

    auto flag = run({"train-gan", "--dataset", "d", "--classifier", "c", "--no-resume", "--dry-run"});
    CHECK(dry_config(flag.out)["resume"] == false);

    {
        std::ofstream f(dir / "bad_key.json");
        f << json{{"stepz", 5}}.dump();
    }
    CHECK(run({"train-gan", "--config", (dir / "bad_key.json").string()}).code == cli::kUsage);
    {
        std::ofstream f(dir / "bad_type.json");
        f << json{{"steps", "many"}}.dump();
    }
    CHECK(run({"train-gan", "--config", (dir / "bad_type.json").string()}).code == cli::kUsage);
    {
        std::ofstream f(dir / "broken.json");
        f << "{ not json";
    }
    CHECK(run({"train-gan", "--config", (dir / "broken.json").string()}).code == cli::kUsage);
    CHECK(run({"train-gan", "--config", (dir / "absent.json").string()}).code == cli::kUsage);
}

TEST_CASE("output root from the environment") {
    auto dir = temp_dir("env");
    setenv("SIZEMORPH_OUT", dir.string().c_str(), 1);
    auto r = run({"baseline", "--input-dir", "x", "--dry-run"});
    unsetenv("SIZEMORPH_OUT");
    REQUIRE(r.code == 0);
    auto cfg = dry_config(r.out);
    CHECK(cfg["out"] == (dir / "baseline").string());
    CHECK(cfg["ratio"] == 1.36);
    CHECK(cfg["direction"] == "small2plus");

    auto explicit_out = run({"baseline", "--input-dir", "x", "--out", "elsewhere", "--dry-run"});
    CHECK(dry_config(explicit_out.out)["out"] == "elsewhere");
}

TEST_CASE("runtime failures exit with 2") {
    auto dir = temp_dir("runtime");
    CHECK(run({"train-classifier", "--dataset", (dir / "absent").string(), "--out", (dir / "c").string()}).code ==
          cli::kRuntime);
    auto missing = run({"train-gan", "--dataset", small_dataset().string(), "--classifier",
                        (dir / "absent.ckpt").string(), "--out", (dir / "g").string()});
    CHECK(missing.code == cli::kRuntime);
    CHECK(missing.err.find("classifier") != std::string::npos);
    CHECK(run({"viz-field", "--field", (dir / "absent.dfield").string(), "--out", (dir / "v").string()}).code ==
          cli::kRuntime);
}

TEST_CASE("train, resize, baseline, evaluate and visualize") {
    auto dir = temp_dir("pipeline");
    auto r = run(gan_args(dir / "gan"));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("30/1000/1/1") != std::string::npos);
    CHECK(r.out.find("classifier: ") != std::string::npos);
    for (auto name : {"config.json", "metrics.ndjson", "model.ckpt", "resolved_config.json"}) {
        CHECK(fs::exists(dir / "gan" / name));
    }

    // Replaying the resolved config reproduces the run.
    auto replay = run({"train-gan", "--config", (dir / "gan" / "resolved_config.json").string(), "--out",
                       (dir / "replay").string()});
    REQUIRE(replay.code == 0);
    CHECK(slurp(dir / "gan" / "metrics.ndjson") == slurp(dir / "replay" / "metrics.ndjson"));
    CHECK(slurp(dir / "gan" / "model.ckpt") == slurp(dir / "replay" / "model.ckpt"));

    // An interrupted run resumes from its last checkpoint.
    auto part = gan_args(dir / "part");
    part[6] = "2";
    REQUIRE(run(part).code == 0);
    REQUIRE(run(gan_args(dir / "part")).code == 0);
    CHECK(slurp(dir / "gan" / "metrics.ndjson") == slurp(dir / "part" / "metrics.ndjson"));

    auto reverse_args = gan_args(dir / "p2s");
    reverse_args.insert(reverse_args.end(), {"--direction", "plus2small"});
    REQUIRE(run(reverse_args).code == 0);
    CHECK(json::parse(slurp(dir / "p2s" / "config.json"))["direction"] == "plus2small");

    const auto model = (dir / "gan" / "model.ckpt").string();
    auto resized = run({"resize", "--checkpoint", model, "--input-dir", small_dataset().string(), "--out",
                        (dir / "resized").string()});
    REQUIRE(resized.code == 0);
    const auto test_ids = data::load_dataset(small_dataset()).manifest().ids(data::Split::Test);
    REQUIRE_FALSE(test_ids.empty());
    for (const auto& id : test_ids) {
        for (auto name : {"image.png", "seg.png", "field.dfield"}) CHECK(fs::exists(dir / "resized" / id / name));
    }

    // A checkpoint trained at another resolution is refused.
    auto other = temp_dir("pipeline_other") / "ds";
    REQUIRE(run({"gen-data", "--n", "20", "--resolution", "64", "--seed", "1", "--out", other.string()}).code == 0);
    CHECK(run({"resize", "--checkpoint", model, "--input-dir", other.string(), "--out", (dir / "bad").string()}).code ==
          cli::kRuntime);

    auto base = run({"baseline", "--input-dir", small_dataset().string(), "--ratio", "1.36", "--out",
                     (dir / "baseline").string()});
    REQUIRE(base.code == 0);
    CHECK(base.out.find("single_axis_1.36") != std::string::npos);
    auto field = load_dfield(dir / "baseline" / test_ids[0] / "field.dfield");
    CHECK(field.tensor().abs().max().item<float>() > 0.0f);

    auto eval = run({"evaluate", "--checkpoint", model, "--classifier", small_classifier().string(), "--input-dir",
                     small_dataset().string(), "--out", (dir / "eval").string()});
    REQUIRE(eval.code == 0);
    auto reports = evaluation::load_reports(dir / "eval" / "report.json");
    REQUIRE(reports.size() == 4);
    std::vector<std::string> tags;
    for (const auto& rep : reports) tags.push_back(rep.method);
    CHECK(tags == std::vector<std::string>{"sizegan", "single_axis_1.2", "single_axis_1.36", "single_axis_1.5"});
    CHECK(fs::exists(dir / "eval" / "report.md"));
    CHECK(fs::exists(dir / "eval" / "grids" / "grid_000.png"));

    // Zero field renders as a dot grid.
    save_dfield(dir / "zero.dfield", DeformationField::zeros(64, 64));
    for (const auto& a : quiver_arrows(DeformationField::zeros(64, 64), 20)) {
        CHECK(a.u == 0.0);
        CHECK(a.v == 0.0);
    }
    auto viz = run({"viz-field", "--field", (dir / "zero.dfield").string(), "--out", (dir / "viz").string()});
    REQUIRE(viz.code == 0);
    CHECK(fs::exists(dir / "viz" / "zero.png"));
    CHECK(dry_config(run({"viz-field", "--field", "f", "--dry-run"}).out)["stride"] == 20);

    auto all = run({"viz-field", "--field", (dir / "resized").string(), "--out", (dir / "viz_all").string()});
    REQUIRE(all.code == 0);
    CHECK(fs::exists(dir / "viz_all" / (test_ids[0] + "_field.png")));
}

TEST_CASE("ablate runs three configurations from one command") {
    auto dir = temp_dir("ablate");
    auto args = gan_args(dir / "abl");
    args[6] = "2";
    args[0] = "ablate";
    auto r = run(args);
    REQUIRE(r.code == 0);
    for (auto name : {"img_only", "img_seg", "full"}) CHECK(fs::exists(dir / "abl" / name / "model.ckpt"));
    auto report = json::parse(slurp(dir / "abl" / "ablation.json"));
    CHECK(report["entries"].size() == 3);
    CHECK(r.out.find("img_only") != std::string::npos);
}
