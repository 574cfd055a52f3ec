#include "cli.hpp"

#include "sizemorph/deformation/field_io.hpp"
#include "sizemorph/errors.hpp"
#include "sizemorph/evaluation/evaluation.hpp"
#include "sizemorph/io/png.hpp"
#include "sizemorph/training/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace sizemorph::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Kind { Int, Real, Text, Bool, Reals };

struct Param {
    std::string key;
    Kind kind;
    json fallback;
    std::string help;
    bool is_path = false;
};

std::string flag_name(const std::string& key) {
    std::string s = key;
    for (auto& c : s) {
        if (c == '_') c = '-';
    }
    return "--" + s;
}

json coerce(const Param& p, const json& v) {
    switch (p.kind) {
        case Kind::Int:
            if (v.is_number_integer()) return v;
            break;
        case Kind::Real:
            if (v.is_number()) return v.get<double>();
            break;
        case Kind::Text:
            if (v.is_string()) return v;
            break;
        case Kind::Bool:
            if (v.is_boolean()) return v;
            break;
        case Kind::Reals:
            if (v.is_array()) {
                json out = json::array();
                for (const auto& x : v) {
                    if (!x.is_number()) throw UsageError("'" + p.key + "' must be a list of numbers");
                    out.push_back(x.get<double>());
                }
                return out;
            }
            break;
    }
    throw UsageError("config value for '" + p.key + "' has the wrong type: " + v.dump());
}

json parse_flag(const Param& p, const std::string& text) {
    try {
        size_t used = 0;
        switch (p.kind) {
            case Kind::Int: {
                auto v = std::stoll(text, &used);
                if (used != text.size()) break;
                return v;
            }
            case Kind::Real: {
                auto v = std::stod(text, &used);
                if (used != text.size()) break;
                return v;
            }
            case Kind::Text:
                return text;
            case Kind::Bool:
                return text == "true";
            case Kind::Reals: {
                json out = json::array();
                std::stringstream ss(text);
                for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stod(item));
                if (out.empty()) break;
                return out;
            }
        }
    } catch (const std::logic_error&) {
    }
    throw UsageError("invalid value for " + flag_name(p.key) + ": '" + text + "'");
}

struct Context {
    json config;  // resolved, flat
    std::ostream& out;
};

struct Command {
    std::string name;
    std::string description;
    std::vector<Param> params;
    std::function<void(const json&)> check;  // value validation, usage errors
    std::function<void(Context&)> execute;   // runtime errors
};

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fs::path path_of(const json& cfg, const std::string& key) { return fs::path(cfg.at(key).get<std::string>()); }

void require(const json& cfg, const std::string& key) {
    if (cfg.at(key).get<std::string>().empty()) throw UsageError("missing required " + flag_name(key));
}

void require_positive(const json& cfg, const std::string& key) {
    if (cfg.at(key).get<double>() <= 0) throw UsageError(flag_name(key) + " must be positive");
}

void require_direction(const json& cfg, const std::string& key, bool allow_empty) {
    const auto s = cfg.at(key).get<std::string>();
    if (allow_empty && s.empty()) return;
    try {
        training::parse_direction(s);
    } catch (const ConfigError&) {
        throw UsageError(flag_name(key) + " must be small2plus or plus2small, got '" + s + "'");
    }
}

void require_split(const json& cfg) {
    try {
        data::parse_split(cfg.at("split").get<std::string>());
    } catch (const std::exception&) {
        throw UsageError("--split must be train, val or test");
    }
}

void write_resolved(const json& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    json copy = cfg;
    copy.erase("out");
    std::ofstream f(dir / "resolved_config.json", std::ios::trunc);
    f << copy.dump(2) << "\n";
}

std::string weights_line(const training::LossWeights& w) {
    std::ostringstream os;
    os << "loss weights (smooth/bce/adv_img/adv_seg): " << w.smooth << "/" << w.bce << "/" << w.adv_img << "/"
       << w.adv_seg;
    return os.str();
}

std::vector<Param> gan_params() {
    return {
        {"dataset", Kind::Text, "", "dataset directory", true},
        {"classifier", Kind::Text, "", "pretrained classifier checkpoint", true},
        {"direction", Kind::Text, "small2plus", "small2plus or plus2small"},
        {"steps", Kind::Int, 2000, "training steps"},
        {"batch_size", Kind::Int, 16, "batch size"},
        {"lr_g", Kind::Real, 2e-3, "generator learning rate"},
        {"lr_d", Kind::Real, 2e-3, "discriminator learning rate"},
        {"beta1", Kind::Real, 0.0, "Adam beta1"},
        {"beta2", Kind::Real, 0.99, "Adam beta2"},
        {"r1_weight", Kind::Real, 1.0, "R1 penalty weight"},
        {"r1_interval", Kind::Int, 4, "steps between R1 evaluations"},
        {"grad_clip", Kind::Real, 100.0, "max generator gradient norm, 0 disables"},
        {"flip_augment", Kind::Bool, true, "random horizontal flips on discriminator inputs"},
        {"seed", Kind::Int, 117, "seed for initialization, batches and latents"},
        {"lambda_smooth", Kind::Real, 30.0, "field smoothness weight"},
        {"lambda_bce", Kind::Real, 1000.0, "size classifier weight"},
        {"lambda_adv_img", Kind::Real, 1.0, "image discriminator weight"},
        {"lambda_adv_seg", Kind::Real, 1.0, "segmentation discriminator weight"},
        {"width_divisor", Kind::Int, 1, "divide every generator and discriminator width by this"},
        {"log_every", Kind::Int, 50, "steps between metric records"},
        {"eval_every", Kind::Int, 500, "steps between validation passes"},
        {"checkpoint_every", Kind::Int, 500, "steps between resumable checkpoints"},
        {"resume", Kind::Bool, true, "continue from out/last.ckpt when present"},
    };
}

training::LossWeights weights_of(const json& cfg) {
    training::LossWeights w;
    w.smooth = cfg.at("lambda_smooth").get<double>();
    w.bce = cfg.at("lambda_bce").get<double>();
    w.adv_img = cfg.at("lambda_adv_img").get<double>();
    w.adv_seg = cfg.at("lambda_adv_seg").get<double>();
    return w;
}

void check_gan(const json& cfg) {
    require(cfg, "dataset");
    require(cfg, "classifier");
    require_direction(cfg, "direction", false);
    for (auto key : {"steps", "batch_size", "lr_g", "lr_d", "r1_interval", "width_divisor", "log_every",
                     "eval_every", "checkpoint_every"}) {
        require_positive(cfg, key);
    }
    try {
        weights_of(cfg).validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    if (cfg.at("r1_weight").get<double>() < 0) throw UsageError("--r1-weight must be >= 0");
    if (cfg.at("grad_clip").get<double>() < 0) throw UsageError("--grad-clip must be >= 0");
}

training::TrainConfig train_config_of(const json& cfg) {
    training::TrainConfig t;
    t.dataset = path_of(cfg, "dataset");
    t.classifier = path_of(cfg, "classifier");
    t.out_dir = path_of(cfg, "out");
    t.direction = training::parse_direction(cfg.at("direction").get<std::string>());
    t.steps = cfg.at("steps");
    t.batch_size = cfg.at("batch_size");
    t.lr_g = cfg.at("lr_g");
    t.lr_d = cfg.at("lr_d");
    t.beta1 = cfg.at("beta1");
    t.beta2 = cfg.at("beta2");
    t.r1_weight = cfg.at("r1_weight");
    t.r1_interval = cfg.at("r1_interval");
    t.grad_clip = cfg.at("grad_clip");
    t.flip_augment = cfg.at("flip_augment");
    t.seed = cfg.at("seed").get<uint64_t>();
    t.weights = weights_of(cfg);
    t.log_every = cfg.at("log_every");
    t.eval_every = cfg.at("eval_every");
    t.checkpoint_every = cfg.at("checkpoint_every");
    t.resume = cfg.at("resume");

    const int resolution = data::load_dataset(t.dataset).manifest().resolution;
    t.generator = models::GeneratorSpec::defaults(resolution);
    const int divisor = cfg.at("width_divisor");
    for (auto& [r, c] : t.generator.channels) c = std::max(4, c / divisor);
    t.validate();
    return t;
}

void print_train_result(std::ostream& out, const training::TrainResult& r) {
    out << "steps " << r.steps << "  val target-size accuracy " << r.val_accuracy << "  field mean |d| "
        << r.val_field.mean_abs << "  smoothness " << r.val_field.smoothness << "\n"
        << "model: " << fs::absolute(r.model).string() << "\n"
        << "metrics: " << fs::absolute(r.log).string() << "\n";
}

// Writes out/<id>/{image.png, seg.png, field.dfield} for every sample.
void write_outputs(const training::PairTensors& pairs, const training::Outputs& outputs, const fs::path& dir) {
    for (int64_t i = 0; i < pairs.size(); ++i) {
        auto sample = dir / pairs.ids[i];
        fs::create_directories(sample);
        io::save_image(sample / "image.png", Image(outputs.image[i]).clamped());
        io::save_labels(sample / "seg.png", SegmentationMap::from_labels(outputs.seg[i].argmax(0)));
        save_dfield(sample / "field.dfield", DeformationField(outputs.field[i].contiguous()));
    }
}

training::Direction direction_for(const json& cfg, const models::Checkpoint& ckpt) {
    const auto s = cfg.at("direction").get<std::string>();
    if (!s.empty()) return training::parse_direction(s);
    return training::parse_direction(ckpt.config.value("direction", std::string("small2plus")));
}

models::Generator generator_from(const models::Checkpoint& ckpt, const fs::path& path) {
    if (!ckpt.config.contains("generator")) throw LoadError(path.string() + " has no generator config");
    models::Generator g(models::GeneratorSpec::from_json(ckpt.config.at("generator")));
    ckpt.get_module("generator", *g);
    g->eval();
    return g;
}

training::PairTensors pairs_matching(const json& cfg, training::Direction direction, int resolution) {
    auto dataset = data::load_dataset(path_of(cfg, "input_dir"));
    if (resolution > 0 && dataset.manifest().resolution != resolution) {
        throw ConfigError("checkpoint resolution " + std::to_string(resolution) + " does not match dataset resolution " +
                          std::to_string(dataset.manifest().resolution));
    }
    auto pairs = training::load_pairs(dataset, data::parse_split(cfg.at("split").get<std::string>()), direction);
    if (pairs.size() == 0) throw ConfigError("no pairs in split '" + cfg.at("split").get<std::string>() + "'");
    return pairs;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

Command gen_data() {
    return {"gen-data",
            "Generate a synthetic paired dataset",
            {{"n", Kind::Int, 600, "number of pairs"},
             {"resolution", Kind::Int, 64, "image side in pixels"},
             {"seed", Kind::Int, 0, "master seed"}},
            [](const json& cfg) {
                try {
                    data::split_counts(cfg.at("n"), {});
                } catch (const ArgumentError& e) {
                    throw UsageError(std::string("--n: ") + e.what());
                }
                const int r = cfg.at("resolution");
                if (r < 16 || (r & (r - 1)) != 0) throw UsageError("--resolution must be a power of two >= 16");
            },
            [](Context& ctx) {
                data::BodyParams body;
                body.resolution = ctx.config.at("resolution");
                for (const auto& w : data::validate(body)) ctx.out << "warning: " << w << "\n";
                const auto root = path_of(ctx.config, "out");
                auto m = data::generate_dataset(root, ctx.config.at("n"), {}, body, ctx.config.at("seed").get<uint64_t>());
                write_resolved(ctx.config, root);
                ctx.out << "train " << m.ids(data::Split::Train).size() << "  val " << m.ids(data::Split::Val).size()
                        << "  test " << m.ids(data::Split::Test).size() << "\n";
            }};
}

Command train_classifier() {
    return {"train-classifier",
            "Pretrain the size classifier",
            {{"dataset", Kind::Text, "", "dataset directory", true},
             {"epochs", Kind::Int, 5, "training epochs"},
             {"batch_size", Kind::Int, 16, "batch size"},
             {"lr", Kind::Real, 1e-3, "learning rate"},
             {"seed", Kind::Int, 0, "seed"},
             {"jitter", Kind::Real, 0.2, "color jitter amplitude"},
             {"flip_labels", Kind::Bool, false, "train on inverted labels (sanity mode)"},
             {"base_width", Kind::Int, 0, "first stage width, 0 for the resolution default"},
             {"depth", Kind::Int, 0, "18 or 50, 0 for the resolution default"}},
            [](const json& cfg) {
                require(cfg, "dataset");
                for (auto key : {"epochs", "batch_size", "lr"}) require_positive(cfg, key);
                if (cfg.at("jitter").get<double>() < 0 || cfg.at("jitter").get<double>() >= 1) {
                    throw UsageError("--jitter must be in [0, 1)");
                }
                const int depth = cfg.at("depth");
                if (depth != 0 && depth != 18 && depth != 50) throw UsageError("--depth must be 18 or 50");
                if (cfg.at("base_width").get<int>() < 0) throw UsageError("--base-width must be >= 0");
            },
            [](Context& ctx) {
                const auto& cfg = ctx.config;
                training::ClassifierConfig c;
                c.dataset = path_of(cfg, "dataset");
                c.out_dir = path_of(cfg, "out");
                c.spec = models::ClassifierSpec::defaults(data::load_dataset(c.dataset).manifest().resolution);
                if (cfg.at("base_width").get<int>() > 0) c.spec.base_width = cfg.at("base_width");
                if (cfg.at("depth").get<int>() > 0) c.spec.depth = cfg.at("depth");
                c.epochs = cfg.at("epochs");
                c.batch_size = cfg.at("batch_size");
                c.lr = cfg.at("lr");
                c.seed = cfg.at("seed").get<uint64_t>();
                c.jitter = cfg.at("jitter");
                c.flip_labels = cfg.at("flip_labels");
                write_resolved(cfg, c.out_dir);
                auto r = training::pretrain_classifier(c);
                for (size_t e = 0; e < r.val_accuracy.size(); ++e) {
                    ctx.out << "epoch " << e << "  val accuracy " << r.val_accuracy[e] << "\n";
                }
                ctx.out << "best val accuracy " << r.best_val_accuracy << " (epoch " << r.best_epoch << ")\n"
                        << "checkpoint: " << fs::absolute(r.checkpoint).string() << "\n";
            }};
}

Command train_gan() {
    return {"train-gan", "Train the deformation generator", gan_params(), check_gan, [](Context& ctx) {
                auto t = train_config_of(ctx.config);
                if (!fs::exists(t.classifier)) throw ConfigError("classifier checkpoint not found: " + t.classifier.string());
                write_resolved(ctx.config, t.out_dir);
                print_train_result(ctx.out, training::train_gan(t));
            }};
}

Command ablate() {
    auto params = gan_params();
    params.push_back({"eval_classifier", Kind::Text, "", "held-out classifier for scoring (default: --classifier)", true});
    return {"ablate", "Train the image-only, +segmentation and full configurations", params, check_gan,
            [](Context& ctx) {
                auto t = train_config_of(ctx.config);
                if (!fs::exists(t.classifier)) throw ConfigError("classifier checkpoint not found: " + t.classifier.string());
                write_resolved(ctx.config, t.out_dir);
                auto r = training::ablation_suite(t, path_of(ctx.config, "eval_classifier"));
                for (const auto& e : r.entries) {
                    ctx.out << std::left << std::setw(10) << e.name << " test target-size accuracy " << e.test_accuracy
                            << "  smoothness " << e.smoothness << "  config " << e.config_hash << "\n";
                }
                ctx.out << (r.ordering_holds ? "ordering holds" : "FLAGGED: full model below image-only") << "\n"
                        << "report: " << fs::absolute(r.report).string() << "\n";
            }};
}

Command resize() {
    return {"resize",
            "Resize every source of a dataset split with a trained generator",
            {{"checkpoint", Kind::Text, "", "generator checkpoint (model.ckpt)", true},
             {"input_dir", Kind::Text, "", "dataset directory", true},
             {"split", Kind::Text, "test", "train, val or test"},
             {"direction", Kind::Text, "", "override the checkpoint's direction"},
             {"seed", Kind::Int, 117, "latent seed"}},
            [](const json& cfg) {
                require(cfg, "checkpoint");
                require(cfg, "input_dir");
                require_split(cfg);
                require_direction(cfg, "direction", true);
            },
            [](Context& ctx) {
                const auto& cfg = ctx.config;
                const auto path = path_of(cfg, "checkpoint");
                auto ckpt = models::load_checkpoint(path);
                auto gen = generator_from(ckpt, path);
                auto pairs = pairs_matching(cfg, direction_for(cfg, ckpt), gen->spec.resolution);
                auto outputs = training::run_generator(gen, pairs, cfg.at("seed").get<uint64_t>());
                const auto dir = path_of(cfg, "out");
                write_outputs(pairs, outputs, dir);
                write_resolved(cfg, dir);
                ctx.out << "resized " << pairs.size() << " samples\n";
            }};
}

Command baseline() {
    return {"baseline",
            "Single-axis horizontal scaling of every source in a split",
            {{"input_dir", Kind::Text, "", "dataset directory", true},
             {"split", Kind::Text, "test", "train, val or test"},
             {"direction", Kind::Text, "small2plus", "small2plus or plus2small"},
             {"ratio", Kind::Real, 1.36, "width ratio between size distributions"}},
            [](const json& cfg) {
                require(cfg, "input_dir");
                require_split(cfg);
                require_direction(cfg, "direction", false);
                require_positive(cfg, "ratio");
            },
            [](Context& ctx) {
                const auto& cfg = ctx.config;
                auto pairs = pairs_matching(cfg, training::parse_direction(cfg.at("direction").get<std::string>()), 0);
                auto outputs = evaluation::single_axis_outputs(pairs, cfg.at("ratio"));
                const auto dir = path_of(cfg, "out");
                write_outputs(pairs, outputs, dir);
                write_resolved(cfg, dir);
                ctx.out << evaluation::baseline_tag(cfg.at("ratio")) << ": " << pairs.size() << " samples\n";
            }};
}

Command evaluate() {
    return {"evaluate",
            "Score the generator against single-axis baselines and render a report",
            {{"checkpoint", Kind::Text, "", "generator checkpoint (model.ckpt)", true},
             {"classifier", Kind::Text, "", "classifier used for target-size accuracy", true},
             {"input_dir", Kind::Text, "", "dataset directory", true},
             {"split", Kind::Text, "test", "train, val or test"},
             {"direction", Kind::Text, "", "override the checkpoint's direction"},
             {"ratios", Kind::Reals, json::array({1.2, 1.36, 1.5}), "comma-separated baseline ratios"},
             {"seed", Kind::Int, 117, "latent seed"},
             {"rows_per_grid", Kind::Int, 8, "samples per comparison grid"}},
            [](const json& cfg) {
                require(cfg, "checkpoint");
                require(cfg, "classifier");
                require(cfg, "input_dir");
                require_split(cfg);
                require_direction(cfg, "direction", true);
                require_positive(cfg, "rows_per_grid");
                for (const auto& r : cfg.at("ratios")) {
                    if (r.get<double>() <= 0) throw UsageError("--ratios must be positive");
                }
            },
            [](Context& ctx) {
                const auto& cfg = ctx.config;
                const auto path = path_of(cfg, "checkpoint");
                auto ckpt = models::load_checkpoint(path);
                auto gen = generator_from(ckpt, path);
                auto pairs = pairs_matching(cfg, direction_for(cfg, ckpt), gen->spec.resolution);
                auto classifier = training::load_classifier(path_of(cfg, "classifier"));
                auto ratios = cfg.at("ratios").get<std::vector<double>>();
                auto results = evaluation::compare_methods(pairs, gen, ratios, classifier, cfg.at("seed").get<uint64_t>());
                const auto dir = path_of(cfg, "out");
                evaluation::render_report(results, pairs, dir, cfg.at("rows_per_grid"));
                write_resolved(cfg, dir);
                for (const auto& r : results) {
                    const auto& a = r.report.aggregates;
                    ctx.out << std::left << std::setw(18) << r.report.method << " accuracy " << a.target_size_accuracy
                            << "  histogram " << a.mean_histogram_distance << "  stripes " << a.stripe_preservation
                            << "  smoothness " << a.mean_smoothness << "\n";
                }
                ctx.out << "report: " << fs::absolute(dir / "report.json").string() << "\n";
            }};
}

Command viz_field() {
    return {"viz-field",
            "Render quiver plots of .dfield files",
            {{"field", Kind::Text, "", ".dfield file, or a directory searched recursively", true},
             {"stride", Kind::Int, 20, "arrow spacing in field pixels"},
             {"background", Kind::Text, "", "optional PNG drawn under the arrows", true}},
            [](const json& cfg) {
                require(cfg, "field");
                require_positive(cfg, "stride");
            },
            [](Context& ctx) {
                const auto& cfg = ctx.config;
                const auto src = path_of(cfg, "field");
                std::vector<fs::path> files;
                if (fs::is_directory(src)) {
                    for (const auto& e : fs::recursive_directory_iterator(src)) {
                        if (e.is_regular_file() && e.path().extension() == ".dfield") files.push_back(e.path());
                    }
                    std::sort(files.begin(), files.end());
                } else {
                    files.push_back(src);
                }
                if (files.empty()) throw ConfigError("no .dfield files under " + src.string());
                std::optional<Image> background;
                if (!cfg.at("background").get<std::string>().empty()) {
                    background = io::load_image(path_of(cfg, "background"));
                }
                const auto dir = path_of(cfg, "out");
                fs::create_directories(dir);
                for (const auto& f : files) {
                    // Name plots after the path relative to the search root.
                    auto rel = fs::is_directory(src) ? fs::relative(f, src) : f.filename();
                    std::string name = rel.replace_extension().generic_string();
                    std::replace(name.begin(), name.end(), '/', '_');
                    auto target = dir / (name + ".png");
                    visualize_field(load_dfield(f), target, cfg.at("stride"), background);
                    ctx.out << "wrote " << target.string() << "\n";
                }
                write_resolved(cfg, dir);
            }};
}

std::vector<Command> commands() {
    return {gen_data(), train_classifier(), train_gan(), ablate(), resize(), baseline(), evaluate(), viz_field()};
}

fs::path default_out(const std::string& command) {
    const char* env = std::getenv("SIZEMORPH_OUT");
    fs::path root = (env && *env) ? fs::path(env) : fs::path("runs");
    return root / command;
}

json load_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw UsageError("config file " + path.string() + " must hold a JSON object");
    return j;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Garment resizing with learned deformation fields", "sizemorph"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every command");

    auto cmds = commands();
    struct Bound {
        CLI::App* app;
        std::string config_file;
        bool dry_run = false;
        std::string out;
        std::map<std::string, std::string> values;
        std::map<std::string, bool> flags;
        std::map<std::string, CLI::Option*> options;
    };
    std::vector<Bound> bound(cmds.size());
    for (size_t i = 0; i < cmds.size(); ++i) {
        auto& b = bound[i];
        const auto& c = cmds[i];
        b.app = app.add_subcommand(c.name, c.description);
        b.app->add_option("--config", b.config_file, "JSON file of flat key/value settings");
        b.app->add_flag("--dry-run", b.dry_run, "Print the resolved config and exit");
        b.options["out"] = b.app->add_option("--out", b.out, "Output directory (default $SIZEMORPH_OUT/" + c.name + ")");
        for (const auto& p : c.params) {
            std::string help = p.help + " [" + (p.fallback.is_string() ? p.fallback.get<std::string>() : p.fallback.dump()) + "]";
            if (p.kind == Kind::Bool) {
                const auto name = flag_name(p.key);
                b.options[p.key] = b.app->add_flag(name + ",!--no-" + name.substr(2), b.flags[p.key], help);
            } else {
                b.options[p.key] = b.app->add_option(flag_name(p.key), b.values[p.key], help);
            }
        }
    }
    std::vector<const char*> argv{"sizemorph"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kUsage;
    }

    size_t which = 0;
    while (which < cmds.size() && !bound[which].app->parsed()) ++which;
    const auto& cmd = cmds[which];
    auto& b = bound[which];

    Context ctx{json::object(), out};
    try {
        auto& cfg = ctx.config;
        cfg["out"] = "";
        for (const auto& p : cmd.params) cfg[p.key] = p.fallback;
        if (!b.config_file.empty()) {
            const auto file = load_config_file(b.config_file);
            for (const auto& [key, value] : file.items()) {
                if (key == "out") {
                    if (!value.is_string()) throw UsageError("config value for 'out' must be a string");
                    cfg["out"] = value;
                    continue;
                }
                auto it = std::find_if(cmd.params.begin(), cmd.params.end(), [&](const Param& p) { return p.key == key; });
                if (it == cmd.params.end()) throw UsageError("unknown config key '" + key + "' for " + cmd.name);
                cfg[key] = coerce(*it, value);
            }
        }
        if (b.options["out"]->count() > 0) cfg["out"] = b.out;
        if (cfg["out"].get<std::string>().empty()) cfg["out"] = default_out(cmd.name).string();
        for (const auto& p : cmd.params) {
            if (b.options[p.key]->count() == 0) continue;
            cfg[p.key] = p.kind == Kind::Bool ? json(b.flags[p.key]) : parse_flag(p, b.values[p.key]);
        }
        cmd.check(cfg);
    } catch (const UsageError& e) {
        err << "sizemorph " << cmd.name << ": " << e.what() << "\n";
        return kUsage;
    }

    if (cmd.name == "train-gan" || cmd.name == "ablate") out << weights_line(weights_of(ctx.config)) << "\n";
    if (b.dry_run) {
        out << ctx.config.dump(2) << "\n";
        return kSuccess;
    }
    out << "out: " << fs::absolute(path_of(ctx.config, "out")).string() << "\n";
    for (const auto& p : cmd.params) {
        if (p.is_path && !ctx.config.at(p.key).get<std::string>().empty()) {
            out << p.key << ": " << fs::absolute(path_of(ctx.config, p.key)).string() << "\n";
        }
    }
    try {
        cmd.execute(ctx);
    } catch (const std::exception& e) {
        err << "sizemorph " << cmd.name << ": " << e.what() << "\n";
        return kRuntime;
    }
    return kSuccess;
}

}  // namespace sizemorph::cli
