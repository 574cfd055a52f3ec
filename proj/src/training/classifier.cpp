#include "sizemorph/errors.hpp"
#include "sizemorph/training/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace sizemorph::training {

namespace F = torch::nn::functional;

namespace {

struct LabeledImages {
    torch::Tensor images;  // [N, 3, R, R]
    torch::Tensor labels;  // [N] float, 1 = plus
};

LabeledImages both_sides(const data::Dataset& dataset, data::Split split, bool flip_labels) {
    std::vector<torch::Tensor> images;
    std::vector<float> labels;
    for (const auto& s : dataset.load_all(split)) {
        images.push_back(s.image_a.tensor());
        labels.push_back(s.size_a == data::SizeLabel::Plus ? 1.0f : 0.0f);
        images.push_back(s.image_b.tensor());
        labels.push_back(s.size_b == data::SizeLabel::Plus ? 1.0f : 0.0f);
    }
    if (images.empty()) throw ConfigError("split '" + std::string(data::to_string(split)) + "' is empty");
    auto l = torch::tensor(labels);
    if (flip_labels) l = 1.0f - l;
    return {torch::stack(images), l};
}

torch::Tensor uniform(std::mt19937_64& rng, int64_t n, double lo, double hi) {
    std::uniform_real_distribution<float> u(static_cast<float>(lo), static_cast<float>(hi));
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    return torch::tensor(v).view({n, 1, 1, 1});
}

// Random horizontal flip, then brightness, contrast and saturation jitter.
torch::Tensor augment(torch::Tensor x, std::mt19937_64& rng, double jitter) {
    const auto n = x.size(0);
    std::bernoulli_distribution coin(0.5);
    std::vector<uint8_t> flips(n);
    for (auto& f : flips) f = coin(rng);
    auto mask = torch::tensor(flips).to(torch::kBool).view({n, 1, 1, 1});
    x = torch::where(mask, x.flip({3}), x);
    if (jitter <= 0) return x;

    x = x * uniform(rng, n, 1 - jitter, 1 + jitter);
    auto gray = (0.299 * x.select(1, 0) + 0.587 * x.select(1, 1) + 0.114 * x.select(1, 2)).unsqueeze(1);
    auto mean = gray.mean({2, 3}, true);
    x = (x - mean) * uniform(rng, n, 1 - jitter, 1 + jitter) + mean;
    gray = (0.299 * x.select(1, 0) + 0.587 * x.select(1, 1) + 0.114 * x.select(1, 2)).unsqueeze(1);
    x = (x - gray) * uniform(rng, n, 1 - jitter, 1 + jitter) + gray;
    return x.clamp(0.0, 1.0);
}

}  // namespace

nlohmann::json ClassifierConfig::to_json() const {
    return {{"dataset", dataset.string()}, {"out_dir", out_dir.string()}, {"spec", spec.to_json()},
            {"epochs", epochs},            {"batch_size", batch_size},    {"lr", lr},
            {"seed", seed},                {"jitter", jitter},            {"flip_labels", flip_labels}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
    ClassifierConfig c;
    c.dataset = j.value("dataset", std::string());
    c.out_dir = j.value("out_dir", std::string());
    if (j.contains("spec")) c.spec = models::ClassifierSpec::from_json(j.at("spec"));
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    c.jitter = j.value("jitter", c.jitter);
    c.flip_labels = j.value("flip_labels", c.flip_labels);
    return c;
}

double classifier_accuracy(models::SizeClassifier& classifier, const torch::Tensor& images,
                           const torch::Tensor& labels, int batch_size) {
    if (images.size(0) == 0) throw ArgumentError("classifier_accuracy: no images");
    if (labels.size(0) != images.size(0)) throw ShapeError("classifier_accuracy: one label per image required");
    torch::NoGradGuard no_grad;
    const bool was_training = classifier->is_training();
    classifier->eval();
    int64_t correct = 0;
    for (int64_t i = 0; i < images.size(0); i += batch_size) {
        const auto n = std::min<int64_t>(batch_size, images.size(0) - i);
        auto pred = classifier(images.narrow(0, i, n)) > 0;
        correct += (pred == (labels.narrow(0, i, n) > 0.5)).sum().item<int64_t>();
    }
    classifier->train(was_training);
    return static_cast<double>(correct) / static_cast<double>(images.size(0));
}

models::SizeClassifier load_classifier(const fs::path& path) {
    auto ckpt = models::load_checkpoint(path);
    if (ckpt.config.value("kind", std::string()) != "size_classifier") {
        throw LoadError(path.string() + " is not a size classifier checkpoint");
    }
    models::SizeClassifier c(models::ClassifierSpec::from_json(ckpt.config.at("spec")));
    ckpt.get_module("classifier", *c);
    c->eval();
    return c;
}

ClassifierResult pretrain_classifier(const ClassifierConfig& config) {
    if (config.epochs < 1 || config.batch_size < 2) throw ConfigError("classifier needs epochs >= 1 and batch >= 2");
    auto dataset = data::load_dataset(config.dataset);
    auto train = both_sides(dataset, data::Split::Train, config.flip_labels);
    auto val = both_sides(dataset, data::Split::Val, config.flip_labels);
    const auto positives = train.labels.sum().item<double>();
    if (positives == 0 || positives == train.labels.size(0)) {
        throw ConfigError("training split contains a single size class; the classifier needs both");
    }

    fs::create_directories(config.out_dir);
    ClassifierResult result;
    result.checkpoint = config.out_dir / "classifier.ckpt";
    result.log = config.out_dir / "classifier_metrics.ndjson";
    std::ofstream log(result.log, std::ios::trunc);
    {
        std::ofstream cfg(config.out_dir / "classifier_config.json", std::ios::trunc);
        cfg << config.to_json().dump(2) << "\n";
    }

    torch::manual_seed(config.seed);
    std::mt19937_64 rng(config.seed);
    models::SizeClassifier net(config.spec);
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.lr));

    const int64_t n = train.images.size(0);
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        net->train();
        double loss_sum = 0.0;
        int64_t batches = 0;
        for (int64_t i = 0; i < n; i += config.batch_size) {
            const auto m = std::min<int64_t>(config.batch_size, n - i);
            if (m < 2) break;  // batch norm needs more than one sample
            auto idx = torch::tensor(std::vector<int64_t>(order.begin() + i, order.begin() + i + m));
            auto x = augment(train.images.index_select(0, idx), rng, config.jitter);
            auto y = train.labels.index_select(0, idx);
            auto loss = F::binary_cross_entropy_with_logits(net(x), y);
            if (!std::isfinite(loss.item<double>())) {
                throw NumericError("classifier loss non-finite at epoch " + std::to_string(epoch));
            }
            opt.zero_grad();
            loss.backward();
            opt.step();
            loss_sum += loss.item<double>();
            ++batches;
        }
        const double acc = classifier_accuracy(net, val.images, val.labels);
        result.val_accuracy.push_back(acc);
        log << nlohmann::json{{"epoch", epoch}, {"train_loss", loss_sum / std::max<int64_t>(batches, 1)},
                              {"val_accuracy", acc}}
                   .dump()
            << "\n";
        if (acc > result.best_val_accuracy || result.best_epoch < 0) {
            result.best_val_accuracy = acc;
            result.best_epoch = epoch;
            models::Checkpoint ckpt;
            ckpt.config = {{"kind", "size_classifier"}, {"spec", config.spec.to_json()}};
            ckpt.step = epoch;
            ckpt.put_module("classifier", *net);
            models::save_checkpoint(ckpt, result.checkpoint);
        }
    }
    return result;
}

}  // namespace sizemorph::training
