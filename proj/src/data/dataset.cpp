#include "sizemorph/data/dataset.hpp"

#include "sizemorph/errors.hpp"
#include "sizemorph/io/png.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace sizemorph::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;
constexpr std::array<Split, 3> kSplits{Split::Train, Split::Val, Split::Test};

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    return json::parse(in);
}

std::string sample_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "pair_%05d", index);
    return buf;
}

json sample_meta(const PairedSample& s) {
    return {{"id", s.id},
            {"garment_id", s.garment_id},
            {"size_a", to_string(s.size_a)},
            {"size_b", to_string(s.size_b)},
            {"keypoints_a", s.keypoints_a},
            {"keypoints_b", s.keypoints_b},
            {"pattern", s.garment},
            {"origin", s.origin}};
}

bool inside(const Point& p, int w, int h) { return p.x >= 0 && p.y >= 0 && p.x <= w && p.y <= h; }

cv::Mat to_mat(const Image& image) {
    auto hwc = image.tensor().to(torch::kFloat).permute({1, 2, 0}).contiguous();
    return cv::Mat(image.height(), image.width(), CV_32FC3, hwc.data_ptr<float>()).clone();
}

Image from_mat(const cv::Mat& m) {
    auto t = torch::from_blob(m.data, {m.rows, m.cols, 3}, torch::kFloat).clone();
    return Image(t.permute({2, 0, 1}).contiguous());
}

}  // namespace

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view text) {
    for (auto s : kSplits) {
        if (to_string(s) == text) return s;
    }
    throw ArgumentError("unknown split '" + std::string(text) + "'");
}

std::array<int, 3> split_counts(int n, const SplitFractions& fractions) {
    const std::array<double, 3> f{fractions.train, fractions.val, fractions.test};
    double total = 0.0;
    for (double v : f) {
        if (!(v >= 0.0)) throw ArgumentError("split fractions must be non-negative");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("split fractions must sum to 1");
    if (n < 3) throw ArgumentError("need at least 3 pairs so that every split is non-empty");

    std::array<int, 3> counts{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = f[i] * n;
        // Guard against 0.29 * 100 == 28.999999999999996.
        counts[i] = static_cast<int>(std::floor(exact + 1e-9));
        remainder[i] = exact - counts[i];
        assigned += counts[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
    for (int c : counts) {
        if (c == 0) throw ArgumentError("n=" + std::to_string(n) + " leaves a split empty");
    }
    return counts;
}

fs::path DatasetManifest::sample_dir(Split s, const std::string& id) const {
    return root / std::string(to_string(s)) / id;
}

void DatasetManifest::save() const {
    json j = {{"version", kManifestVersion}, {"resolution", resolution}, {"seed", seed}};
    for (auto s : kSplits) j["splits"][std::string(to_string(s))] = ids(s);
    fs::create_directories(root);
    write_json(root / "manifest.json", j);
}

void write_sample(const fs::path& dir, const PairedSample& sample) {
    fs::create_directories(dir);
    io::save_image(dir / "A.png", sample.image_a);
    io::save_image(dir / "B.png", sample.image_b);
    io::save_labels(dir / "A_seg.png", sample.seg_a);
    io::save_labels(dir / "B_seg.png", sample.seg_b);
    write_json(dir / "meta.json", sample_meta(sample));
}

DatasetManifest generate_dataset(const fs::path& root, int n_pairs, const SplitFractions& fractions,
                                 const BodyParams& body, std::uint64_t seed) {
    const auto counts = split_counts(n_pairs, fractions);
    validate(body);

    std::vector<int> order(n_pairs);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(seed, 0xD5u));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    DatasetManifest m;
    m.root = root;
    m.resolution = body.resolution;
    m.seed = seed;
    int cursor = 0;
    for (auto s : kSplits) {
        const int count = counts[static_cast<int>(s)];
        std::vector<int> members(order.begin() + cursor, order.begin() + cursor + count);
        std::sort(members.begin(), members.end());
        for (int index : members) m.ids(s).push_back(sample_id(index));
        cursor += count;
    }
    for (auto s : kSplits) {
        for (const auto& id : m.ids(s)) {
            const int index = std::stoi(id.substr(5));
            std::mt19937_64 garment_rng(derive_seed(seed, 2ull * index));
            const auto garment = random_garment(garment_rng);
            auto sample = generate_pair(garment, body, derive_seed(seed, 2ull * index + 1));
            sample.id = id;
            write_sample(m.sample_dir(s, id), sample);
        }
    }
    m.save();
    return m;
}

PairedSample Dataset::load(Split split, const std::string& id) const {
    const auto dir = manifest_.sample_dir(split, id);
    try {
        const json meta = read_json(dir / "meta.json");
        PairedSample s;
        s.id = id;
        s.garment_id = meta.at("garment_id").get<std::string>();
        s.size_a = parse_size(meta.at("size_a").get<std::string>());
        s.size_b = parse_size(meta.at("size_b").get<std::string>());
        if (s.size_a == s.size_b) throw LoadError("pair sizes must differ");
        s.keypoints_a = meta.at("keypoints_a").get<Keypoints>();
        s.keypoints_b = meta.at("keypoints_b").get<Keypoints>();
        if (meta.contains("pattern")) s.garment = meta.at("pattern").get<GarmentSpec>();
        s.origin = meta.value("origin", "synthetic");
        s.image_a = io::load_image(dir / "A.png");
        s.image_b = io::load_image(dir / "B.png");
        s.seg_a = io::load_labels(dir / "A_seg.png");
        s.seg_b = io::load_labels(dir / "B_seg.png");
        const int r = manifest_.resolution;
        auto fit = [&](Image& img, SegmentationMap& seg, Keypoints& kp) {
            if (img.height() != seg.height() || img.width() != seg.width()) {
                throw LoadError("image and segmentation sizes differ");
            }
            if (img.height() != r || img.width() != r) {
                auto c = crop_and_resize(img, seg, kp, r);
                img = c.image;
                seg = c.seg;
                kp = c.keypoints;
            }
        };
        fit(s.image_a, s.seg_a, s.keypoints_a);
        fit(s.image_b, s.seg_b, s.keypoints_b);
        return s;
    } catch (const std::exception& e) {
        throw LoadError("sample '" + id + "' (" + std::string(to_string(split)) + "): " + e.what());
    }
}

std::vector<PairedSample> Dataset::load_all(Split split) const {
    std::vector<PairedSample> out;
    out.reserve(manifest_.ids(split).size());
    for (const auto& id : manifest_.ids(split)) out.push_back(load(split, id));
    return out;
}

Dataset load_dataset(const fs::path& root) {
    json j;
    try {
        j = read_json(root / "manifest.json");
    } catch (const std::exception& e) {
        throw LoadError("manifest: " + std::string(e.what()));
    }
    DatasetManifest m;
    m.root = root;
    try {
        if (j.at("version").get<int>() != kManifestVersion) throw LoadError("unsupported manifest version");
        m.resolution = j.at("resolution").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        for (auto s : kSplits) m.ids(s) = j.at("splits").at(std::string(to_string(s))).get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw LoadError("manifest: " + std::string(e.what()));
    }
    std::vector<std::string> all;
    for (auto s : kSplits) all.insert(all.end(), m.ids(s).begin(), m.ids(s).end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) throw LoadError("manifest splits overlap");
    for (auto s : kSplits) {
        for (const auto& id : m.ids(s)) {
            if (!fs::exists(m.sample_dir(s, id) / "meta.json")) {
                throw LoadError("sample '" + id + "' listed in manifest but missing on disk");
            }
        }
    }
    return Dataset(std::move(m));
}

void ingest_pair(DatasetManifest& manifest, Split split, const ExternalPair& pair) {
    for (auto s : kSplits) {
        const auto& ids = manifest.ids(s);
        if (std::find(ids.begin(), ids.end(), pair.id) != ids.end()) {
            throw ArgumentError("sample id '" + pair.id + "' already present");
        }
    }
    if (pair.size_a == pair.size_b) throw ArgumentError("pair sizes must differ");
    const auto dir = manifest.sample_dir(split, pair.id);
    fs::create_directories(dir);
    fs::copy_file(pair.image_a, dir / "A.png", fs::copy_options::overwrite_existing);
    fs::copy_file(pair.image_b, dir / "B.png", fs::copy_options::overwrite_existing);
    fs::copy_file(pair.seg_a, dir / "A_seg.png", fs::copy_options::overwrite_existing);
    fs::copy_file(pair.seg_b, dir / "B_seg.png", fs::copy_options::overwrite_existing);
    json meta = {{"id", pair.id},
                 {"garment_id", pair.garment_id},
                 {"size_a", to_string(pair.size_a)},
                 {"size_b", to_string(pair.size_b)},
                 {"keypoints_a", pair.keypoints_a},
                 {"keypoints_b", pair.keypoints_b},
                 {"origin", "real"}};
    write_json(dir / "meta.json", meta);
    manifest.ids(split).push_back(pair.id);
    manifest.save();
}

Cropped crop_and_resize(const Image& image, const SegmentationMap& seg, const Keypoints& keypoints,
                        int target_resolution) {
    const int w = image.width();
    const int h = image.height();
    if (seg.width() != w || seg.height() != h) throw ShapeError("crop_and_resize: image and segmentation differ");
    if (target_resolution < 1) throw DimensionError("target resolution must be positive");
    for (const auto* p : {&keypoints.chin, &keypoints.knee_line, &keypoints.left_hip, &keypoints.right_hip}) {
        if (!inside(*p, w, h)) throw ArgumentError("keypoint lies outside the image");
    }
    const int top = static_cast<int>(std::lround(keypoints.chin.y));
    const int bottom = static_cast<int>(std::lround(keypoints.knee_line.y));
    const int side = bottom - top;
    if (side < 2) throw ArgumentError("knee line must lie below the chin");

    const double cx = 0.5 * (keypoints.left_hip.x + keypoints.right_hip.x);
    int left = 0;
    int pad_left = 0;
    int pad_right = 0;
    if (side <= w) {
        left = std::clamp(static_cast<int>(std::lround(cx - side / 2.0)), 0, w - side);
    } else {
        pad_left = (side - w) / 2;
        pad_right = side - w - pad_left;
        left = -pad_left;
    }

    cv::Mat img = to_mat(image);
    auto labels = seg.labels().contiguous();
    cv::Mat lab(h, w, CV_8UC1, labels.data_ptr<std::uint8_t>());
    if (pad_left || pad_right) {
        cv::copyMakeBorder(img, img, 0, 0, pad_left, pad_right, cv::BORDER_REPLICATE);
        cv::copyMakeBorder(lab, lab, 0, 0, pad_left, pad_right, cv::BORDER_REPLICATE);
    }
    const cv::Rect roi(left + pad_left, top, side, side);
    cv::Mat img_crop = img(roi).clone();
    cv::Mat lab_crop = lab(roi).clone();
    if (side != target_resolution) {
        const cv::Size size(target_resolution, target_resolution);
        cv::resize(img_crop, img_crop, size, 0, 0, side > target_resolution ? cv::INTER_AREA : cv::INTER_LINEAR);
        cv::resize(lab_crop, lab_crop, size, 0, 0, cv::INTER_NEAREST);
    }

    const double scale = static_cast<double>(target_resolution) / side;
    auto move = [&](const Point& p) { return Point{(p.x - left) * scale, (p.y - top) * scale}; };
    Cropped out;
    out.image = from_mat(img_crop);
    out.seg = SegmentationMap::from_labels(
        torch::from_blob(lab_crop.data, {target_resolution, target_resolution}, torch::kUInt8).clone());
    out.keypoints = {move(keypoints.left_hip), move(keypoints.right_hip), move(keypoints.chin),
                     move(keypoints.knee_line)};
    return out;
}

}  // namespace sizemorph::data
