#pragma once

#include "sizemorph/data/sample.hpp"
#include "sizemorph/data/synthetic.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sizemorph::data {

enum class Split { Train = 0, Val = 1, Test = 2 };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct SplitFractions {
    double train = 0.91;
    double val = 0.06;
    double test = 0.03;
};

/// Largest-remainder apportionment of `n` items; every split must get at
/// least one item, otherwise ArgumentError.
std::array<int, 3> split_counts(int n, const SplitFractions& fractions);

/// Root-level index of a dataset directory.
///
/// Layout: `root/{train,val,test}/<id>/{A.png, B.png, A_seg.png, B_seg.png,
/// meta.json}` plus `root/manifest.json`.
struct DatasetManifest {
    std::filesystem::path root;
    int resolution = 64;
    std::uint64_t seed = 0;
    std::array<std::vector<std::string>, 3> splits;

    const std::vector<std::string>& ids(Split s) const { return splits[static_cast<int>(s)]; }
    std::vector<std::string>& ids(Split s) { return splits[static_cast<int>(s)]; }
    std::size_t size() const { return splits[0].size() + splits[1].size() + splits[2].size(); }
    std::filesystem::path sample_dir(Split s, const std::string& id) const;

    void save() const;
};

/// Generate `n_pairs` synthetic pairs under `root` and write the manifest.
/// Output bytes depend only on (n_pairs, fractions, body, seed).
DatasetManifest generate_dataset(const std::filesystem::path& root, int n_pairs, const SplitFractions& fractions,
                                 const BodyParams& body, std::uint64_t seed);

/// Read-only view over a dataset directory; samples load on demand.
class Dataset {
public:
    explicit Dataset(DatasetManifest manifest) : manifest_(std::move(manifest)) {}

    const DatasetManifest& manifest() const { return manifest_; }

    /// Loads one sample; externally sourced pairs whose images are not at the
    /// manifest resolution are cropped chin-to-knee and resized. Throws
    /// LoadError naming the id on any missing or corrupt file.
    PairedSample load(Split split, const std::string& id) const;
    std::vector<PairedSample> load_all(Split split) const;

private:
    DatasetManifest manifest_;
};

Dataset load_dataset(const std::filesystem::path& root);

/// Write one sample in the dataset layout (no manifest update).
void write_sample(const std::filesystem::path& dir, const PairedSample& sample);

/// Externally annotated pair: images, paletted/gray label maps (values 0..8)
/// and keypoints in the images' own pixel coordinates.
struct ExternalPair {
    std::string id;
    std::filesystem::path image_a, image_b, seg_a, seg_b;
    Keypoints keypoints_a, keypoints_b;
    std::string garment_id;
    SizeLabel size_a = SizeLabel::Small;
    SizeLabel size_b = SizeLabel::Plus;
};

/// Copy an externally annotated pair into the dataset layout and list it in
/// the manifest. Files are copied verbatim; cropping happens at load time.
void ingest_pair(DatasetManifest& manifest, Split split, const ExternalPair& pair);

struct Cropped {
    Image image;
    SegmentationMap seg;
    Keypoints keypoints;
};

/// Crop rows [chin, knee_line) to a square centered on the hips (clamped to
/// the image, edge-replicated when the image is too narrow), then resize to
/// `target_resolution`. Labels use nearest-neighbour resampling.
Cropped crop_and_resize(const Image& image, const SegmentationMap& seg, const Keypoints& keypoints,
                        int target_resolution);

}  // namespace sizemorph::data
