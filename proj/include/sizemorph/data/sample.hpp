#pragma once

#include "sizemorph/deformation/types.hpp"

#include "json.hpp"

#include <array>
#include <string>
#include <string_view>

namespace sizemorph::data {

enum class SizeLabel { Small, Plus };

std::string_view to_string(SizeLabel size);
SizeLabel parse_size(std::string_view text);
inline SizeLabel opposite(SizeLabel s) { return s == SizeLabel::Small ? SizeLabel::Plus : SizeLabel::Small; }

struct Point {
    double x = 0;
    double y = 0;
};

/// Named body keypoints in pixel units.
struct Keypoints {
    Point left_hip;
    Point right_hip;
    Point chin;
    Point knee_line;

    double hip_distance() const;
};

using Color = std::array<float, 3>;

/// Pattern parameters shared by both images of a pair.
struct GarmentSpec {
    int stripe_count = 0;
    Color base_color{0.8f, 0.2f, 0.2f};
    Color stripe_color{0.95f, 0.95f, 0.95f};
    double top_length = 0.6;  // hem position as a fraction of the chin-to-knee height
};

struct PairedSample {
    std::string id;
    Image image_a;
    Image image_b;
    SegmentationMap seg_a;
    SegmentationMap seg_b;
    Keypoints keypoints_a;
    Keypoints keypoints_b;
    std::string garment_id;
    SizeLabel size_a = SizeLabel::Small;
    SizeLabel size_b = SizeLabel::Plus;
    GarmentSpec garment;
    std::string origin = "synthetic";
};

void to_json(nlohmann::json& j, const Point& p);
void from_json(const nlohmann::json& j, Point& p);
void to_json(nlohmann::json& j, const Keypoints& k);
void from_json(const nlohmann::json& j, Keypoints& k);
void to_json(nlohmann::json& j, const GarmentSpec& g);
void from_json(const nlohmann::json& j, GarmentSpec& g);

}  // namespace sizemorph::data
