#include "sizemorph/data/sample.hpp"

#include "sizemorph/errors.hpp"

#include <cmath>
#include <string>

namespace sizemorph::data {

std::string_view to_string(SizeLabel size) { return size == SizeLabel::Small ? "small" : "plus"; }

SizeLabel parse_size(std::string_view text) {
    if (text == "small") return SizeLabel::Small;
    if (text == "plus") return SizeLabel::Plus;
    throw ArgumentError("unknown size label '" + std::string(text) + "' (expected small or plus)");
}

double Keypoints::hip_distance() const { return std::hypot(right_hip.x - left_hip.x, right_hip.y - left_hip.y); }

void to_json(nlohmann::json& j, const Point& p) { j = nlohmann::json::array({p.x, p.y}); }

void from_json(const nlohmann::json& j, Point& p) {
    p.x = j.at(0).get<double>();
    p.y = j.at(1).get<double>();
}

void to_json(nlohmann::json& j, const Keypoints& k) {
    j = {{"left_hip", k.left_hip}, {"right_hip", k.right_hip}, {"chin", k.chin}, {"knee_line", k.knee_line}};
}

void from_json(const nlohmann::json& j, Keypoints& k) {
    k.left_hip = j.at("left_hip").get<Point>();
    k.right_hip = j.at("right_hip").get<Point>();
    k.chin = j.at("chin").get<Point>();
    k.knee_line = j.at("knee_line").get<Point>();
}

void to_json(nlohmann::json& j, const GarmentSpec& g) {
    j = {{"stripe_count", g.stripe_count},
         {"base_color", g.base_color},
         {"stripe_color", g.stripe_color},
         {"top_length", g.top_length}};
}

void from_json(const nlohmann::json& j, GarmentSpec& g) {
    g.stripe_count = j.at("stripe_count").get<int>();
    g.base_color = j.at("base_color").get<Color>();
    g.stripe_color = j.at("stripe_color").get<Color>();
    g.top_length = j.at("top_length").get<double>();
}

}  // namespace sizemorph::data
