#include "sizemorph/deformation/field_ops.hpp"
#include "sizemorph/errors.hpp"
#include "sizemorph/training/training.hpp"

namespace sizemorph::training {

void LossWeights::validate() const {
    if (smooth < 0 || bce < 0 || adv_img < 0 || adv_seg < 0) throw ConfigError("loss weights must be >= 0");
}

nlohmann::json LossWeights::to_json() const {
    return {{"smooth", smooth}, {"bce", bce}, {"adv_img", adv_img}, {"adv_seg", adv_seg}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
    LossWeights w;
    w.smooth = j.value("smooth", w.smooth);
    w.bce = j.value("bce", w.bce);
    w.adv_img = j.value("adv_img", w.adv_img);
    w.adv_seg = j.value("adv_seg", w.adv_seg);
    w.validate();
    return w;
}

std::string to_string(Direction d) { return d == Direction::SmallToPlus ? "small2plus" : "plus2small"; }

Direction parse_direction(const std::string& s) {
    if (s == "small2plus") return Direction::SmallToPlus;
    if (s == "plus2small") return Direction::PlusToSmall;
    throw ConfigError("unknown direction '" + s + "' (expected small2plus or plus2small)");
}

data::SizeLabel source_size(Direction d) {
    return d == Direction::SmallToPlus ? data::SizeLabel::Small : data::SizeLabel::Plus;
}

data::SizeLabel target_size(Direction d) { return data::opposite(source_size(d)); }

PairTensors load_pairs(const data::Dataset& dataset, data::Split split, Direction direction) {
    PairTensors out;
    out.src_size = source_size(direction);
    out.tgt_size = target_size(direction);
    std::vector<torch::Tensor> is, ss, it, st;
    for (const auto& s : dataset.load_all(split)) {
        const bool forward = s.size_a == out.src_size && s.size_b == out.tgt_size;
        const bool reverse = s.size_b == out.src_size && s.size_a == out.tgt_size;
        if (!forward && !reverse) continue;
        const auto& img_src = forward ? s.image_a : s.image_b;
        const auto& img_tgt = forward ? s.image_b : s.image_a;
        const auto& seg_src = forward ? s.seg_a : s.seg_b;
        const auto& seg_tgt = forward ? s.seg_b : s.seg_a;
        out.ids.push_back(s.id);
        is.push_back(img_src.tensor());
        ss.push_back(seg_src.soft());
        it.push_back(img_tgt.tensor());
        st.push_back(seg_tgt.soft());
    }
    if (out.ids.empty()) {
        throw ConfigError("split '" + std::string(data::to_string(split)) + "' has no " +
                          std::string(data::to_string(out.src_size)) + " -> " +
                          std::string(data::to_string(out.tgt_size)) + " pairs");
    }
    out.image_src = torch::stack(is);
    out.seg_src = torch::stack(ss);
    out.image_tgt = torch::stack(it);
    out.seg_tgt = torch::stack(st);
    return out;
}

FieldStats field_stats(const torch::Tensor& field) {
    auto f = field.dim() == 3 ? field.unsqueeze(0) : field;
    if (f.dim() != 4 || f.size(1) != 2) throw ShapeError("field_stats: expected [N, 2, H, W]");
    torch::NoGradGuard no_grad;
    auto d = f.to(torch::kDouble);
    auto mag = (d.select(1, 0).pow(2) + d.select(1, 1).pow(2)).sqrt();
    FieldStats s;
    s.mean_abs = mag.mean().item<double>();
    s.max_abs = mag.max().item<double>();
    s.smoothness = smoothness_loss(d).item<double>();
    return s;
}

}  // namespace sizemorph::training
