#include "sizemorph/deformation/field_io.hpp"

#include "sizemorph/errors.hpp"
#include "sizemorph/io/png.hpp"

#include <opencv2/imgproc.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sizemorph {

static_assert(std::endian::native == std::endian::little, "dfield I/O assumes a little-endian host");

void save_dfield(const std::filesystem::path& path, const DeformationField& field) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const std::int32_t dims[2] = {field.height(), field.width()};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    auto hwc = field.tensor().to(torch::kFloat).permute({1, 2, 0}).contiguous();
    out.write(reinterpret_cast<const char*>(hwc.data_ptr<float>()),
              static_cast<std::streamsize>(hwc.numel() * sizeof(float)));
    if (!out) throw IoError("short write to " + path.string());
}

DeformationField load_dfield(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::int32_t dims[2] = {0, 0};
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in || dims[0] < 1 || dims[1] < 1) throw IoError("bad dfield header in " + path.string());
    auto hwc = torch::empty({dims[0], dims[1], 2});
    const auto bytes = static_cast<std::streamsize>(hwc.numel() * sizeof(float));
    in.read(reinterpret_cast<char*>(hwc.data_ptr<float>()), bytes);
    if (in.gcount() != bytes) throw IoError("truncated dfield payload in " + path.string());
    return DeformationField(hwc.permute({2, 0, 1}).contiguous());
}

std::vector<QuiverArrow> quiver_arrows(const DeformationField& field, int stride) {
    if (stride < 1) throw ArgumentError("quiver stride must be >= 1");
    const int h = field.height();
    const int w = field.width();
    auto f = field.tensor().to(torch::kDouble).contiguous();
    const auto acc = f.accessor<double, 3>();
    std::vector<QuiverArrow> arrows;
    for (int y = 0; y < h; y += stride) {
        for (int x = 0; x < w; x += stride) {
            // Output pixel p reads from p + d, so content travels by -d.
            arrows.push_back({x + 0.5, y + 0.5, -acc[0][y][x] * w / 2.0, -acc[1][y][x] * h / 2.0});
        }
    }
    return arrows;
}

void visualize_field(const DeformationField& field, const std::filesystem::path& out_path, int stride,
                     const std::optional<Image>& background) {
    const int h = field.height();
    const int w = field.width();
    const int scale = std::max(1, static_cast<int>(std::ceil(512.0 / std::max(h, w))));
    cv::Mat canvas(h * scale, w * scale, CV_8UC3, cv::Scalar(255, 255, 255));
    if (background) {
        if (background->height() != h || background->width() != w) {
            throw ShapeError("visualize_field: background size differs from field");
        }
        const auto r = io::to_raster(*background);
        cv::Mat bg(h, w, CV_8UC3, const_cast<std::uint8_t*>(r.data.data()));
        cv::Mat up;
        cv::resize(bg, up, canvas.size(), 0, 0, cv::INTER_NEAREST);
        // Fade the image so arrows stay legible.
        cv::addWeighted(up, 0.5, canvas, 0.5, 0.0, canvas);
    }
    const cv::Scalar color(200, 30, 30);  // RGB order; the canvas is written as RGB
    for (const auto& a : quiver_arrows(field, stride)) {
        const cv::Point2d from(a.x * scale, a.y * scale);
        const cv::Point2d to((a.x + a.u) * scale, (a.y + a.v) * scale);
        const double len = std::hypot(to.x - from.x, to.y - from.y);
        if (len < 0.5) {
            cv::circle(canvas, from, 2, color, cv::FILLED, cv::LINE_AA);
        } else {
            cv::arrowedLine(canvas, from, to, color, 1, cv::LINE_AA, 0, std::min(0.3, 6.0 / len));
        }
    }
    io::Raster out;
    out.width = canvas.cols;
    out.height = canvas.rows;
    out.channels = 3;
    out.data.assign(canvas.data, canvas.data + canvas.total() * 3);
    io::write_png_rgb(out_path, out);
}

}  // namespace sizemorph
