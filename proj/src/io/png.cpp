#include "sizemorph/io/png.hpp"

#include "sizemorph/errors.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace sizemorph::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

class PngWriter {
public:
    explicit PngWriter(const std::filesystem::path& path) : file_(open_file(path, "wb")), path_(path) {
        png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
        info_ = png_create_info_struct(png_);
        if (!png_ || !info_) throw IoError("png: allocation failed for " + path.string());
        png_init_io(png_, file_.get());
        // Fixed compression settings keep output bytes reproducible.
        png_set_compression_level(png_, 6);
    }
    ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;

    png_structp png() { return png_; }
    png_infop info() { return info_; }

    void write_rows(const Raster& r) {
        png_write_info(png_, info_);
        const size_t stride = static_cast<size_t>(r.width) * r.channels;
        for (int y = 0; y < r.height; ++y) {
            png_write_row(png_, const_cast<png_bytep>(r.data.data() + y * stride));
        }
        png_write_end(png_, nullptr);
    }

private:
    FilePtr file_;
    std::filesystem::path path_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
};

class PngReader {
public:
    explicit PngReader(const std::filesystem::path& path) : file_(open_file(path, "rb")) {
        png_byte sig[8];
        if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
            throw IoError("not a PNG file: " + path.string());
        }
        png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
        info_ = png_create_info_struct(png_);
        if (!png_ || !info_) throw IoError("png: allocation failed for " + path.string());
        png_init_io(png_, file_.get());
        png_set_sig_bytes(png_, 8);
        png_read_info(png_, info_);
    }
    ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;

    png_structp png() { return png_; }
    png_infop info() { return info_; }

    Raster read_rows() {
        png_read_update_info(png_, info_);
        Raster r;
        r.width = static_cast<int>(png_get_image_width(png_, info_));
        r.height = static_cast<int>(png_get_image_height(png_, info_));
        r.channels = png_get_channels(png_, info_);
        const size_t stride = png_get_rowbytes(png_, info_);
        r.data.resize(stride * r.height);
        for (int y = 0; y < r.height; ++y) png_read_row(png_, r.data.data() + y * stride, nullptr);
        png_read_end(png_, nullptr);
        return r;
    }

private:
    FilePtr file_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
};

}  // namespace

void write_png_rgb(const std::filesystem::path& path, const Raster& rgb) {
    if (rgb.channels != 3) throw ArgumentError("write_png_rgb needs a 3-channel raster");
    PngWriter w(path);
    png_set_IHDR(w.png(), w.info(), rgb.width, rgb.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    w.write_rows(rgb);
}

void write_png_indexed(const std::filesystem::path& path, const Raster& indices, const Palette& palette) {
    if (indices.channels != 1) throw ArgumentError("write_png_indexed needs a 1-channel raster");
    PngWriter w(path);
    png_set_IHDR(w.png(), w.info(), indices.width, indices.height, 8, PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> colors;
    for (const auto& c : palette) colors.push_back(png_color{c[0], c[1], c[2]});
    png_set_PLTE(w.png(), w.info(), colors.data(), static_cast<int>(colors.size()));
    w.write_rows(indices);
}

Raster read_png_rgb(const std::filesystem::path& path) {
    PngReader r(path);
    auto* png = r.png();
    auto* info = r.info();
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
    }
    if (depth == 16) png_set_strip_16(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    return r.read_rows();
}

Raster read_png_indices(const std::filesystem::path& path) {
    PngReader r(path);
    auto* png = r.png();
    auto* info = r.info();
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
        throw IoError("label map must be a paletted or 8-bit grayscale PNG: " + path.string());
    }
    if (depth < 8) png_set_packing(png);
    if (depth == 16) throw IoError("16-bit label maps are not supported: " + path.string());
    return r.read_rows();
}

const Palette& segment_palette() {
    static const Palette palette = {
        {{0, 0, 0}},        // background
        {{255, 85, 0}},     // upper garment
        {{0, 85, 255}},     // lower garment
        {{255, 255, 0}},    // accessories
        {{255, 170, 170}},  // face
        {{85, 51, 0}},      // hair
        {{0, 255, 170}},    // arms
        {{170, 0, 255}},    // legs
        {{255, 0, 85}},     // torso skin
    };
    return palette;
}

torch::Tensor quantize_unit(const torch::Tensor& values) {
    return values.clamp(0.0, 1.0).mul(255.0).round().div(255.0);
}

Raster to_raster(const Image& image) {
    Raster r;
    r.width = image.width();
    r.height = image.height();
    r.channels = 3;
    auto bytes = image.tensor().to(torch::kFloat).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
    bytes = bytes.permute({1, 2, 0}).contiguous();
    r.data.assign(bytes.data_ptr<std::uint8_t>(), bytes.data_ptr<std::uint8_t>() + bytes.numel());
    return r;
}

Image to_image(const Raster& rgb) {
    if (rgb.channels != 3) throw ArgumentError("to_image needs an RGB raster");
    auto bytes = torch::from_blob(const_cast<std::uint8_t*>(rgb.data.data()), {rgb.height, rgb.width, 3},
                                  torch::kUInt8);
    return Image(bytes.permute({2, 0, 1}).to(torch::kFloat).div(255.0).contiguous());
}

void save_image(const std::filesystem::path& path, const Image& image) { write_png_rgb(path, to_raster(image)); }

Image load_image(const std::filesystem::path& path) { return to_image(read_png_rgb(path)); }

void save_labels(const std::filesystem::path& path, const SegmentationMap& seg) {
    Raster r;
    r.width = seg.width();
    r.height = seg.height();
    r.channels = 1;
    auto labels = seg.labels().contiguous();
    r.data.assign(labels.data_ptr<std::uint8_t>(), labels.data_ptr<std::uint8_t>() + labels.numel());
    write_png_indexed(path, r, segment_palette());
}

SegmentationMap load_labels(const std::filesystem::path& path) {
    const auto r = read_png_indices(path);
    for (auto v : r.data) {
        if (v >= kNumClasses) throw IoError("label value out of range in " + path.string());
    }
    auto labels = torch::from_blob(const_cast<std::uint8_t*>(r.data.data()), {r.height, r.width}, torch::kUInt8);
    return SegmentationMap::from_labels(labels.clone());
}

}  // namespace sizemorph::io
