#pragma once

// 8-bit sRGB PNG <-> linear ImageBuffer.

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gaussmap/core.hpp"

namespace gaussmap {

inline double srgb_to_linear(double s) {
    return s <= 0.04045 ? s / 12.92 : std::pow((s + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double l) {
    return l <= 0.0031308 ? 12.92 * l : 1.055 * std::pow(l, 1.0 / 2.4) - 0.055;
}

inline std::uint8_t encode_srgb8(double linear) {
    const double s = linear_to_srgb(std::clamp(linear, 0.0, 1.0));
    return static_cast<std::uint8_t>(std::lround(s * 255.0));
}

inline double decode_srgb8(std::uint8_t v) {
    static const auto table = [] {
        std::array<double, 256> t{};
        for (int i = 0; i < 256; ++i) t[i] = srgb_to_linear(i / 255.0);
        return t;
    }();
    return table[v];
}

inline ImageBuffer image_from_srgb8(const std::vector<std::uint8_t> &rgb, int width, int height) {
    ImageBuffer img(width, height);
    for (std::size_t i = 0; i < img.data().size(); ++i) img.data()[i] = decode_srgb8(rgb[i]);
    return img;
}

inline std::vector<std::uint8_t> image_to_srgb8(const ImageBuffer &img) {
    std::vector<std::uint8_t> out(img.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = encode_srgb8(img.data()[i]);
    return out;
}

inline ImageBuffer load_image(const std::string &path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw Error("cannot read PNG '" + path + "': " + png.message);
    if (png.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&png);
        throw Error("'" + path + "': only 8-bit PNG is supported");
    }
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr))
        throw Error("cannot decode PNG '" + path + "': " + png.message);
    return image_from_srgb8(buf, static_cast<int>(png.width), static_cast<int>(png.height));
}

inline void save_image(const ImageBuffer &img, const std::string &path) {
    if (img.width() == 0 || img.height() == 0) throw Error("save_image: empty image");
    const std::vector<std::uint8_t> buf = image_to_srgb8(img);
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width());
    png.height = static_cast<png_uint_32>(img.height());
    png.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr))
        throw Error("cannot write PNG '" + path + "': " + png.message);
}

} // namespace gaussmap
