#include "synref/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <png.h>
#include <vector>

#include "synref/errors.hpp"

namespace synref {

Tensor read_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw DataError("cannot decode PNG " + path + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw DataError("cannot decode PNG " + path + ": " + image.message);
    }
    Tensor t(1, static_cast<int>(image.height), static_cast<int>(image.width), 3);
    for (std::size_t e = 0; e < t.v.size(); ++e) t.v[e] = buf[e] / 255.0;
    return t;
}

void write_png(const Tensor& img, const std::string& path) {
    if (img.n != 1 || img.c != 3)
        throw DataError("write_png expects a single RGB image");
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.format = PNG_FORMAT_RGB;
    image.width = static_cast<png_uint_32>(img.w);
    image.height = static_cast<png_uint_32>(img.h);
    std::vector<unsigned char> buf(img.v.size());
    for (std::size_t e = 0; e < buf.size(); ++e) {
        const double v = std::clamp(img.v[e], 0.0, 1.0);
        buf[e] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        throw DataError("cannot write PNG " + path + ": " + image.message);
}

LabelMap read_label_png(const std::string& path, int num_classes) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw DataError("cannot decode label PNG " + path + ": " + image.message);
    image.format = PNG_FORMAT_GRAY;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw DataError("cannot decode label PNG " + path + ": " + image.message);
    }
    LabelMap m(1, static_cast<int>(image.height), static_cast<int>(image.width),
               num_classes);
    for (std::size_t e = 0; e < m.v.size(); ++e) m.v[e] = buf[e];
    validate_label_map(m, path.c_str());
    return m;
}

void write_label_png(const LabelMap& m, const std::string& path) {
    if (m.n != 1) throw DataError("write_label_png expects a single map");
    if (m.num_classes > 256) throw DataError("write_label_png: more than 256 classes");
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.format = PNG_FORMAT_GRAY;
    image.width = static_cast<png_uint_32>(m.w);
    image.height = static_cast<png_uint_32>(m.h);
    std::vector<unsigned char> buf(m.v.size());
    for (std::size_t e = 0; e < buf.size(); ++e)
        buf[e] = static_cast<unsigned char>(m.v[e]);
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        throw DataError("cannot write label PNG " + path + ": " + image.message);
}

}  // namespace synref
