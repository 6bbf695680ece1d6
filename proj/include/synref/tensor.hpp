#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "synref/errors.hpp"

namespace synref {

/// Dense rank-4 array in NHWC layout, double precision. Image batches,
/// feature maps, gradients and conv weights (as [kh, kw, in_ch, out_ch])
/// all live in this one container.
struct Tensor {
    int n = 0, h = 0, w = 0, c = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int h_, int w_, int c_, double fill = 0.0)
        : n(n_), h(h_), w(w_), c(c_),
          v(static_cast<std::size_t>(n_) * h_ * w_ * c_, fill) {}

    std::size_t size() const { return v.size(); }

    double* row(int i, int y, int x) {
        return v.data() + ((static_cast<std::size_t>(i) * h + y) * w + x) * c;
    }
    const double* row(int i, int y, int x) const {
        return v.data() + ((static_cast<std::size_t>(i) * h + y) * w + x) * c;
    }

    double& at(int i, int y, int x, int k) { return row(i, y, x)[k]; }
    double at(int i, int y, int x, int k) const { return row(i, y, x)[k]; }

    bool same_shape(const Tensor& o) const {
        return n == o.n && h == o.h && w == o.w && c == o.c;
    }

    /// Single-image view copied out of the batch.
    Tensor slice(int i) const {
        Tensor out(1, h, w, c);
        const std::size_t per = static_cast<std::size_t>(h) * w * c;
        std::copy(v.begin() + i * per, v.begin() + (i + 1) * per, out.v.begin());
        return out;
    }

    void set_slice(int i, const Tensor& img) {
        const std::size_t per = static_cast<std::size_t>(h) * w * c;
        std::copy(img.v.begin(), img.v.begin() + per, v.begin() + i * per);
    }
};

/// Images are Tensors constrained to [0,1]; see validate_image_batch.
using ImageBatch = Tensor;

/// Rank-3 integer class-index map [batch, height, width].
struct LabelMap {
    int n = 0, h = 0, w = 0;
    int num_classes = 0;
    std::vector<std::int32_t> v;

    LabelMap() = default;
    LabelMap(int n_, int h_, int w_, int num_classes_)
        : n(n_), h(h_), w(w_), num_classes(num_classes_),
          v(static_cast<std::size_t>(n_) * h_ * w_, 0) {}

    std::int32_t& at(int i, int y, int x) {
        return v[(static_cast<std::size_t>(i) * h + y) * w + x];
    }
    std::int32_t at(int i, int y, int x) const {
        return v[(static_cast<std::size_t>(i) * h + y) * w + x];
    }

    LabelMap slice(int i) const {
        LabelMap out(1, h, w, num_classes);
        const std::size_t per = static_cast<std::size_t>(h) * w;
        std::copy(v.begin() + i * per, v.begin() + (i + 1) * per, out.v.begin());
        return out;
    }

    void set_slice(int i, const LabelMap& m) {
        const std::size_t per = static_cast<std::size_t>(h) * w;
        std::copy(m.v.begin(), m.v.begin() + per, v.begin() + i * per);
    }
};

/// Enforces the image-batch contract: finite values in [0,1], batch >= 1,
/// spatial dims >= 8. Throws DataError naming the first violation.
void validate_image_batch(const Tensor& t, const char* what = "image batch");

/// Enforces the label-map contract: every element in [0, num_classes),
/// num_classes >= 2.
void validate_label_map(const LabelMap& m, const char* what = "label map");

}  // namespace synref
