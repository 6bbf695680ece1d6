#include "synref/tensor.hpp"

#include <cmath>
#include <string>

namespace synref {

void validate_image_batch(const Tensor& t, const char* what) {
    if (t.n < 1) throw DataError(std::string(what) + ": empty batch");
    if (t.h < 8 || t.w < 8)
        throw DataError(std::string(what) + ": spatial dims must be >= 8");
    for (double v : t.v) {
        if (!std::isfinite(v))
            throw DataError(std::string(what) + ": non-finite pixel value");
        if (v < 0.0 || v > 1.0)
            throw DataError(std::string(what) + ": pixel value outside [0,1]");
    }
}

void validate_label_map(const LabelMap& m, const char* what) {
    if (m.num_classes < 2)
        throw DataError(std::string(what) + ": need at least 2 classes");
    for (auto v : m.v)
        if (v < 0 || v >= m.num_classes)
            throw DataError(std::string(what) + ": class index out of range");
}

}  // namespace synref
