#include "synref/history_buffer.hpp"

#include <algorithm>
#include <cmath>

#include "synref/errors.hpp"

namespace synref {

HistoryBuffer::HistoryBuffer(int capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(seed) {
    if (capacity < 1) throw ConfigError("history capacity must be >= 1");
}

void HistoryBuffer::push(const Tensor& batch) {
    validate_image_batch(batch, "history push");
    if (h_ == 0) {
        h_ = batch.h;
        w_ = batch.w;
        c_ = batch.c;
    } else if (batch.h != h_ || batch.w != w_ || batch.c != c_) {
        throw DataError("history push: image dims differ from stored images");
    }
    for (int i = 0; i < batch.n; ++i) {
        if (size() < capacity_)
            storage_.push_back(batch.slice(i));
        else
            storage_[rng_.uniform_index(storage_.size())] = batch.slice(i);
    }
}

Tensor HistoryBuffer::sample_mixed(const Tensor& current, double fraction) {
    validate_image_batch(current, "history sample");
    if (fraction < 0.0 || fraction > 1.0)
        throw ConfigError("history fraction must be in [0, 1]");
    if (!storage_.empty() && (current.h != h_ || current.w != w_ || current.c != c_))
        throw DataError("history sample: image dims differ from stored images");

    const int want = static_cast<int>(std::lround(fraction * current.n));
    const int from_buf = std::min(want, size());

    Tensor out(current.n, current.h, current.w, current.c);
    if (from_buf > 0) {
        const auto perm = rng_.permutation(storage_.size());
        for (int i = 0; i < from_buf; ++i)
            out.set_slice(i, storage_[perm[static_cast<std::size_t>(i)]]);
    }
    for (int i = from_buf; i < current.n; ++i)
        out.set_slice(i, current.slice(i - from_buf));
    return out;
}

}  // namespace synref
