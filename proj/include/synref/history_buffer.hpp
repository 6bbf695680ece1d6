#pragma once

#include <cstdint>
#include <vector>

#include "synref/rng.hpp"
#include "synref/tensor.hpp"

namespace synref {

/// Bounded reservoir of previously refined images. Discriminator updates
/// train against a mix of fresh refinements and stale ones drawn from here,
/// which keeps it from reacting only to the refiner's latest artifacts.
class HistoryBuffer {
  public:
    explicit HistoryBuffer(int capacity = 512, std::uint64_t seed = 0);

    /// Appends every image of the batch; once full, each newcomer evicts a
    /// uniformly random resident.
    void push(const Tensor& batch);

    /// Batch of current.n images: round(fraction * current.n) drawn without
    /// replacement from the buffer (capped at whatever is stored), the rest
    /// copied from the front of `current`. Buffer contents are not mutated.
    Tensor sample_mixed(const Tensor& current, double fraction);

    int size() const { return static_cast<int>(storage_.size()); }
    int capacity() const { return capacity_; }
    const Tensor& image(int i) const { return storage_[static_cast<std::size_t>(i)]; }

  private:
    int capacity_;
    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<Tensor> storage_;
    Rng rng_;
};

}  // namespace synref
