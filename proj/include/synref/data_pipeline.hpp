#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synref/core_types.hpp"
#include "synref/tensor.hpp"

namespace synref {

enum class DatasetKind { synthetic, real, refined };

/// Where a dataset lives on disk and how to preprocess it. A crop window of
/// height 0 means "no crop"; out dims of 0 mean "no resize".
struct DatasetSpec {
    std::string root_path;
    DatasetKind kind = DatasetKind::synthetic;
    bool has_labels = false;
    int crop_row = 0;
    int crop_col = 0;
    int crop_height = 0;
    int crop_width = 0;
    int out_height = 0;
    int out_width = 0;
    int num_classes = 0;  // 0: infer from label data (max index + 1)
};

/// Crop (first) then resize, bilinear for images. Throws on a crop window
/// that leaves the source bounds.
Tensor crop_resize(const Tensor& batch, const DatasetSpec& spec);

/// Same geometry for label maps, nearest-neighbor so no class is invented.
LabelMap crop_resize_labels(const LabelMap& m, const DatasetSpec& spec);

struct LoadedDataset {
    std::vector<Tensor> images;      // one [1, h, w, 3] tensor per file
    std::vector<LabelMap> labels;    // parallel to images when has_labels
    std::vector<std::string> stems;  // filename stems, lexicographic order
    int skipped = 0;                 // undecodable files skipped (non-strict)
};

/// Reads <root>/images/*.png (plus <root>/labels/*.png when has_labels) in
/// lexicographic filename order, applying the spec's crop/resize to every
/// image and label. Undecodable files are skipped with a counted stderr
/// warning unless strict, which turns them into errors. A label missing for
/// an image is always an error naming the file.
LoadedDataset load_image_dir(const DatasetSpec& spec, bool strict = false);

struct ToyDomain {
    std::vector<Tensor> images;
    std::vector<LabelMap> labels;
};

struct ToyDataset {
    ToyDomain synthetic;
    ToyDomain real;
};

/// Procedural two-domain dataset with a controlled gap. Each index renders
/// one Voronoi scene twice from the same geometry: "synthetic" as flat
/// per-class colors, "real" with per-pixel texture noise, a 3x3 box blur,
/// and a global color-tone shift. Fully deterministic given spec.seed.
ToyDataset make_toy_dataset(const ToySceneSpec& spec);

/// Infinite stream of shuffled batches. Every epoch draws a fresh seeded
/// permutation; the tail that does not fill a whole batch is dropped and the
/// next epoch reshuffles all items.
class BatchIter {
  public:
    BatchIter(std::vector<Tensor> images, int batch_size, std::uint64_t seed);

    /// Indices into the image list for the next batch.
    std::vector<std::size_t> next_indices();

    /// The next batch stacked into one [batch_size, h, w, c] tensor.
    Tensor next();

    int epoch() const { return epoch_; }
    int size() const { return static_cast<int>(images_.size()); }

  private:
    void reshuffle();

    std::vector<Tensor> images_;
    int batch_size_;
    std::uint64_t seed_;
    int epoch_ = -1;  // first reshuffle brings it to 0
    std::size_t cursor_ = 0;
    std::vector<std::size_t> perm_;
};

}  // namespace synref
