#pragma once

#include <string>
#include <vector>

#include "synref/core_types.hpp"
#include "synref/data_pipeline.hpp"
#include "synref/networks.hpp"

namespace synref {

enum class ImageType { synthetic = 0, refined = 1, real = 2 };
inline constexpr ImageType kImageTypes[3] = {ImageType::synthetic, ImageType::refined,
                                             ImageType::real};
const char* image_type_name(ImageType t);

/// Images with parallel per-image label maps, all one shape.
struct SegDataset {
    std::vector<Tensor> images;
    std::vector<LabelMap> labels;
};

/// Per-pixel softmax cross-entropy over raw class scores, mean over every
/// pixel of the batch. Computed via log-sum-exp, so extreme scores stay
/// finite.
double seg_ce_loss(const Tensor& scores, const LabelMap& gt);
Tensor seg_ce_loss_grad(const Tensor& scores, const LabelMap& gt);

/// SGD on per-pixel cross-entropy for cfg.steps; deterministic given seed.
/// Throws RuntimeFault when the loss leaves the finite range.
SegNet train_seg(const SegDataset& data, const SegConfig& cfg, std::uint64_t seed);

/// Argmax class map over the whole set (ties toward the lower class index).
LabelMap seg_predict(const SegNet& net, const std::vector<Tensor>& images);

struct SegScores {
    double miou = 0.0;
    double pixel_acc = 0.0;
};

/// Whole-set scores: one confusion accumulation across every pixel, so the
/// result is invariant to image order.
SegScores score_predictions(const LabelMap& pred, const LabelMap& gt);
SegScores eval_seg(const SegNet& net, const SegDataset& data);

/// Cross-type generalization matrix: rows = training type, cols = test
/// type, in kImageTypes order. Accuracies are fractions in memory and
/// percent in the CSV.
struct MatrixReport {
    double miou[3][3] = {};
    double pixel_acc[3][3] = {};
    int n_test = 0;
    SegConfig seg_config;
};

/// The trained row nets and test splits behind a matrix run, for callers
/// that want predictions beyond the scores (mask dumps, inspection).
struct MatrixArtifacts {
    std::vector<SegNet> row_nets;             // kImageTypes order
    std::vector<std::size_t> test_synthetic;  // also the refined test split
    std::vector<std::size_t> test_real;
};

/// Trains one net per row type on its train split and scores it on every
/// column type's test split. Synthetic and refined share one split (their
/// labels must be identical arrays); real gets its own. Splits are
/// disjoint, seeded, and written to manifest_path when given.
MatrixReport run_matrix(const SegDataset& synthetic, const SegDataset& refined,
                        const SegDataset& real, const SegConfig& cfg, std::uint64_t seed,
                        const std::string& manifest_path = "",
                        MatrixArtifacts* artifacts = nullptr);

/// Two-block CSV (miou, pixel_acc_percent) plus header comments carrying
/// n_test and the seg config. Percent cells are written by shifting the
/// fraction's decimal form, so the report round-trips bit-exactly.
void save_matrix_report(const MatrixReport& report, const std::string& path);
MatrixReport load_matrix_report(const std::string& path);

}  // namespace synref
