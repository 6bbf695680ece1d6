#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synref/feature_extractor.hpp"
#include "synref/tensor.hpp"

namespace synref {

/// Gaussian fit of a feature cloud: mean [dim], covariance [dim, dim]
/// row-major. Covariance must be symmetric to 1e-8.
struct GaussianMoments {
    int dim = 0;
    std::vector<double> mean;
    std::vector<double> cov;
};

/// Sample mean and unbiased (N-1) covariance of per-image feature vectors.
/// feats is [N, h, w, c]; each image's h*w*c elements form one row. N >= 2.
GaussianMoments fit_moments(const Tensor& feats);

/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), the matrix square root
/// taken by eigendecomposition of sqrt(Sa) Sb sqrt(Sa). Eigenvalues in
/// (-1e-6, 0) are clamped to zero; anything more negative is an error.
double frechet_distance(const GaussianMoments& a, const GaussianMoments& b);

/// Frechet distance between Gaussian fits of pooled extractor features.
/// Both sets need at least 2 images.
double fid(const Tensor& set_a, const Tensor& set_b, const FeatureExtractor& ex);

/// Mean SSIM over the batch, pairing image i of a with image i of b.
/// 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2 for unit dynamic
/// range; valid windows only, averaged over channels and positions.
double ssim(const Tensor& a, const Tensor& b);

/// Dataset-level SSIM between sets of different sizes: a seeded random
/// pairing of equal-size samples from each set, then mean pairwise SSIM.
double dataset_ssim(const Tensor& a, const Tensor& b, std::uint64_t seed);

/// Fraction of pixels with pred == gt.
double pixel_accuracy(const LabelMap& pred, const LabelMap& gt);

/// Mean IoU over the classes present in gt or pred; absent classes are
/// excluded from the mean.
double miou(const LabelMap& pred, const LabelMap& gt, int num_classes);

/// One metric value keyed by the train/test corpus pair it was measured on.
struct MetricRow {
    std::string train_type;
    std::string test_type;
    std::string metric;
    double value = 0.0;
};

struct MetricReport {
    std::vector<MetricRow> rows;
};

void save_metric_report(const std::string& path, const MetricReport& report);
MetricReport load_metric_report(const std::string& path);
/// Fixed-width table, one block per metric, rows = train_type, cols = test_type.
std::string format_metric_table(const MetricReport& report);

}  // namespace synref
