#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "synref/core_types.hpp"
#include "synref/tensor.hpp"

namespace synref {

/// The feature maps Ψ/ψ of the self-regularization and perceptual losses,
/// and the FID feature stage. Three backends:
///  - identity: Ψ(x) = x (the default self-regularization map)
///  - toy: adaptive 8x8 average pool, then a fixed seeded Gaussian linear
///    projection to 64 dims; weight-file-free and fully deterministic
///  - pretrained_inception: an exported backbone loaded from disk
class FeatureExtractor {
  public:
    enum class Backend { identity, toy, pretrained_inception };

    static FeatureExtractor identity();
    static FeatureExtractor toy(std::uint64_t seed = 0);
    static FeatureExtractor pretrained(const std::string& weights_path,
                                       const std::string& layer = "default");
    /// Resolves the configured backend; a missing weights file falls back to
    /// the toy backend with a warning when cfg.allow_toy_fallback, and is an
    /// error otherwise.
    static FeatureExtractor from_config(const RunConfig& cfg);

    Backend backend() const { return backend_; }

    /// Layer activation map [n, H_j, W_j, C_j]; pure and deterministic.
    Tensor features(const Tensor& x) const;
    /// d(sum(features(x) ⊙ gfeat))/dx.
    Tensor features_vjp(const Tensor& x, const Tensor& gfeat) const;
    /// Per-image feature vectors for FID, shape [n, 1, 1, D].
    Tensor pooled_features(const Tensor& x) const;

  private:
    FeatureExtractor() = default;

    Backend backend_ = Backend::identity;
    int grid_h_ = 8, grid_w_ = 8;
    int proj_dim_ = 64;
    std::vector<double> proj_;  // [proj_dim][grid_h*grid_w*3]
    std::string layer_;
    std::shared_ptr<const class FeatureNet> net_;
};

}  // namespace synref
