#include "synref/feature_extractor.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "synref/errors.hpp"
#include "synref/feature_net.hpp"
#include "synref/kernels.hpp"
#include "synref/rng.hpp"

namespace synref {

namespace K = kernels;

FeatureExtractor FeatureExtractor::identity() {
    FeatureExtractor ex;
    ex.backend_ = Backend::identity;
    return ex;
}

FeatureExtractor FeatureExtractor::toy(std::uint64_t seed) {
    FeatureExtractor ex;
    ex.backend_ = Backend::toy;
    const int in_dim = ex.grid_h_ * ex.grid_w_ * 3;
    ex.proj_.resize(static_cast<std::size_t>(ex.proj_dim_) * in_dim);
    Rng rng(Rng::substream(seed, "extractor/toy"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& v : ex.proj_) v = rng.normal() * scale;
    return ex;
}

FeatureExtractor FeatureExtractor::pretrained(const std::string& weights_path,
                                              const std::string& layer) {
    FeatureExtractor ex;
    ex.backend_ = Backend::pretrained_inception;
    ex.net_ = std::make_shared<const FeatureNet>(FeatureNet::load(weights_path));
    ex.layer_ = layer;
    if (!layer.empty() && layer != "default" && !ex.net_->has_layer(layer))
        throw ConfigError("perceptual_layer not present in feature net: " + layer);
    return ex;
}

FeatureExtractor FeatureExtractor::from_config(const RunConfig& cfg) {
    if (cfg.extractor_backend == "toy") return toy();
    if (cfg.extractor_backend != "pretrained_inception")
        throw ConfigError("unknown extractor_backend: " + cfg.extractor_backend);
    if (!std::filesystem::exists(cfg.inception_weights_path)) {
        if (cfg.allow_toy_fallback) {
            std::fprintf(stderr,
                         "warning: inception weights not found at '%s', "
                         "falling back to toy feature backend\n",
                         cfg.inception_weights_path.c_str());
            return toy();
        }
        throw DataError("inception weights file not found: " +
                        cfg.inception_weights_path +
                        " (set allow_toy_fallback = true to degrade)");
    }
    return pretrained(cfg.inception_weights_path, cfg.train.perceptual_layer);
}

namespace {

// Keras-style preprocessing for the exported backbone: [0,1] -> [-1,1].
Tensor to_net_range(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.v) v = v * 2.0 - 1.0;
    return y;
}

}  // namespace

Tensor FeatureExtractor::features(const Tensor& x) const {
    switch (backend_) {
        case Backend::identity:
            return x;
        case Backend::toy: {
            if (x.c != 3) throw DataError("toy feature backend expects 3 channels");
            const Tensor pooled = K::avgpool_grid_forward(x, grid_h_, grid_w_);
            const int in_dim = grid_h_ * grid_w_ * x.c;
            Tensor out(x.n, 1, 1, proj_dim_);
            for (int i = 0; i < x.n; ++i) {
                const double* f = pooled.row(i, 0, 0);
                double* o = out.row(i, 0, 0);
                for (int d = 0; d < proj_dim_; ++d) {
                    const double* p = proj_.data() + static_cast<std::size_t>(d) * in_dim;
                    double acc = 0.0;
                    for (int e = 0; e < in_dim; ++e) acc += p[e] * f[e];
                    o[d] = acc;
                }
            }
            return out;
        }
        case Backend::pretrained_inception: {
            Tensor in = x;
            if (x.h != net_->input_height() || x.w != net_->input_width())
                in = K::resize_bilinear(x, net_->input_height(), net_->input_width());
            return net_->forward(to_net_range(in), layer_);
        }
    }
    throw RuntimeFault("unreachable extractor backend");
}

Tensor FeatureExtractor::features_vjp(const Tensor& x, const Tensor& gfeat) const {
    switch (backend_) {
        case Backend::identity:
            return gfeat;
        case Backend::toy: {
            const int in_dim = grid_h_ * grid_w_ * x.c;
            Tensor gpool(x.n, grid_h_, grid_w_, x.c);
            for (int i = 0; i < x.n; ++i) {
                const double* go = gfeat.row(i, 0, 0);
                double* gf = gpool.row(i, 0, 0);
                for (int d = 0; d < proj_dim_; ++d) {
                    const double g = go[d];
                    const double* p = proj_.data() + static_cast<std::size_t>(d) * in_dim;
                    for (int e = 0; e < in_dim; ++e) gf[e] += g * p[e];
                }
            }
            return K::avgpool_grid_backward(gpool, x.h, x.w);
        }
        case Backend::pretrained_inception: {
            Tensor in = x;
            const bool resized =
                x.h != net_->input_height() || x.w != net_->input_width();
            if (resized)
                in = K::resize_bilinear(x, net_->input_height(), net_->input_width());
            Tensor gin = net_->forward_vjp(to_net_range(in), layer_, gfeat);
            for (double& v : gin.v) v *= 2.0;
            if (resized) gin = K::resize_bilinear_backward(gin, x.h, x.w);
            return gin;
        }
    }
    throw RuntimeFault("unreachable extractor backend");
}

Tensor FeatureExtractor::pooled_features(const Tensor& x) const {
    switch (backend_) {
        case Backend::identity:
            throw RuntimeFault("identity backend has no pooled feature vector");
        case Backend::toy:
            return features(x);
        case Backend::pretrained_inception:
            return K::avgpool_grid_forward(features(x), 1, 1);
    }
    throw RuntimeFault("unreachable extractor backend");
}

}  // namespace synref
