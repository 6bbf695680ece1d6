#pragma once

#include <map>
#include <string>
#include <vector>

#include "synref/kernels.hpp"
#include "synref/tensor.hpp"

namespace synref {

/// One node of a feed-forward feature graph. Supported ops: input, conv
/// (+bias, no activation), relu, maxpool, avgpool, concat (channel axis,
/// n-ary), global_avg_pool.
struct FeatureNetNode {
    std::string name;
    std::string op;
    std::vector<std::string> inputs;
    kernels::PadMode pad = kernels::PadMode::same;
    int stride = 1;
    int ksize = 1;
    Tensor w;                // conv only, [kh, kw, ic, oc]
    std::vector<double> b;   // conv only
};

/// Inference-only executor for exported feature backbones (file format
/// SRFN1: nodes in topological order, float32 weights). Forward activations
/// at any named layer, plus the matching vector-Jacobian product so losses
/// can backpropagate through the features.
class FeatureNet {
  public:
    /// Nodes must reference only earlier nodes; exactly one `input` node.
    FeatureNet(std::vector<FeatureNetNode> nodes, std::string default_layer,
               int in_h, int in_w, int in_c);

    static FeatureNet load(const std::string& path);
    void save(const std::string& path) const;

    bool has_layer(const std::string& name) const;
    const std::string& default_layer() const { return default_layer_; }
    int input_height() const { return in_h_; }
    int input_width() const { return in_w_; }
    int input_channels() const { return in_c_; }

    /// Activation map of `layer` for x (x must match the declared input dims).
    Tensor forward(const Tensor& x, const std::string& layer) const;
    /// d(sum(forward(x, layer) * gfeat)) / dx.
    Tensor forward_vjp(const Tensor& x, const std::string& layer,
                       const Tensor& gfeat) const;

  private:
    int node_index(const std::string& name) const;
    int resolve_layer(const std::string& layer) const;

    std::vector<FeatureNetNode> nodes_;
    std::map<std::string, int> index_;
    std::string default_layer_;
    int in_h_, in_w_, in_c_;
    int input_node_ = -1;
};

}  // namespace synref
