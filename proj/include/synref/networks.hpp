#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synref/core_types.hpp"
#include "synref/kernels.hpp"
#include "synref/tensor.hpp"

namespace synref {

/// One convolution's parameters. Every trainable array in the project is
/// the weight or bias of some ConvP, so checkpointing and SGD are uniform.
struct ConvP {
    std::string name;
    int stride = 1;
    Tensor w;               // [kh, kw, ic, oc]
    std::vector<double> b;  // [oc]
};

struct ConvG {
    Tensor gw;
    std::vector<double> gb;
};
/// Parameter gradients, index-aligned with a net's layer list.
using Grads = std::vector<ConvG>;

/// Fan-in-scaled uniform init, U(+-sqrt(3/fan_in)), zero bias. Each layer
/// draws from its own named substream, so adding a layer never shifts
/// another layer's values.
void init_conv(ConvP& p, std::uint64_t seed);

ParamRecord layers_to_record(const std::vector<ConvP>& layers);
/// Restores weights from a record produced by layers_to_record; names and
/// sizes must match exactly.
void layers_from_record(std::vector<ConvP>& layers, const ParamRecord& rec);
void sgd_step(std::vector<ConvP>& layers, const Grads& g, double lr);

/// Mean over spatial positions of the "real" channel (channel 1), one
/// scalar per image.
std::vector<double> disc_prob_real(const Tensor& prob_map);
/// Adjoint of disc_prob_real: spreads d/d(scalar) uniformly over channel 1.
Tensor disc_prob_real_vjp(const Tensor& prob_map, const std::vector<double>& gp);

/// Per-pixel argmax over the channel axis (ties take the lowest class).
LabelMap argmax_map(const Tensor& scores);

/// Resolution-preserving refiner: 4x4 stem conv to a 64-map trunk, five
/// residual blocks (conv-relu-conv plus skip), 1x1 conv back to RGB,
/// sigmoid squash into [0,1].
class RefinerNet {
  public:
    explicit RefinerNet(int trunk_channels = 64, int num_blocks = 5);
    void init_params(std::uint64_t seed);

    struct Cache {
        Tensor x;
        Tensor stem_out;                 // relu output
        std::vector<Tensor> block_in;    // trunk entering each block
        std::vector<Tensor> block_mid;   // relu output inside each block
        Tensor trunk_out;                // input to the output conv
        Tensor y;                        // sigmoid output
    };

    /// 3-channel input, any dims accepted by the kernels (>= the 4x4
    /// filter support is sensible; the net itself is stride-1 throughout).
    Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
    /// gy is dLoss/d(output); returns parameter grads aligned with
    /// layers(); gx (optional) receives dLoss/d(input).
    Grads backward(const Cache& cache, const Tensor& gy, Tensor* gx = nullptr) const;

    std::vector<ConvP>& layers() { return layers_; }
    const std::vector<ConvP>& layers() const { return layers_; }
    ParamRecord params() const { return layers_to_record(layers_); }
    void set_params(const ParamRecord& rec) { layers_from_record(layers_, rec); }

    int trunk_channels() const { return channels_; }
    int num_blocks() const { return blocks_; }

  private:
    int channels_, blocks_;
    std::vector<ConvP> layers_;  // stem, block k conv 0/1 ..., out
};

/// Patch discriminator: conv 5x5 s3 96, conv 4x4 s2 64, maxpool 3x3 s2,
/// conv 3x3 s2 32, conv 1x1 s1 32, conv 1x1 s1 2, softmax over the two
/// channels. All convs ReLU except the final two-map one.
class DiscriminatorNet {
  public:
    DiscriminatorNet();
    void init_params(std::uint64_t seed);

    struct Cache {
        Tensor x;
        Tensor r1, r2;                    // relu outputs
        Tensor pool;
        std::vector<std::int32_t> pool_arg;
        Tensor r3, r4;
        Tensor y;                         // softmax probability map
    };

    /// Returns the [n, h', w', 2] probability map; channel 0 scores
    /// "synthetic", channel 1 scores "real".
    Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
    Grads backward(const Cache& cache, const Tensor& gy, Tensor* gx = nullptr) const;

    std::vector<ConvP>& layers() { return layers_; }
    const std::vector<ConvP>& layers() const { return layers_; }
    ParamRecord params() const { return layers_to_record(layers_); }
    void set_params(const ParamRecord& rec) { layers_from_record(layers_, rec); }

  private:
    std::vector<ConvP> layers_;  // c1, c2, c3, c4, c5
};

/// Compact 3-level U-Net-style segmenter: two 3x3 convs per level, 2x2
/// max-pool downsampling, nearest-neighbor upsampling with skip concat,
/// 1x1 conv to per-pixel class scores. Input dims must be divisible by 4.
class SegNet {
  public:
    SegNet(int in_channels, int num_classes, int base_channels);
    void init_params(std::uint64_t seed);

    struct Cache {
        Tensor x;
        Tensor e1a, e1b, p1;
        std::vector<std::int32_t> p1_arg;
        Tensor e2a, e2b, p2;
        std::vector<std::int32_t> p2_arg;
        Tensor bna, bnb;
        Tensor cat2, d2a, d2b;
        Tensor cat1, d1a, d1b;
    };

    Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
    Grads backward(const Cache& cache, const Tensor& gy, Tensor* gx = nullptr) const;

    std::vector<ConvP>& layers() { return layers_; }
    const std::vector<ConvP>& layers() const { return layers_; }
    ParamRecord params() const { return layers_to_record(layers_); }
    void set_params(const ParamRecord& rec) { layers_from_record(layers_, rec); }

    int num_classes() const { return num_classes_; }

  private:
    int in_channels_, num_classes_, base_;
    std::vector<ConvP> layers_;
};

}  // namespace synref
