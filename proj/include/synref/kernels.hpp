#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "synref/tensor.hpp"

// Dense NHWC kernels. The hot ones (conv2d forward/backward) are
// OpenMP-parallel with bit-identical serial twins in kernels::serial;
// every output element is accumulated by exactly one thread in a fixed
// tap order, so results do not depend on the thread count.

namespace synref::kernels {

enum class PadMode { same, valid };

/// TF-style SAME padding: out = ceil(in/stride), excess split with the
/// smaller half in front.
struct SamePad {
    int out;
    int before;
};

SamePad same_pad(int in, int k, int stride);
/// same_pad for PadMode::same; out = (in-k)/stride + 1, pad 0 for valid.
SamePad conv_geometry(int in, int k, int stride, PadMode mode);

/// x: [n, h, w, ic], w: [kh, kw, ic, oc] (Tensor fields n=kh, h=kw, w=ic, c=oc),
/// b: [oc].
Tensor conv2d_forward(const Tensor& x, const Tensor& w,
                      const std::vector<double>& b, int sh, int sw,
                      PadMode mode = PadMode::same);

Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w,
                             int sh, int sw, int in_h, int in_w,
                             PadMode mode = PadMode::same);

/// Fills gw (shaped like w) and gb (length oc); overwrites both.
void conv2d_backward_weights(const Tensor& x, const Tensor& gy,
                             int sh, int sw, int kh, int kw,
                             Tensor& gw, std::vector<double>& gb,
                             PadMode mode = PadMode::same);

struct MaxPoolOut {
    Tensor y;
    std::vector<std::int32_t> arg;  // flat x index of the max, per y element
};

MaxPoolOut maxpool_forward(const Tensor& x, int k, int stride,
                           PadMode mode = PadMode::same);

/// Windowed average pooling; padded positions are excluded from the mean
/// (divisor = count of in-bounds taps).
Tensor avgpool_win_forward(const Tensor& x, int k, int stride,
                           PadMode mode = PadMode::same);
Tensor avgpool_win_backward(const Tensor& gy, int in_h, int in_w, int k,
                            int stride, PadMode mode = PadMode::same);

Tensor maxpool_backward(const Tensor& gy, const std::vector<std::int32_t>& arg,
                        int in_n, int in_h, int in_w, int in_c);

/// Adaptive average pooling onto a gh x gw grid (bin edges floor/ceil of
/// the proportional split, matching the usual adaptive-pool convention).
Tensor avgpool_grid_forward(const Tensor& x, int gh, int gw);
Tensor avgpool_grid_backward(const Tensor& gy, int in_h, int in_w);

/// Nearest-neighbor 2x upsampling and its adjoint.
Tensor upsample2_forward(const Tensor& x);
Tensor upsample2_backward(const Tensor& gy);

Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& g, int c_first);

// Elementwise activations (y = f(x); backward takes upstream grad and the
// forward output).
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& gy, const Tensor& y);
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& gy, const Tensor& y);

/// Numerically stable softmax over the channel axis.
Tensor softmax_channels(const Tensor& x);
/// gx = y ⊙ (gy − sum_c(gy ⊙ y)) per spatial position.
Tensor softmax_channels_backward(const Tensor& gy, const Tensor& y);

/// Bilinear resize with half-pixel centers (align_corners = false).
Tensor resize_bilinear(const Tensor& x, int oh, int ow);
Tensor resize_bilinear_backward(const Tensor& gy, int in_h, int in_w);
LabelMap resize_nearest(const LabelMap& m, int oh, int ow);

/// 3x3 box blur with edge replication, per channel.
Tensor box_blur3(const Tensor& x);

namespace serial {

// Reference twins of the parallel conv kernels: same accumulation order,
// no pragmas, no layout tricks. Tests assert bit-equality against the
// parallel versions; the benchmark tool compares their throughput.
Tensor conv2d_forward(const Tensor& x, const Tensor& w,
                      const std::vector<double>& b, int sh, int sw,
                      PadMode mode = PadMode::same);
Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w,
                             int sh, int sw, int in_h, int in_w,
                             PadMode mode = PadMode::same);
void conv2d_backward_weights(const Tensor& x, const Tensor& gy,
                             int sh, int sw, int kh, int kw,
                             Tensor& gw, std::vector<double>& gb,
                             PadMode mode = PadMode::same);

}  // namespace serial

}  // namespace synref::kernels
