#include "synref/networks.hpp"

#include <cmath>

#include "synref/errors.hpp"
#include "synref/rng.hpp"

namespace synref {

namespace K = kernels;

namespace {

ConvP make_conv(std::string name, int k, int stride, int ic, int oc) {
    ConvP p;
    p.name = std::move(name);
    p.stride = stride;
    p.w = Tensor(k, k, ic, oc);
    p.b.assign(oc, 0.0);
    return p;
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

void add_into(Tensor& a, const Tensor& b) {
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

void check_input(const Tensor& x, int want_c, const char* who) {
    if (x.c != want_c)
        throw DataError(std::string(who) + " expects " + std::to_string(want_c) +
                        "-channel input, got " + std::to_string(x.c));
    if (x.n < 1 || x.h < 1 || x.w < 1)
        throw DataError(std::string(who) + ": empty input batch");
}

}  // namespace

void init_conv(ConvP& p, std::uint64_t seed) {
    Rng rng = Rng::substream(seed, "init/" + p.name);
    const int fan_in = p.w.n * p.w.h * p.w.w;  // kh * kw * ic
    const double limit = std::sqrt(3.0 / fan_in);
    for (double& v : p.w.v) v = rng.uniform(-limit, limit);
    for (double& v : p.b) v = 0.0;
}

ParamRecord layers_to_record(const std::vector<ConvP>& layers) {
    ParamRecord rec;
    rec.reserve(layers.size() * 2);
    for (const auto& l : layers) {
        rec.push_back({l.name + ".w", l.w.v});
        rec.push_back({l.name + ".b", l.b});
    }
    return rec;
}

void layers_from_record(std::vector<ConvP>& layers, const ParamRecord& rec) {
    if (rec.size() != layers.size() * 2)
        throw DataError("parameter record has " + std::to_string(rec.size()) +
                        " arrays, net expects " + std::to_string(layers.size() * 2));
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const NamedArray& w = rec[2 * i];
        const NamedArray& b = rec[2 * i + 1];
        if (w.name != layers[i].name + ".w" || b.name != layers[i].name + ".b")
            throw DataError("parameter record name mismatch at " + w.name);
        if (w.data.size() != layers[i].w.v.size() || b.data.size() != layers[i].b.size())
            throw DataError("parameter record size mismatch at " + w.name);
        layers[i].w.v = w.data;
        layers[i].b = b.data;
    }
}

void sgd_step(std::vector<ConvP>& layers, const Grads& g, double lr) {
    if (g.size() != layers.size())
        throw RuntimeFault("gradient list misaligned with layer list");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (g[i].gw.v.size() != layers[i].w.v.size() ||
            g[i].gb.size() != layers[i].b.size())
            throw RuntimeFault("gradient shape misaligned at " + layers[i].name);
        for (std::size_t j = 0; j < layers[i].w.v.size(); ++j)
            layers[i].w.v[j] -= lr * g[i].gw.v[j];
        for (std::size_t j = 0; j < layers[i].b.size(); ++j)
            layers[i].b[j] -= lr * g[i].gb[j];
    }
}

std::vector<double> disc_prob_real(const Tensor& prob_map) {
    if (prob_map.c != 2) throw DataError("probability map must have 2 channels");
    std::vector<double> out(prob_map.n);
    const long hw = static_cast<long>(prob_map.h) * prob_map.w;
    for (int i = 0; i < prob_map.n; ++i) {
        double total = 0;
        for (int y = 0; y < prob_map.h; ++y)
            for (int x = 0; x < prob_map.w; ++x) total += prob_map.at(i, y, x, 1);
        out[i] = total / static_cast<double>(hw);
    }
    return out;
}

Tensor disc_prob_real_vjp(const Tensor& prob_map, const std::vector<double>& gp) {
    if (prob_map.c != 2) throw DataError("probability map must have 2 channels");
    if (gp.size() != static_cast<std::size_t>(prob_map.n))
        throw RuntimeFault("disc_prob_real_vjp: gradient count != batch size");
    Tensor g(prob_map.n, prob_map.h, prob_map.w, 2);
    const double inv_hw = 1.0 / (static_cast<double>(prob_map.h) * prob_map.w);
    for (int i = 0; i < prob_map.n; ++i)
        for (int y = 0; y < prob_map.h; ++y)
            for (int x = 0; x < prob_map.w; ++x) g.at(i, y, x, 1) = gp[i] * inv_hw;
    return g;
}

LabelMap argmax_map(const Tensor& scores) {
    LabelMap m(scores.n, scores.h, scores.w, scores.c);
    for (int i = 0; i < scores.n; ++i)
        for (int y = 0; y < scores.h; ++y)
            for (int x = 0; x < scores.w; ++x) {
                const double* row = scores.row(i, y, x);
                int best = 0;
                for (int c = 1; c < scores.c; ++c)
                    if (row[c] > row[best]) best = c;
                m.at(i, y, x) = best;
            }
    return m;
}

RefinerNet::RefinerNet(int trunk_channels, int num_blocks)
    : channels_(trunk_channels), blocks_(num_blocks) {
    layers_.push_back(make_conv("stem", 4, 1, 3, channels_));
    for (int k = 0; k < blocks_; ++k) {
        const std::string base = "block" + std::to_string(k);
        layers_.push_back(make_conv(base + ".conv0", 4, 1, channels_, channels_));
        layers_.push_back(make_conv(base + ".conv1", 4, 1, channels_, channels_));
    }
    layers_.push_back(make_conv("out", 1, 1, channels_, 3));
}

void RefinerNet::init_params(std::uint64_t seed) {
    for (auto& l : layers_) init_conv(l, seed);
}

Tensor RefinerNet::forward(const Tensor& x, Cache* cache) const {
    check_input(x, 3, "refiner");
    Cache c;
    c.x = x;
    const ConvP& stem = layers_[0];
    c.stem_out = K::relu(K::conv2d_forward(x, stem.w, stem.b, 1, 1));
    Tensor cur = c.stem_out;
    for (int k = 0; k < blocks_; ++k) {
        const ConvP& c0 = layers_[1 + 2 * k];
        const ConvP& c1 = layers_[2 + 2 * k];
        c.block_in.push_back(cur);
        Tensor mid = K::relu(K::conv2d_forward(cur, c0.w, c0.b, 1, 1));
        Tensor t2 = K::conv2d_forward(mid, c1.w, c1.b, 1, 1);
        c.block_mid.push_back(std::move(mid));
        cur = add(cur, t2);
    }
    c.trunk_out = cur;
    const ConvP& out = layers_.back();
    c.y = K::sigmoid(K::conv2d_forward(cur, out.w, out.b, 1, 1));
    Tensor y = c.y;
    if (cache) *cache = std::move(c);
    return y;
}

Grads RefinerNet::backward(const Cache& c, const Tensor& gy, Tensor* gx) const {
    if (!gy.same_shape(c.y)) throw RuntimeFault("refiner backward: gy shape mismatch");
    Grads g(layers_.size());

    const Tensor gz = K::sigmoid_backward(gy, c.y);
    const ConvP& out = layers_.back();
    K::conv2d_backward_weights(c.trunk_out, gz, 1, 1, 1, 1, g.back().gw, g.back().gb);
    Tensor ga = K::conv2d_backward_input(gz, out.w, 1, 1, c.trunk_out.h, c.trunk_out.w);

    for (int k = blocks_ - 1; k >= 0; --k) {
        const ConvP& c0 = layers_[1 + 2 * k];
        const ConvP& c1 = layers_[2 + 2 * k];
        // trunk_{k+1} = trunk_k + conv1(relu(conv0(trunk_k)))
        K::conv2d_backward_weights(c.block_mid[k], ga, 1, 1, 4, 4, g[2 + 2 * k].gw,
                                   g[2 + 2 * k].gb);
        Tensor gmid = K::conv2d_backward_input(ga, c1.w, 1, 1, c.block_mid[k].h,
                                               c.block_mid[k].w);
        Tensor gpre = K::relu_backward(gmid, c.block_mid[k]);
        K::conv2d_backward_weights(c.block_in[k], gpre, 1, 1, 4, 4, g[1 + 2 * k].gw,
                                   g[1 + 2 * k].gb);
        add_into(ga, K::conv2d_backward_input(gpre, c0.w, 1, 1, c.block_in[k].h,
                                              c.block_in[k].w));
    }

    const Tensor gpre0 = K::relu_backward(ga, c.stem_out);
    const ConvP& stem = layers_[0];
    K::conv2d_backward_weights(c.x, gpre0, 1, 1, 4, 4, g[0].gw, g[0].gb);
    if (gx) *gx = K::conv2d_backward_input(gpre0, stem.w, 1, 1, c.x.h, c.x.w);
    return g;
}

DiscriminatorNet::DiscriminatorNet() {
    layers_.push_back(make_conv("c1", 5, 3, 3, 96));
    layers_.push_back(make_conv("c2", 4, 2, 96, 64));
    layers_.push_back(make_conv("c3", 3, 2, 64, 32));
    layers_.push_back(make_conv("c4", 1, 1, 32, 32));
    layers_.push_back(make_conv("c5", 1, 1, 32, 2));
}

void DiscriminatorNet::init_params(std::uint64_t seed) {
    for (auto& l : layers_) init_conv(l, seed);
}

Tensor DiscriminatorNet::forward(const Tensor& x, Cache* cache) const {
    check_input(x, 3, "discriminator");
    Cache c;
    c.x = x;
    c.r1 = K::relu(K::conv2d_forward(x, layers_[0].w, layers_[0].b, 3, 3));
    c.r2 = K::relu(K::conv2d_forward(c.r1, layers_[1].w, layers_[1].b, 2, 2));
    auto pool = K::maxpool_forward(c.r2, 3, 2);
    c.pool = std::move(pool.y);
    c.pool_arg = std::move(pool.arg);
    c.r3 = K::relu(K::conv2d_forward(c.pool, layers_[2].w, layers_[2].b, 2, 2));
    c.r4 = K::relu(K::conv2d_forward(c.r3, layers_[3].w, layers_[3].b, 1, 1));
    c.y = K::softmax_channels(K::conv2d_forward(c.r4, layers_[4].w, layers_[4].b, 1, 1));
    Tensor y = c.y;
    if (cache) *cache = std::move(c);
    return y;
}

Grads DiscriminatorNet::backward(const Cache& c, const Tensor& gy, Tensor* gx) const {
    if (!gy.same_shape(c.y))
        throw RuntimeFault("discriminator backward: gy shape mismatch");
    Grads g(layers_.size());

    Tensor gz = K::softmax_channels_backward(gy, c.y);
    K::conv2d_backward_weights(c.r4, gz, 1, 1, 1, 1, g[4].gw, g[4].gb);
    Tensor g4 = K::relu_backward(
        K::conv2d_backward_input(gz, layers_[4].w, 1, 1, c.r4.h, c.r4.w), c.r4);
    K::conv2d_backward_weights(c.r3, g4, 1, 1, 1, 1, g[3].gw, g[3].gb);
    Tensor g3 = K::relu_backward(
        K::conv2d_backward_input(g4, layers_[3].w, 1, 1, c.r3.h, c.r3.w), c.r3);
    K::conv2d_backward_weights(c.pool, g3, 2, 2, 3, 3, g[2].gw, g[2].gb);
    Tensor gpool = K::conv2d_backward_input(g3, layers_[2].w, 2, 2, c.pool.h, c.pool.w);
    Tensor g2 = K::relu_backward(
        K::maxpool_backward(gpool, c.pool_arg, c.r2.n, c.r2.h, c.r2.w, c.r2.c), c.r2);
    K::conv2d_backward_weights(c.r1, g2, 2, 2, 4, 4, g[1].gw, g[1].gb);
    Tensor g1 = K::relu_backward(
        K::conv2d_backward_input(g2, layers_[1].w, 2, 2, c.r1.h, c.r1.w), c.r1);
    K::conv2d_backward_weights(c.x, g1, 3, 3, 5, 5, g[0].gw, g[0].gb);
    if (gx) *gx = K::conv2d_backward_input(g1, layers_[0].w, 3, 3, c.x.h, c.x.w);
    return g;
}

SegNet::SegNet(int in_channels, int num_classes, int base_channels)
    : in_channels_(in_channels), num_classes_(num_classes), base_(base_channels) {
    const int c1 = base_, c2 = 2 * base_, c4 = 4 * base_;
    layers_.push_back(make_conv("e1a", 3, 1, in_channels_, c1));
    layers_.push_back(make_conv("e1b", 3, 1, c1, c1));
    layers_.push_back(make_conv("e2a", 3, 1, c1, c2));
    layers_.push_back(make_conv("e2b", 3, 1, c2, c2));
    layers_.push_back(make_conv("bna", 3, 1, c2, c4));
    layers_.push_back(make_conv("bnb", 3, 1, c4, c4));
    layers_.push_back(make_conv("d2a", 3, 1, c4 + c2, c2));
    layers_.push_back(make_conv("d2b", 3, 1, c2, c2));
    layers_.push_back(make_conv("d1a", 3, 1, c2 + c1, c1));
    layers_.push_back(make_conv("d1b", 3, 1, c1, c1));
    layers_.push_back(make_conv("out", 1, 1, c1, num_classes_));
}

void SegNet::init_params(std::uint64_t seed) {
    for (auto& l : layers_) init_conv(l, seed);
}

Tensor SegNet::forward(const Tensor& x, Cache* cache) const {
    check_input(x, in_channels_, "seg net");
    if (x.h % 4 != 0 || x.w % 4 != 0)
        throw DataError("seg net input dims must be divisible by 4, got " +
                        std::to_string(x.h) + "x" + std::to_string(x.w));
    Cache c;
    c.x = x;
    auto conv_relu = [&](const Tensor& in, int li) {
        return K::relu(K::conv2d_forward(in, layers_[li].w, layers_[li].b, 1, 1));
    };
    c.e1a = conv_relu(x, 0);
    c.e1b = conv_relu(c.e1a, 1);
    auto p1 = K::maxpool_forward(c.e1b, 2, 2);
    c.p1 = std::move(p1.y);
    c.p1_arg = std::move(p1.arg);
    c.e2a = conv_relu(c.p1, 2);
    c.e2b = conv_relu(c.e2a, 3);
    auto p2 = K::maxpool_forward(c.e2b, 2, 2);
    c.p2 = std::move(p2.y);
    c.p2_arg = std::move(p2.arg);
    c.bna = conv_relu(c.p2, 4);
    c.bnb = conv_relu(c.bna, 5);
    c.cat2 = K::concat_channels(K::upsample2_forward(c.bnb), c.e2b);
    c.d2a = conv_relu(c.cat2, 6);
    c.d2b = conv_relu(c.d2a, 7);
    c.cat1 = K::concat_channels(K::upsample2_forward(c.d2b), c.e1b);
    c.d1a = conv_relu(c.cat1, 8);
    c.d1b = conv_relu(c.d1a, 9);
    Tensor scores =
        K::conv2d_forward(c.d1b, layers_[10].w, layers_[10].b, 1, 1);
    if (cache) *cache = std::move(c);
    return scores;
}

Grads SegNet::backward(const Cache& c, const Tensor& gy, Tensor* gx) const {
    Grads g(layers_.size());
    auto conv_bwd = [&](const Tensor& in, const Tensor& gout, int li) {
        const int k = layers_[li].w.n;
        K::conv2d_backward_weights(in, gout, 1, 1, k, k, g[li].gw, g[li].gb);
        return K::conv2d_backward_input(gout, layers_[li].w, 1, 1, in.h, in.w);
    };
    // out conv (no relu)
    Tensor gd1b = conv_bwd(c.d1b, gy, 10);
    gd1b = K::relu_backward(gd1b, c.d1b);
    Tensor gd1a = K::relu_backward(conv_bwd(c.d1a, gd1b, 9), c.d1a);
    Tensor gcat1 = conv_bwd(c.cat1, gd1a, 8);
    auto [gu1, ge1b_skip] = K::split_channels(gcat1, c.cat1.c - c.e1b.c);
    Tensor gd2b = K::relu_backward(K::upsample2_backward(gu1), c.d2b);
    Tensor gd2a = K::relu_backward(conv_bwd(c.d2a, gd2b, 7), c.d2a);
    Tensor gcat2 = conv_bwd(c.cat2, gd2a, 6);
    auto [gu2, ge2b_skip] = K::split_channels(gcat2, c.cat2.c - c.e2b.c);
    Tensor gbnb = K::relu_backward(K::upsample2_backward(gu2), c.bnb);
    Tensor gbna = K::relu_backward(conv_bwd(c.bna, gbnb, 5), c.bna);
    Tensor gp2 = conv_bwd(c.p2, gbna, 4);
    Tensor ge2b = K::maxpool_backward(gp2, c.p2_arg, c.e2b.n, c.e2b.h, c.e2b.w, c.e2b.c);
    add_into(ge2b, ge2b_skip);
    ge2b = K::relu_backward(ge2b, c.e2b);
    Tensor ge2a = K::relu_backward(conv_bwd(c.e2a, ge2b, 3), c.e2a);
    Tensor gp1 = conv_bwd(c.p1, ge2a, 2);
    Tensor ge1b = K::maxpool_backward(gp1, c.p1_arg, c.e1b.n, c.e1b.h, c.e1b.w, c.e1b.c);
    add_into(ge1b, ge1b_skip);
    ge1b = K::relu_backward(ge1b, c.e1b);
    Tensor ge1a = K::relu_backward(conv_bwd(c.e1a, ge1b, 1), c.e1a);
    Tensor gin = conv_bwd(c.x, ge1a, 0);
    if (gx) *gx = std::move(gin);
    return g;
}

}  // namespace synref
