#include "synref/feature_net.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "synref/errors.hpp"

namespace synref {

namespace K = kernels;

FeatureNet::FeatureNet(std::vector<FeatureNetNode> nodes, std::string default_layer,
                       int in_h, int in_w, int in_c)
    : nodes_(std::move(nodes)),
      default_layer_(std::move(default_layer)),
      in_h_(in_h),
      in_w_(in_w),
      in_c_(in_c) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        if (index_.count(n.name))
            throw DataError("feature net: duplicate node name " + n.name);
        if (n.op == "input") {
            if (input_node_ >= 0) throw DataError("feature net: multiple input nodes");
            input_node_ = static_cast<int>(i);
        }
        for (const auto& in : n.inputs) {
            const auto it = index_.find(in);
            if (it == index_.end())
                throw DataError("feature net: node " + n.name +
                                " references unknown/later node " + in);
        }
        static const char* ops[] = {"input", "conv",   "relu",
                                    "maxpool", "avgpool", "concat",
                                    "global_avg_pool"};
        bool known = false;
        for (const char* op : ops) known = known || n.op == op;
        if (!known) throw DataError("feature net: unsupported op " + n.op);
        index_[n.name] = static_cast<int>(i);
    }
    if (input_node_ < 0) throw DataError("feature net: no input node");
    if (!default_layer_.empty() && !index_.count(default_layer_))
        throw DataError("feature net: default layer not found: " + default_layer_);
}

int FeatureNet::node_index(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw DataError("feature net: no layer named " + name);
    return it->second;
}

int FeatureNet::resolve_layer(const std::string& layer) const {
    return node_index(layer.empty() || layer == "default" ? default_layer_ : layer);
}

bool FeatureNet::has_layer(const std::string& name) const {
    return index_.count(name) > 0;
}

namespace {

struct Trace {
    std::vector<Tensor> acts;
    std::vector<std::vector<std::int32_t>> pool_args;
};

}  // namespace

Tensor FeatureNet::forward(const Tensor& x, const std::string& layer) const {
    return forward_vjp(x, layer, Tensor{});
}

// Runs forward to `layer`; when gfeat is non-empty, follows with the reverse
// sweep and returns dx, otherwise returns the layer activation.
Tensor FeatureNet::forward_vjp(const Tensor& x, const std::string& layer,
                               const Tensor& gfeat) const {
    if (x.h != in_h_ || x.w != in_w_ || x.c != in_c_)
        throw DataError("feature net: input dims mismatch (want " +
                        std::to_string(in_h_) + "x" + std::to_string(in_w_) + "x" +
                        std::to_string(in_c_) + ")");
    const int target = resolve_layer(layer);
    const bool want_grad = !gfeat.v.empty();

    Trace tr;
    tr.acts.resize(nodes_.size());
    tr.pool_args.resize(nodes_.size());
    for (int i = 0; i <= target; ++i) {
        const auto& n = nodes_[i];
        if (n.op == "input") {
            tr.acts[i] = x;
        } else if (n.op == "conv") {
            tr.acts[i] = K::conv2d_forward(tr.acts[node_index(n.inputs[0])], n.w, n.b,
                                           n.stride, n.stride, n.pad);
        } else if (n.op == "relu") {
            tr.acts[i] = K::relu(tr.acts[node_index(n.inputs[0])]);
        } else if (n.op == "maxpool") {
            auto out = K::maxpool_forward(tr.acts[node_index(n.inputs[0])], n.ksize,
                                          n.stride, n.pad);
            tr.acts[i] = std::move(out.y);
            tr.pool_args[i] = std::move(out.arg);
        } else if (n.op == "avgpool") {
            tr.acts[i] = K::avgpool_win_forward(tr.acts[node_index(n.inputs[0])],
                                                n.ksize, n.stride, n.pad);
        } else if (n.op == "concat") {
            const Tensor& first = tr.acts[node_index(n.inputs[0])];
            int total_c = 0;
            for (const auto& in : n.inputs) total_c += tr.acts[node_index(in)].c;
            Tensor out(first.n, first.h, first.w, total_c);
            int off = 0;
            for (const auto& in : n.inputs) {
                const Tensor& part = tr.acts[node_index(in)];
                if (part.h != first.h || part.w != first.w)
                    throw DataError("feature net: concat dims mismatch at " + n.name);
                for (int b = 0; b < part.n; ++b)
                    for (int iy = 0; iy < part.h; ++iy)
                        for (int ix = 0; ix < part.w; ++ix)
                            std::memcpy(out.row(b, iy, ix) + off, part.row(b, iy, ix),
                                        part.c * sizeof(double));
                off += part.c;
            }
            tr.acts[i] = std::move(out);
        } else if (n.op == "global_avg_pool") {
            tr.acts[i] = K::avgpool_grid_forward(tr.acts[node_index(n.inputs[0])], 1, 1);
        }
    }
    if (!want_grad) return tr.acts[target];

    std::vector<Tensor> grads(nodes_.size());
    if (!gfeat.same_shape(tr.acts[target]))
        throw DataError("feature net: gfeat shape mismatch");
    grads[target] = gfeat;
    auto add_into = [](Tensor& dst, const Tensor& src) {
        if (dst.v.empty()) {
            dst = src;
            return;
        }
        for (std::size_t e = 0; e < dst.v.size(); ++e) dst.v[e] += src.v[e];
    };
    for (int i = target; i >= 0; --i) {
        const auto& n = nodes_[i];
        if (grads[i].v.empty() || n.op == "input") continue;
        const Tensor& g = grads[i];
        if (n.op == "conv") {
            const int src = node_index(n.inputs[0]);
            add_into(grads[src], K::conv2d_backward_input(g, n.w, n.stride, n.stride,
                                                          tr.acts[src].h,
                                                          tr.acts[src].w, n.pad));
        } else if (n.op == "relu") {
            const int src = node_index(n.inputs[0]);
            add_into(grads[src], K::relu_backward(g, tr.acts[i]));
        } else if (n.op == "maxpool") {
            const int src = node_index(n.inputs[0]);
            const Tensor& in = tr.acts[src];
            add_into(grads[src],
                     K::maxpool_backward(g, tr.pool_args[i], in.n, in.h, in.w, in.c));
        } else if (n.op == "avgpool") {
            const int src = node_index(n.inputs[0]);
            const Tensor& in = tr.acts[src];
            add_into(grads[src],
                     K::avgpool_win_backward(g, in.h, in.w, n.ksize, n.stride, n.pad));
        } else if (n.op == "concat") {
            int off = 0;
            for (const auto& in : n.inputs) {
                const int src = node_index(in);
                const Tensor& part = tr.acts[src];
                Tensor gp(part.n, part.h, part.w, part.c);
                for (int b = 0; b < part.n; ++b)
                    for (int iy = 0; iy < part.h; ++iy)
                        for (int ix = 0; ix < part.w; ++ix)
                            std::memcpy(gp.row(b, iy, ix), g.row(b, iy, ix) + off,
                                        part.c * sizeof(double));
                off += part.c;
                add_into(grads[src], gp);
            }
        } else if (n.op == "global_avg_pool") {
            const int src = node_index(n.inputs[0]);
            const Tensor& in = tr.acts[src];
            add_into(grads[src], K::avgpool_grid_backward(g, in.h, in.w));
        }
    }
    return grads[input_node_];
}

namespace {

constexpr char kMagic[5] = {'S', 'R', 'F', 'N', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw DataError("feature net file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_str(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& is) {
    const auto len = get_u64(is);
    if (len > (1u << 20)) throw DataError("feature net file: absurd string length");
    std::string s(len, '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(len)))
        throw DataError("feature net file truncated");
    return s;
}

void put_f32s(std::ostream& os, const std::vector<double>& v) {
    put_u64(os, v.size());
    for (double d : v) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(d));
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
        os.write(reinterpret_cast<const char*>(b), 4);
    }
}

std::vector<double> get_f32s(std::istream& is) {
    std::vector<double> v(get_u64(is));
    std::vector<unsigned char> raw(v.size() * 4);
    if (!v.empty() &&
        !is.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size())))
        throw DataError("feature net file truncated");
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint32_t u = 0;
        for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(raw[i * 4 + k]) << (8 * k);
        v[i] = std::bit_cast<float>(u);
    }
    return v;
}

}  // namespace

void FeatureNet::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open feature net file for writing: " + path);
    os.write(kMagic, 5);
    put_u64(os, static_cast<std::uint64_t>(in_h_));
    put_u64(os, static_cast<std::uint64_t>(in_w_));
    put_u64(os, static_cast<std::uint64_t>(in_c_));
    put_str(os, default_layer_);
    put_u64(os, nodes_.size());
    for (const auto& n : nodes_) {
        put_str(os, n.name);
        put_str(os, n.op);
        put_u64(os, n.inputs.size());
        for (const auto& in : n.inputs) put_str(os, in);
        os.put(n.pad == K::PadMode::valid ? 1 : 0);
        put_u64(os, static_cast<std::uint64_t>(n.stride));
        put_u64(os, static_cast<std::uint64_t>(n.ksize));
        if (n.op == "conv") {
            put_u64(os, static_cast<std::uint64_t>(n.w.n));
            put_u64(os, static_cast<std::uint64_t>(n.w.h));
            put_u64(os, static_cast<std::uint64_t>(n.w.w));
            put_u64(os, static_cast<std::uint64_t>(n.w.c));
            put_f32s(os, n.w.v);
            put_f32s(os, n.b);
        }
    }
    if (!os) throw DataError("write failure on feature net file: " + path);
}

FeatureNet FeatureNet::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open feature net file: " + path);
    char magic[5];
    if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
        throw DataError("not a feature net file (or wrong version): " + path);
    const int in_h = static_cast<int>(get_u64(is));
    const int in_w = static_cast<int>(get_u64(is));
    const int in_c = static_cast<int>(get_u64(is));
    std::string default_layer = get_str(is);
    std::vector<FeatureNetNode> nodes(get_u64(is));
    for (auto& n : nodes) {
        n.name = get_str(is);
        n.op = get_str(is);
        n.inputs.resize(get_u64(is));
        for (auto& in : n.inputs) in = get_str(is);
        const int pad = is.get();
        if (pad < 0) throw DataError("feature net file truncated");
        n.pad = pad ? K::PadMode::valid : K::PadMode::same;
        n.stride = static_cast<int>(get_u64(is));
        n.ksize = static_cast<int>(get_u64(is));
        if (n.op == "conv") {
            const int kh = static_cast<int>(get_u64(is));
            const int kw = static_cast<int>(get_u64(is));
            const int ic = static_cast<int>(get_u64(is));
            const int oc = static_cast<int>(get_u64(is));
            n.w = Tensor(kh, kw, ic, oc);
            auto wv = get_f32s(is);
            if (wv.size() != n.w.v.size())
                throw DataError("feature net file: weight size mismatch at " + n.name);
            n.w.v = std::move(wv);
            n.b = get_f32s(is);
        }
    }
    return FeatureNet(std::move(nodes), std::move(default_layer), in_h, in_w, in_c);
}

}  // namespace synref
