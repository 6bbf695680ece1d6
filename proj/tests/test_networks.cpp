#include "doctest.h"
#include <array>

#include <cmath>
#include <vector>

#include "synref/networks.hpp"
#include "synref/rng.hpp"
#include "test_util.hpp"

using namespace synref;
using testutil::rel_err;

namespace {

Tensor random_image(Rng& rng, int n, int h, int w, int c = 3) {
    Tensor t(n, h, w, c);
    for (double& v : t.v) v = rng.uniform(0.0, 1.0);
    return t;
}

// FD probe of dL/d(param entry) where L = sum(forward(x) * g_out)
template <typename Net>
double fd_param_grad(Net& net, const Tensor& x, const Tensor& g_out,
                     std::size_t layer, std::size_t idx, bool bias,
                     double step = 1e-4) {
    double& slot = bias ? net.layers()[layer].b[idx] : net.layers()[layer].w.v[idx];
    const double saved = slot;
    auto eval = [&] {
        const Tensor y = net.forward(x);
        double s = 0;
        for (std::size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * g_out.v[i];
        return s;
    };
    slot = saved + step;
    const double fp = eval();
    slot = saved - step;
    const double fm = eval();
    slot = saved;
    return (fp - fm) / (2 * step);
}

bool grad_close(double got, double fd) {
    return rel_err(got, fd) < 1e-3 || (std::abs(got) < 1e-8 && std::abs(fd) < 1e-8);
}

// Central differences are only a valid oracle while the objective stays smooth
// across the probe interval. A ReLU pre-activation crossing zero inside
// +-1e-4 biases the estimate by an amount unrelated to the slot under test,
// so on a miss we re-estimate at 1e-5: a straddled kink makes the two FD
// values disagree with each other while the smaller step converges to the
// analytic one; a wrong analytic gradient keeps failing because both FD
// estimates agree with each other and not with it.
template <typename FdAt>
bool fd_grad_ok(double an, FdAt&& fd_at) {
    const double fd1 = fd_at(1e-4);
    if (grad_close(an, fd1)) return true;
    const double fd2 = fd_at(1e-5);
    return !grad_close(fd1, fd2) && grad_close(an, fd2);
}

// FD probes sit on the largest-magnitude gradient of each layer, keeping the
// signal well above the ~1e-6 absolute FD noise floor.
std::size_t argmax_abs(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best])) best = i;
    return best;
}

std::array<std::size_t, 3> top3_abs(const std::vector<double>& v) {
    std::array<std::size_t, 3> idx{0, 0, 0};
    std::array<double, 3> mag{-1, -1, -1};
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double a = std::abs(v[i]);
        for (int k = 0; k < 3; ++k)
            if (a > mag[k]) {
                for (int m = 2; m > k; --m) {
                    mag[m] = mag[m - 1];
                    idx[m] = idx[m - 1];
                }
                mag[k] = a;
                idx[k] = i;
                break;
            }
    }
    return idx;
}

}  // namespace

TEST_CASE("refiner preserves shape and range") {
    RefinerNet net;
    net.init_params(11);
    Rng rng(Rng::substream(70, "refiner-shape"));

    const Tensor x = random_image(rng, 2, 12, 16);
    const Tensor y = net.forward(x);
    CHECK(y.same_shape(x));
    for (double v : y.v) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(std::isfinite(v));
    }

    const Tensor big = random_image(rng, 1, 80, 160);
    const Tensor yb = net.forward(big);
    CHECK(yb.h == 80);
    CHECK(yb.w == 160);
    CHECK(yb.c == 3);

    Tensor gray(1, 12, 16, 1, 0.5);
    CHECK_THROWS_AS(net.forward(gray), DataError);
}

TEST_CASE("refiner with zeroed output conv emits constant mid-gray") {
    RefinerNet net;
    net.init_params(12);
    auto& out = net.layers().back();
    for (double& v : out.w.v) v = 0.0;
    for (double& v : out.b) v = 0.0;
    Rng rng(Rng::substream(71, "refiner-zero"));
    const Tensor y = net.forward(random_image(rng, 1, 12, 16));
    for (double v : y.v) CHECK(v == 0.5);
}

TEST_CASE("refiner is deterministic and pure") {
    RefinerNet a, b;
    a.init_params(33);
    b.init_params(33);
    CHECK(param_hash(a.params()) == param_hash(b.params()));
    RefinerNet c;
    c.init_params(34);
    CHECK(param_hash(a.params()) != param_hash(c.params()));

    Rng rng(Rng::substream(72, "refiner-dup"));
    const Tensor one = random_image(rng, 1, 12, 16);
    Tensor two(2, 12, 16, 3);
    two.set_slice(0, one);
    two.set_slice(1, one);
    const Tensor y = a.forward(two);
    CHECK(y.slice(0).v == y.slice(1).v);
    CHECK(y.slice(0).v == a.forward(one).v);
}

TEST_CASE("refiner gradients match finite differences") {
    RefinerNet net;
    net.init_params(13);
    Rng rng(Rng::substream(73, "refiner-grad"));
    const Tensor x = random_image(rng, 1, 8, 8);

    RefinerNet::Cache cache;
    const Tensor y = net.forward(x, &cache);
    Tensor g_out(y.n, y.h, y.w, y.c);
    for (double& v : g_out.v) v = rng.uniform(-1.0, 1.0);
    Tensor gx;
    const Grads g = net.backward(cache, g_out, &gx);
    REQUIRE(g.size() == net.layers().size());

    // weight/bias probes across stem, blocks, and output
    for (std::size_t layer : {std::size_t{0}, std::size_t{1}, std::size_t{4},
                              std::size_t{8}, std::size_t{11}}) {
        const std::size_t wi = argmax_abs(g[layer].gw.v);
        CHECK(fd_grad_ok(g[layer].gw.v[wi], [&](double step) {
            return fd_param_grad(net, x, g_out, layer, wi, false, step);
        }));
    }
    for (std::size_t layer : {std::size_t{0}, std::size_t{5}, std::size_t{11}}) {
        const std::size_t bi = argmax_abs(g[layer].gb);
        CHECK(fd_grad_ok(g[layer].gb[bi], [&](double step) {
            return fd_param_grad(net, x, g_out, layer, bi, true, step);
        }));
    }

    // input gradient at its dominant entries
    auto obj = [&](const Tensor& xin) {
        const Tensor yy = net.forward(xin);
        double s = 0;
        for (std::size_t i = 0; i < yy.v.size(); ++i) s += yy.v[i] * g_out.v[i];
        return s;
    };
    for (std::size_t e : top3_abs(gx.v)) {
        CHECK(fd_grad_ok(gx.v[e], [&](double step) {
            return testutil::central_diff(obj, x, e, step);
        }));
    }
}

TEST_CASE("refiner has no dead parameters") {
    RefinerNet net;
    net.init_params(14);
    Rng rng(Rng::substream(74, "refiner-dead"));
    const Tensor x = random_image(rng, 2, 12, 16);
    RefinerNet::Cache cache;
    net.forward(x, &cache);
    Tensor g_out(2, 12, 16, 3, 1.0);
    const Grads g = net.backward(cache, g_out);
    for (std::size_t i = 0; i < g.size(); ++i) {
        bool any_w = false, any_b = false;
        for (double v : g[i].gw.v) any_w |= v != 0.0;
        for (double v : g[i].gb) any_b |= v != 0.0;
        INFO("layer ", net.layers()[i].name);
        CHECK(any_w);
        CHECK(any_b);
    }
}

TEST_CASE("discriminator emits a 2-channel probability map") {
    DiscriminatorNet net;
    net.init_params(21);
    Rng rng(Rng::substream(75, "disc-shape"));
    const Tensor x = random_image(rng, 2, 24, 32);
    const Tensor y = net.forward(x);
    CHECK(y.c == 2);
    for (int i = 0; i < y.n; ++i)
        for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx) {
                const double* row = y.row(i, yy, xx);
                CHECK(std::abs(row[0] + row[1] - 1.0) < 1e-6);
                CHECK(row[0] >= 0.0);
                CHECK(row[1] >= 0.0);
            }

    // duplicate image -> identical output rows
    Tensor two(2, 24, 32, 3);
    two.set_slice(0, x.slice(0));
    two.set_slice(1, x.slice(0));
    const Tensor y2 = net.forward(two);
    CHECK(y2.slice(0).v == y2.slice(1).v);
}

TEST_CASE("discriminator output dims for the full-scale input are frozen") {
    // stride walk for 80x160: conv s3 -> 27x54, conv s2 -> 14x27,
    // pool s2 -> 7x14, conv s2 -> 4x7, then two 1x1 convs
    DiscriminatorNet net;
    net.init_params(22);
    Tensor x(1, 80, 160, 3, 0.5);
    const Tensor y = net.forward(x);
    CHECK(y.h == 4);
    CHECK(y.w == 7);
    CHECK(y.c == 2);
}

TEST_CASE("disc_prob_real reduces the map to per-image scalars") {
    Tensor map(2, 2, 2, 2);
    for (int i = 0; i < 2; ++i)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) {
                const double p = i == 0 ? 1.0 : std::vector<double>{0.2, 0.4, 0.6, 0.8}[y * 2 + x];
                map.at(i, y, x, 1) = p;
                map.at(i, y, x, 0) = 1.0 - p;
            }
    const auto probs = disc_prob_real(map);
    CHECK(probs[0] == doctest::Approx(1.0));
    CHECK(probs[1] == doctest::Approx(0.5));

    Tensor half(1, 3, 3, 2, 0.5);
    CHECK(disc_prob_real(half)[0] == doctest::Approx(0.5));

    // adjoint identity: <vjp(gp), anything> behaves as d(sum gp_i * p_i)
    Rng rng(Rng::substream(76, "prob-vjp"));
    std::vector<double> gp = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const Tensor g = disc_prob_real_vjp(map, gp);
    for (std::size_t e = 0; e < map.v.size(); e += 3) {
        Tensor mp = map;
        mp.v[e] += 1e-5;
        Tensor mm = map;
        mm.v[e] -= 1e-5;
        const auto pp = disc_prob_real(mp);
        const auto pm = disc_prob_real(mm);
        const double fd =
            ((pp[0] - pm[0]) * gp[0] + (pp[1] - pm[1]) * gp[1]) / 2e-5;
        CHECK(std::abs(g.v[e] - fd) < 1e-6);
    }
}

TEST_CASE("discriminator gradients match finite differences") {
    DiscriminatorNet net;
    net.init_params(23);
    Rng rng(Rng::substream(77, "disc-grad"));
    const Tensor x = random_image(rng, 2, 12, 16);

    DiscriminatorNet::Cache cache;
    const Tensor y = net.forward(x, &cache);
    Tensor g_out(y.n, y.h, y.w, y.c);
    for (double& v : g_out.v) v = rng.uniform(-1.0, 1.0);
    Tensor gx;
    const Grads g = net.backward(cache, g_out, &gx);

    for (std::size_t layer = 0; layer < 5; ++layer) {
        const std::size_t wi = argmax_abs(g[layer].gw.v);
        CHECK(fd_grad_ok(g[layer].gw.v[wi], [&](double step) {
            return fd_param_grad(net, x, g_out, layer, wi, false, step);
        }));
    }
    const std::size_t bi = argmax_abs(g[4].gb);
    CHECK(fd_grad_ok(g[4].gb[bi], [&](double step) {
        return fd_param_grad(net, x, g_out, 4, bi, true, step);
    }));

    auto obj = [&](const Tensor& xin) {
        const Tensor yy = net.forward(xin);
        double s = 0;
        for (std::size_t i = 0; i < yy.v.size(); ++i) s += yy.v[i] * g_out.v[i];
        return s;
    };
    for (std::size_t e : top3_abs(gx.v)) {
        CHECK(fd_grad_ok(gx.v[e], [&](double step) {
            return testutil::central_diff(obj, x, e, step);
        }));
    }
}

TEST_CASE("discriminator has no dead parameters") {
    DiscriminatorNet net;
    net.init_params(24);
    Rng rng(Rng::substream(78, "disc-dead"));
    const Tensor x = random_image(rng, 2, 24, 48);
    DiscriminatorNet::Cache cache;
    const Tensor y = net.forward(x, &cache);
    // all-ones upstream dies in softmax (channel sums are constant), so
    // push on the real channel only, like the losses do
    Tensor g_out(y.n, y.h, y.w, 2);
    for (int i = 0; i < y.n; ++i)
        for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx) g_out.at(i, yy, xx, 1) = 1.0;
    const Grads g = net.backward(cache, g_out);
    for (std::size_t i = 0; i < g.size(); ++i) {
        bool any_w = false, any_b = false;
        for (double v : g[i].gw.v) any_w |= v != 0.0;
        for (double v : g[i].gb) any_b |= v != 0.0;
        INFO("layer ", net.layers()[i].name);
        CHECK(any_w);
        CHECK(any_b);
    }
}

TEST_CASE("seg net shape contract and argmax") {
    SegNet net(3, 4, 4);
    net.init_params(31);
    Rng rng(Rng::substream(79, "seg-shape"));
    const Tensor x = random_image(rng, 2, 16, 16);
    const Tensor scores = net.forward(x);
    CHECK(scores.n == 2);
    CHECK(scores.h == 16);
    CHECK(scores.w == 16);
    CHECK(scores.c == 4);

    const LabelMap pred = argmax_map(scores);
    CHECK(pred.num_classes == 4);
    validate_label_map(pred);

    Tensor odd(1, 18, 16, 3, 0.5);
    CHECK_THROWS_WITH_AS(net.forward(odd), doctest::Contains("divisible"), DataError);
}

TEST_CASE("argmax_map picks the max channel, lowest index on ties") {
    Tensor s(1, 1, 2, 3);
    s.v = {0.1, 0.9, 0.3, /* tie: */ 0.5, 0.2, 0.5};
    const LabelMap m = argmax_map(s);
    CHECK(m.at(0, 0, 0) == 1);
    CHECK(m.at(0, 0, 1) == 0);
}

TEST_CASE("seg net gradients match finite differences") {
    SegNet net(3, 3, 4);
    net.init_params(32);
    Rng rng(Rng::substream(80, "seg-grad"));
    const Tensor x = random_image(rng, 1, 16, 16);

    SegNet::Cache cache;
    const Tensor y = net.forward(x, &cache);
    Tensor g_out(y.n, y.h, y.w, y.c);
    for (double& v : g_out.v) v = rng.uniform(-1.0, 1.0);
    Tensor gx;
    const Grads g = net.backward(cache, g_out, &gx);
    REQUIRE(g.size() == net.layers().size());

    for (std::size_t layer : {std::size_t{0}, std::size_t{3}, std::size_t{5},
                              std::size_t{6}, std::size_t{10}}) {
        const std::size_t wi = argmax_abs(g[layer].gw.v);
        CHECK(fd_grad_ok(g[layer].gw.v[wi], [&](double step) {
            return fd_param_grad(net, x, g_out, layer, wi, false, step);
        }));
    }
    for (std::size_t layer : {std::size_t{2}, std::size_t{10}}) {
        const std::size_t bi = argmax_abs(g[layer].gb);
        CHECK(fd_grad_ok(g[layer].gb[bi], [&](double step) {
            return fd_param_grad(net, x, g_out, layer, bi, true, step);
        }));
    }

    auto obj = [&](const Tensor& xin) {
        const Tensor yy = net.forward(xin);
        double s = 0;
        for (std::size_t i = 0; i < yy.v.size(); ++i) s += yy.v[i] * g_out.v[i];
        return s;
    };
    for (std::size_t e : top3_abs(gx.v)) {
        CHECK(fd_grad_ok(gx.v[e], [&](double step) {
            return testutil::central_diff(obj, x, e, step);
        }));
    }
}

TEST_CASE("seg net has no dead parameters") {
    SegNet net(3, 4, 4);
    net.init_params(35);
    Rng rng(Rng::substream(81, "seg-dead"));
    const Tensor x = random_image(rng, 2, 16, 16);
    SegNet::Cache cache;
    const Tensor y = net.forward(x, &cache);
    Tensor g_out(y.n, y.h, y.w, y.c);
    for (double& v : g_out.v) v = rng.uniform(-1.0, 1.0);
    const Grads g = net.backward(cache, g_out);
    for (std::size_t i = 0; i < g.size(); ++i) {
        bool any_w = false, any_b = false;
        for (double v : g[i].gw.v) any_w |= v != 0.0;
        for (double v : g[i].gb) any_b |= v != 0.0;
        INFO("layer ", net.layers()[i].name);
        CHECK(any_w);
        CHECK(any_b);
    }
}

TEST_CASE("parameter records round-trip and reject mismatches") {
    RefinerNet a, b;
    a.init_params(40);
    b.init_params(41);
    CHECK(param_hash(a.params()) != param_hash(b.params()));

    b.set_params(a.params());
    CHECK(param_hash(b.params()) == param_hash(a.params()));
    Rng rng(Rng::substream(82, "record"));
    const Tensor x = random_image(rng, 1, 12, 16);
    CHECK(a.forward(x).v == b.forward(x).v);

    ParamRecord rec = a.params();
    rec[0].name = "wrong.w";
    CHECK_THROWS_WITH_AS(b.set_params(rec), doctest::Contains("name mismatch"),
                         DataError);
    rec = a.params();
    rec[2].data.pop_back();
    CHECK_THROWS_WITH_AS(b.set_params(rec), doctest::Contains("size mismatch"),
                         DataError);
    rec = a.params();
    rec.pop_back();
    CHECK_THROWS_AS(b.set_params(rec), DataError);
}

TEST_CASE("sgd_step applies w -= lr * g") {
    SegNet net(3, 3, 2);
    net.init_params(50);
    const double w0 = net.layers()[0].w.v[0];
    const double b0 = net.layers()[0].b[0];

    Grads g(net.layers().size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i].gw = Tensor(net.layers()[i].w.n, net.layers()[i].w.h,
                         net.layers()[i].w.w, net.layers()[i].w.c);
        g[i].gb.assign(net.layers()[i].b.size(), 0.0);
    }
    g[0].gw.v[0] = 2.0;
    g[0].gb[0] = -3.0;
    sgd_step(net.layers(), g, 0.1);
    CHECK(net.layers()[0].w.v[0] == doctest::Approx(w0 - 0.2));
    CHECK(net.layers()[0].b[0] == doctest::Approx(b0 + 0.3));

    g.pop_back();
    CHECK_THROWS_AS(sgd_step(net.layers(), g, 0.1), RuntimeFault);
}
