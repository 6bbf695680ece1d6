#include "doctest.h"

#include <cmath>

#include "synref/losses.hpp"
#include "synref/rng.hpp"
#include "test_util.hpp"

using namespace synref;
using testutil::central_diff;
using testutil::rel_err;

namespace {

Tensor random_image(Rng& rng, int n, int h, int w, int c, double lo = 0.05,
                    double hi = 0.95) {
    Tensor t(n, h, w, c);
    for (double& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("disc_loss hand oracles") {
    // perfect discriminator
    CHECK(disc_loss({0.0, 0.0}, {1.0, 1.0}) == doctest::Approx(0.0).epsilon(1e-6));
    // uniform 0.5 on one refined + one real
    CHECK(disc_loss({0.5}, {0.5}) ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
    // single real at 0.25, no refined term
    CHECK(disc_loss({}, {0.25}) ==
          doctest::Approx(-std::log(0.25)).epsilon(1e-9));
    // clamp keeps the value finite at the boundary
    CHECK(std::isfinite(disc_loss({1.0}, {0.0})));
    CHECK(disc_loss({1.0}, {}) == doctest::Approx(-std::log(kProbEps)).epsilon(1e-9));
}

TEST_CASE("adv_loss hand oracles") {
    CHECK(adv_loss({1.0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(adv_loss({0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    // p_synthetic = 1 - 1e-7, i.e. p_real = 1e-7
    CHECK(adv_loss({1e-7}) == doctest::Approx(16.11809565095832).epsilon(1e-9));
    // mean reduction
    CHECK(adv_loss({0.5, 1.0}) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("disc_loss relabeling symmetry") {
    Rng rng(Rng::substream(41, "relabel"));
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> p(5), q(3);
        for (double& v : p) v = rng.uniform(0.01, 0.99);
        for (double& v : q) v = rng.uniform(0.01, 0.99);
        std::vector<double> p2(q.size()), q2(p.size());
        for (std::size_t i = 0; i < q.size(); ++i) p2[i] = 1.0 - q[i];
        for (std::size_t i = 0; i < p.size(); ++i) q2[i] = 1.0 - p[i];
        CHECK(disc_loss(p, q) == doctest::Approx(disc_loss(p2, q2)).epsilon(1e-12));
    }
}

TEST_CASE("self_reg_loss hand oracles with identity map") {
    const FeatureExtractor id = FeatureExtractor::identity();
    Tensor syn(1, 2, 2, 3, 0.25);
    CHECK(self_reg_loss(syn, syn, id) == 0.0);

    Tensor ref = syn;
    for (double& v : ref.v) v += 0.1;
    CHECK(self_reg_loss(ref, syn, id) == doctest::Approx(1.2).epsilon(1e-9));

    // full-scale sanity for the beta magnitude: 80x160x3 at diff 0.1
    Tensor big_s(1, 80, 160, 3, 0.5);
    Tensor big_r = big_s;
    for (double& v : big_r.v) v += 0.1;
    const double raw = self_reg_loss(big_r, big_s, id);
    CHECK(raw == doctest::Approx(3840.0).epsilon(1e-9));
    CHECK(4e-6 * raw == doctest::Approx(0.01536).epsilon(1e-9));

    // mean over batch
    Tensor syn2(2, 2, 2, 3, 0.25);
    Tensor ref2 = syn2;
    for (std::size_t e = 0; e < 12; ++e) ref2.v[e] += 0.1;  // only image 0
    CHECK(self_reg_loss(ref2, syn2, id) == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("perceptual_loss hand oracles") {
    const FeatureExtractor id = FeatureExtractor::identity();
    Tensor syn(1, 2, 2, 1, 0.5);
    CHECK(perceptual_loss(syn, syn, id) == 0.0);

    Tensor ref = syn;
    for (double& v : ref.v) v += 1.0;
    CHECK(perceptual_loss(ref, syn, id) == doctest::Approx(1.0).epsilon(1e-9));

    // quadratic homogeneity
    Tensor ref2 = syn;
    for (double& v : ref2.v) v += 2.0;
    CHECK(perceptual_loss(ref2, syn, id) ==
          doctest::Approx(4.0 * perceptual_loss(ref, syn, id)).epsilon(1e-9));

    // symmetry
    Rng rng(Rng::substream(42, "perc-sym"));
    Tensor a = random_image(rng, 2, 4, 4, 3);
    Tensor b = random_image(rng, 2, 4, 4, 3);
    CHECK(perceptual_loss(a, b, id) == doctest::Approx(perceptual_loss(b, a, id)));
}

TEST_CASE("refiner_loss hand oracles") {
    CHECK(refiner_loss(0.6931, 1.2, 50.0, 4e-6) ==
          doctest::Approx(34.6550048).epsilon(1e-9));
    CHECK(refiner_loss(0.0, 0.0, 0.0, 0.0) == 0.0);
    CHECK(refiner_loss(1.0, 0.0, 50.0, 4e-6) == doctest::Approx(50.0));
}

TEST_CASE("losses are non-negative on random inputs") {
    Rng rng(Rng::substream(43, "nonneg"));
    const FeatureExtractor id = FeatureExtractor::identity();
    const FeatureExtractor toy = FeatureExtractor::toy();
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> p(4), q(4);
        for (double& v : p) v = rng.uniform(0.0, 1.0);
        for (double& v : q) v = rng.uniform(0.0, 1.0);
        CHECK(disc_loss(p, q) >= 0.0);
        CHECK(adv_loss(p) >= 0.0);
        Tensor a = random_image(rng, 2, 8, 8, 3);
        Tensor b = random_image(rng, 2, 8, 8, 3);
        CHECK(self_reg_loss(a, b, id) >= 0.0);
        CHECK(perceptual_loss(a, b, toy) >= 0.0);
    }
}

TEST_CASE("probability-loss gradients match finite differences") {
    Rng rng(Rng::substream(44, "prob-grad"));
    std::vector<double> p(6), q(5);
    for (double& v : p) v = rng.uniform(0.05, 0.95);
    for (double& v : q) v = rng.uniform(0.05, 0.95);

    const auto gp = disc_loss_grad_refined(p);
    const auto gq = disc_loss_grad_real(q);
    const auto ga = adv_loss_grad(p);
    const double step = 1e-4;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto pp = p;
        pp[i] += step;
        auto pm = p;
        pm[i] -= step;
        const double fd = (disc_loss(pp, q) - disc_loss(pm, q)) / (2 * step);
        CHECK(rel_err(gp[i], fd) < 1e-3);
        const double fda = (adv_loss(pp) - adv_loss(pm)) / (2 * step);
        CHECK(rel_err(ga[i], fda) < 1e-3);
    }
    for (std::size_t j = 0; j < q.size(); ++j) {
        auto qp = q;
        qp[j] += step;
        auto qm = q;
        qm[j] -= step;
        const double fd = (disc_loss(p, qp) - disc_loss(p, qm)) / (2 * step);
        CHECK(rel_err(gq[j], fd) < 1e-3);
    }
}

TEST_CASE("image-loss gradients match finite differences") {
    Rng rng(Rng::substream(45, "img-grad"));
    const FeatureExtractor id = FeatureExtractor::identity();
    const FeatureExtractor toy = FeatureExtractor::toy();
    Tensor syn = random_image(rng, 2, 8, 8, 3);
    Tensor ref = random_image(rng, 2, 8, 8, 3);

    const Tensor g_sr = self_reg_loss_grad(ref, syn, id);
    const Tensor g_perc_id = perceptual_loss_grad(ref, syn, id);
    const Tensor g_perc_toy = perceptual_loss_grad(ref, syn, toy);

    for (std::size_t e = 3; e < ref.v.size(); e += 37) {
        const double fd_sr = central_diff(
            [&](const Tensor& r) { return self_reg_loss(r, syn, id); }, ref, e);
        CHECK(rel_err(g_sr.v[e], fd_sr) < 1e-3);
        const double fd_p = central_diff(
            [&](const Tensor& r) { return perceptual_loss(r, syn, id); }, ref, e);
        CHECK(rel_err(g_perc_id.v[e], fd_p) < 1e-3);
        const double fd_pt = central_diff(
            [&](const Tensor& r) { return perceptual_loss(r, syn, toy); }, ref, e);
        CHECK(rel_err(g_perc_toy.v[e], fd_pt) < 1e-3);
    }
}

TEST_CASE("loss inputs must agree in shape") {
    const FeatureExtractor id = FeatureExtractor::identity();
    Tensor a(1, 8, 8, 3, 0.5), b(1, 8, 9, 3, 0.5);
    CHECK_THROWS_AS(self_reg_loss(a, b, id), DataError);
    CHECK_THROWS_AS(perceptual_loss(a, b, id), DataError);
}
