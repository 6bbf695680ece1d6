#include "synref/losses.hpp"

#include <algorithm>
#include <cmath>

#include "synref/errors.hpp"

namespace synref {

namespace {

double clamped(double v) { return std::clamp(v, kProbEps, 1.0); }

double mean_neg_log(const std::vector<double>& probs) {
    if (probs.empty()) return 0.0;
    double s = 0.0;
    for (double p : probs) s -= std::log(clamped(p));
    return s / static_cast<double>(probs.size());
}

void check_same_shape(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DataError("loss inputs differ in shape");
}

}  // namespace

double disc_loss(const std::vector<double>& prob_real_refined,
                 const std::vector<double>& prob_real_real) {
    std::vector<double> one_minus(prob_real_refined.size());
    for (std::size_t i = 0; i < one_minus.size(); ++i)
        one_minus[i] = 1.0 - prob_real_refined[i];
    return mean_neg_log(one_minus) + mean_neg_log(prob_real_real);
}

double adv_loss(const std::vector<double>& prob_real_refined) {
    return mean_neg_log(prob_real_refined);
}

double self_reg_loss(const Tensor& refined, const Tensor& synthetic,
                     const FeatureExtractor& psi) {
    check_same_shape(refined, synthetic);
    const Tensor fr = psi.features(refined);
    const Tensor fs = psi.features(synthetic);
    double total = 0.0;
    for (std::size_t e = 0; e < fr.v.size(); ++e)
        total += std::abs(fr.v[e] - fs.v[e]);
    return total / refined.n;
}

double perceptual_loss(const Tensor& refined, const Tensor& synthetic,
                       const FeatureExtractor& psi) {
    check_same_shape(refined, synthetic);
    const Tensor fr = psi.features(refined);
    const Tensor fs = psi.features(synthetic);
    const double norm = static_cast<double>(fr.h) * fr.w * fr.c;
    double total = 0.0;
    for (std::size_t e = 0; e < fr.v.size(); ++e) {
        const double d = fr.v[e] - fs.v[e];
        total += d * d;
    }
    return total / norm / refined.n;
}

double refiner_loss(double adv, double rec, double alpha, double beta) {
    return alpha * adv + beta * rec;
}

std::vector<double> disc_loss_grad_refined(const std::vector<double>& p) {
    std::vector<double> g(p.size(), 0.0);
    if (p.empty()) return g;
    const double inv_n = 1.0 / static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = 1.0 - p[i];
        if (q > kProbEps && q <= 1.0) g[i] = inv_n / q;
    }
    return g;
}

std::vector<double> disc_loss_grad_real(const std::vector<double>& q) {
    std::vector<double> g(q.size(), 0.0);
    if (q.empty()) return g;
    const double inv_n = 1.0 / static_cast<double>(q.size());
    for (std::size_t i = 0; i < q.size(); ++i)
        if (q[i] > kProbEps && q[i] <= 1.0) g[i] = -inv_n / q[i];
    return g;
}

std::vector<double> adv_loss_grad(const std::vector<double>& p) {
    return disc_loss_grad_real(p);
}

Tensor self_reg_loss_grad(const Tensor& refined, const Tensor& synthetic,
                          const FeatureExtractor& psi) {
    check_same_shape(refined, synthetic);
    const Tensor fr = psi.features(refined);
    const Tensor fs = psi.features(synthetic);
    Tensor gf(fr.n, fr.h, fr.w, fr.c);
    const double inv_n = 1.0 / refined.n;
    for (std::size_t e = 0; e < fr.v.size(); ++e) {
        const double d = fr.v[e] - fs.v[e];
        gf.v[e] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
    }
    return psi.features_vjp(refined, gf);
}

Tensor perceptual_loss_grad(const Tensor& refined, const Tensor& synthetic,
                            const FeatureExtractor& psi) {
    check_same_shape(refined, synthetic);
    const Tensor fr = psi.features(refined);
    const Tensor fs = psi.features(synthetic);
    const double norm = static_cast<double>(fr.h) * fr.w * fr.c;
    Tensor gf(fr.n, fr.h, fr.w, fr.c);
    const double scale = 2.0 / norm / refined.n;
    for (std::size_t e = 0; e < fr.v.size(); ++e)
        gf.v[e] = scale * (fr.v[e] - fs.v[e]);
    return psi.features_vjp(refined, gf);
}

}  // namespace synref
