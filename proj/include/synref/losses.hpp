#pragma once

#include <vector>

#include "synref/feature_extractor.hpp"
#include "synref/tensor.hpp"

namespace synref {

/// Clamp floor applied inside every log.
inline constexpr double kProbEps = 1e-7;

/// Two-class discriminator loss, refined images labeled "synthetic" and real
/// images labeled "real": mean_i(-log(1 - p_i)) + mean_j(-log(q_j)) where
/// p/q are the discriminator's real-class probabilities. An empty set
/// contributes zero.
double disc_loss(const std::vector<double>& prob_real_refined,
                 const std::vector<double>& prob_real_real);

/// Adversarial refiner reward: mean_i(-log(p_i)); decreases as the
/// discriminator assigns refined images to the real class.
double adv_loss(const std::vector<double>& prob_real_refined);

/// L1 distance in Ψ-space, summed over feature elements, mean over batch.
double self_reg_loss(const Tensor& refined, const Tensor& synthetic,
                     const FeatureExtractor& psi);

/// Squared feature distance per image, normalized by the feature-map element
/// count C·H·W, mean over batch.
double perceptual_loss(const Tensor& refined, const Tensor& synthetic,
                       const FeatureExtractor& psi);

double refiner_loss(double adv, double rec, double alpha, double beta);

// Gradients (same clamp semantics: clamped terms have zero gradient).
std::vector<double> disc_loss_grad_refined(const std::vector<double>& prob_real_refined);
std::vector<double> disc_loss_grad_real(const std::vector<double>& prob_real_real);
std::vector<double> adv_loss_grad(const std::vector<double>& prob_real_refined);
Tensor self_reg_loss_grad(const Tensor& refined, const Tensor& synthetic,
                          const FeatureExtractor& psi);
Tensor perceptual_loss_grad(const Tensor& refined, const Tensor& synthetic,
                            const FeatureExtractor& psi);

}  // namespace synref
