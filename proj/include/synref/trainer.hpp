#pragma once

#include <string>
#include <vector>

#include "synref/core_types.hpp"
#include "synref/data_pipeline.hpp"
#include "synref/feature_extractor.hpp"
#include "synref/history_buffer.hpp"
#include "synref/networks.hpp"

namespace synref {

/// Everything the training loop mutates, bundled so ops stay free functions.
struct TrainState {
    RefinerNet refiner;
    DiscriminatorNet disc;
    HistoryBuffer buffer;
    int step = 0;                 // completed full-training steps
    std::vector<StepLog> logs;    // one entry per completed full step
    TrainConfig cfg;
    long refiner_updates = 0;     // SGD updates applied during full steps
    long disc_updates = 0;
    long pretrain_refiner_updates = 0;
    long pretrain_disc_updates = 0;
};

/// Fresh nets and an empty history buffer, everything seeded from cfg.seed.
TrainState make_train_state(const TrainConfig& cfg);

enum class PretrainLoss { perceptual, self_reg };

/// One adversarial SGD step of the refiner against the frozen
/// discriminator: alpha * adversarial + beta * self-regularization
/// (identity feature map). Returns the combined loss.
double refiner_update(TrainState& state, const Tensor& synthetic);

/// One SGD step of the discriminator on refined-vs-real cross-entropy with
/// the refiner frozen. The two loss terms are written to the out-params.
void disc_update(TrainState& state, const Tensor& refined, const Tensor& real,
                 double* loss_refined, double* loss_real);

/// SGD on reconstruction of the input itself: perceptual loss through psi,
/// or the plain L1 self-regularization arm for comparison runs. The
/// discriminator is untouched.
void pretrain_refiner(TrainState& state, BatchIter& synthetic, int steps,
                      const FeatureExtractor& psi,
                      PretrainLoss kind = PretrainLoss::perceptual);

/// Discriminator warm-up against the current (frozen) refiner; no history
/// mixing, fresh refinements only.
void pretrain_discriminator(TrainState& state, BatchIter& synthetic,
                            BatchIter& real, int steps);

/// One full alternation: cfg.refiner_updates_per_step refiner updates, then
/// cfg.disc_updates_per_step discriminator updates on history-mixed batches,
/// then the newest refined batch enters the buffer and one StepLog is
/// appended. Throws RuntimeFault on a non-finite loss.
void full_train_step(TrainState& state, BatchIter& synthetic, BatchIter& real);

/// Index into logs of the smoothed argmax of
/// (disc_loss_refined - disc_loss_real); centered moving average, window
/// must be odd, ties break toward the earliest step.
int select_best_checkpoint(const std::vector<StepLog>& logs, int smooth_window = 5);

Checkpoint state_to_checkpoint(const TrainState& state, std::uint64_t cfg_hash);

/// Pretraining, the full adversarial loop, periodic SSIM/FID evaluation,
/// checkpoints at `ckpt_every` into out_dir (`ckpt_<step>.bin`), and the
/// loss-log CSV. On a non-finite loss the log is flushed and the last
/// written checkpoint stays in place. Returns the final checkpoint.
Checkpoint run_training(const RunConfig& cfg, const std::vector<Tensor>& synthetic,
                        const std::vector<Tensor>& real, const std::string& out_dir);

}  // namespace synref
