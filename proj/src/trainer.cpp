#include "synref/trainer.hpp"

#include <cmath>
#include <filesystem>

#include "synref/errors.hpp"
#include "synref/losses.hpp"
#include "synref/metrics.hpp"
#include "synref/rng.hpp"

namespace fs = std::filesystem;

namespace synref {

namespace {

std::uint64_t sub_seed(std::uint64_t seed, std::string_view name) {
    return Rng::substream(seed, name).next_u64();
}

const FeatureExtractor& identity_psi() {
    static const FeatureExtractor psi = FeatureExtractor::identity();
    return psi;
}

void add_grads(Grads& acc, const Grads& g) {
    for (std::size_t i = 0; i < acc.size(); ++i) {
        for (std::size_t j = 0; j < acc[i].gw.v.size(); ++j)
            acc[i].gw.v[j] += g[i].gw.v[j];
        for (std::size_t j = 0; j < acc[i].gb.size(); ++j)
            acc[i].gb[j] += g[i].gb[j];
    }
}

void check_finite(double loss, const char* what, int step) {
    if (!std::isfinite(loss))
        throw RuntimeFault(std::string("non-finite ") + what + " at step " +
                           std::to_string(step));
}

/// Stacks single-image tensors into one batch.
Tensor stack_images(const std::vector<Tensor>& images) {
    const Tensor& first = images.front();
    Tensor out(static_cast<int>(images.size()), first.h, first.w, first.c);
    for (std::size_t i = 0; i < images.size(); ++i)
        out.set_slice(static_cast<int>(i), images[i]);
    return out;
}

}  // namespace

TrainState make_train_state(const TrainConfig& cfg) {
    TrainState state;
    state.cfg = validate_config(cfg);
    const auto seed = static_cast<std::uint64_t>(cfg.seed);
    state.refiner.init_params(seed);
    state.disc.init_params(seed);
    state.buffer = HistoryBuffer(cfg.history_capacity, sub_seed(seed, "history"));
    return state;
}

double refiner_update(TrainState& state, const Tensor& synthetic) {
    RefinerNet::Cache rc;
    const Tensor refined = state.refiner.forward(synthetic, &rc);

    DiscriminatorNet::Cache dc;
    const Tensor prob_map = state.disc.forward(refined, &dc);
    const std::vector<double> p = disc_prob_real(prob_map);

    const double adv = adv_loss(p);
    const double rec = self_reg_loss(refined, synthetic, identity_psi());
    const double loss = refiner_loss(adv, rec, state.cfg.alpha, state.cfg.beta);

    const Tensor gmap = disc_prob_real_vjp(prob_map, adv_loss_grad(p));
    Tensor gy_adv;
    state.disc.backward(dc, gmap, &gy_adv);  // discriminator grads discarded
    const Tensor gy_reg = self_reg_loss_grad(refined, synthetic, identity_psi());

    Tensor gy = gy_adv;
    for (std::size_t e = 0; e < gy.v.size(); ++e)
        gy.v[e] = state.cfg.alpha * gy.v[e] + state.cfg.beta * gy_reg.v[e];

    const Grads g = state.refiner.backward(rc, gy);
    sgd_step(state.refiner.layers(), g, state.cfg.refiner_lr);
    return loss;
}

void disc_update(TrainState& state, const Tensor& refined, const Tensor& real,
                 double* loss_refined, double* loss_real) {
    DiscriminatorNet::Cache cr, cy;
    const Tensor pm_refined = state.disc.forward(refined, &cr);
    const Tensor pm_real = state.disc.forward(real, &cy);
    const std::vector<double> p = disc_prob_real(pm_refined);
    const std::vector<double> q = disc_prob_real(pm_real);

    if (loss_refined) *loss_refined = disc_loss(p, {});
    if (loss_real) *loss_real = disc_loss({}, q);

    Grads g = state.disc.backward(cr, disc_prob_real_vjp(pm_refined,
                                                         disc_loss_grad_refined(p)));
    add_grads(g, state.disc.backward(cy, disc_prob_real_vjp(pm_real,
                                                            disc_loss_grad_real(q))));
    sgd_step(state.disc.layers(), g, state.cfg.disc_lr);
}

void pretrain_refiner(TrainState& state, BatchIter& synthetic, int steps,
                      const FeatureExtractor& psi, PretrainLoss kind) {
    for (int t = 0; t < steps; ++t) {
        const Tensor x = synthetic.next();
        RefinerNet::Cache rc;
        const Tensor y = state.refiner.forward(x, &rc);

        double loss;
        Tensor gy;
        if (kind == PretrainLoss::perceptual) {
            loss = perceptual_loss(y, x, psi);
            gy = perceptual_loss_grad(y, x, psi);
        } else {
            loss = self_reg_loss(y, x, identity_psi());
            gy = self_reg_loss_grad(y, x, identity_psi());
        }
        check_finite(loss, "pretraining loss", t);

        const Grads g = state.refiner.backward(rc, gy);
        sgd_step(state.refiner.layers(), g, state.cfg.refiner_lr);
        ++state.pretrain_refiner_updates;
    }
}

void pretrain_discriminator(TrainState& state, BatchIter& synthetic,
                            BatchIter& real, int steps) {
    for (int t = 0; t < steps; ++t) {
        const Tensor refined = state.refiner.forward(synthetic.next());
        double l_refined = 0, l_real = 0;
        disc_update(state, refined, real.next(), &l_refined, &l_real);
        check_finite(l_refined + l_real, "discriminator pretraining loss", t);
        ++state.pretrain_disc_updates;
    }
}

void full_train_step(TrainState& state, BatchIter& synthetic, BatchIter& real) {
    double last_refiner_loss = 0.0;
    for (int k = 0; k < state.cfg.refiner_updates_per_step; ++k) {
        last_refiner_loss = refiner_update(state, synthetic.next());
        check_finite(last_refiner_loss, "refiner loss", state.step + 1);
        ++state.refiner_updates;
    }

    double l_refined = 0.0, l_real = 0.0;
    Tensor last_refined;
    for (int k = 0; k < state.cfg.disc_updates_per_step; ++k) {
        const Tensor refined = state.refiner.forward(synthetic.next());
        const Tensor mixed = state.buffer.sample_mixed(refined, state.cfg.history_fraction);
        disc_update(state, mixed, real.next(), &l_refined, &l_real);
        check_finite(l_refined + l_real, "discriminator loss", state.step + 1);
        ++state.disc_updates;
        last_refined = refined;
    }
    state.buffer.push(last_refined);

    ++state.step;
    StepLog log;
    log.step = state.step;
    log.refiner_loss = last_refiner_loss;
    log.disc_loss_real = l_real;
    log.disc_loss_refined = l_refined;
    state.logs.push_back(log);
}

namespace {

std::vector<double> smooth_series(const std::vector<double>& v, int window) {
    const int half = window / 2;
    const int n = static_cast<int>(v.size());
    std::vector<double> out(v.size());
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        double s = 0;
        for (int j = lo; j <= hi; ++j) s += v[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = s / (hi - lo + 1);
    }
    return out;
}

}  // namespace

int select_best_checkpoint(const std::vector<StepLog>& logs, int smooth_window) {
    if (logs.empty()) throw DataError("checkpoint selection over an empty loss log");
    if (smooth_window < 1 || smooth_window % 2 == 0)
        throw ConfigError("smooth_window must be odd and >= 1");

    std::vector<double> refined, real;
    refined.reserve(logs.size());
    real.reserve(logs.size());
    for (const StepLog& log : logs) {
        refined.push_back(log.disc_loss_refined);
        real.push_back(log.disc_loss_real);
    }
    const std::vector<double> sr = smooth_series(refined, smooth_window);
    const std::vector<double> sy = smooth_series(real, smooth_window);

    int best = 0;
    double best_val = sr[0] - sy[0];
    for (std::size_t i = 1; i < sr.size(); ++i) {
        const double val = sr[i] - sy[i];
        if (val > best_val) {
            best_val = val;
            best = static_cast<int>(i);
        }
    }
    return best;
}

Checkpoint state_to_checkpoint(const TrainState& state, std::uint64_t cfg_hash) {
    Checkpoint ckpt;
    ckpt.refiner_params = state.refiner.params();
    ckpt.disc_params = state.disc.params();
    ckpt.step = state.step;
    ckpt.loss_log = state.logs;
    ckpt.config_hash = cfg_hash;
    return ckpt;
}

Checkpoint run_training(const RunConfig& cfg, const std::vector<Tensor>& synthetic,
                        const std::vector<Tensor>& real, const std::string& out_dir) {
    const TrainConfig tc = validate_config(cfg.train);
    if (synthetic.empty() || real.empty())
        throw DataError("training needs non-empty synthetic and real sets");

    TrainState state = make_train_state(tc);
    const FeatureExtractor psi = FeatureExtractor::from_config(cfg);
    const auto seed = static_cast<std::uint64_t>(tc.seed);
    BatchIter syn_stream(synthetic, tc.batch_size, sub_seed(seed, "stream/synthetic"));
    BatchIter real_stream(real, tc.batch_size, sub_seed(seed, "stream/real"));

    pretrain_refiner(state, syn_stream, tc.refiner_pretrain_steps, psi,
                     cfg.skip_perceptual_pretrain ? PretrainLoss::self_reg
                                                  : PretrainLoss::perceptual);
    pretrain_discriminator(state, syn_stream, real_stream, tc.disc_pretrain_steps);

    fs::create_directories(out_dir);
    const std::uint64_t cfg_digest = config_hash(cfg);
    const std::uint64_t eval_seed = sub_seed(seed, "eval/ssim");
    const Tensor syn_stack = stack_images(synthetic);
    const Tensor real_stack = stack_images(real);

    const auto ckpt_path = [&](int step) {
        return (fs::path(out_dir) / ("ckpt_" + std::to_string(step) + ".bin")).string();
    };
    const auto flush_logs = [&] {
        save_step_logs(state.logs, (fs::path(out_dir) / "loss_log.csv").string());
    };

    int last_saved = -1;
    for (int s = 1; s <= tc.full_train_steps; ++s) {
        try {
            full_train_step(state, syn_stream, real_stream);
        } catch (const RuntimeFault&) {
            // keep whatever checkpoints already exist and the log so far
            flush_logs();
            throw;
        }
        if (cfg.eval_every > 0 && s % cfg.eval_every == 0) {
            const Tensor refined = state.refiner.forward(syn_stack);
            state.logs.back().ssim_vs_real = dataset_ssim(refined, real_stack, eval_seed);
            if (cfg.eval_fid)
                state.logs.back().fid_vs_real = fid(refined, real_stack, psi);
        }
        if (cfg.ckpt_every > 0 && s % cfg.ckpt_every == 0) {
            save_checkpoint(state_to_checkpoint(state, cfg_digest), ckpt_path(s));
            last_saved = s;
        }
    }

    const Checkpoint final_ckpt = state_to_checkpoint(state, cfg_digest);
    if (last_saved != state.step) save_checkpoint(final_ckpt, ckpt_path(state.step));
    flush_logs();
    return final_ckpt;
}

}  // namespace synref
