#include "doctest.h"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "synref/losses.hpp"
#include "synref/metrics.hpp"
#include "synref/trainer.hpp"

using namespace synref;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config(long seed) {
    TrainConfig cfg;
    cfg.image_height = 12;
    cfg.image_width = 16;
    cfg.batch_size = 4;
    cfg.seed = seed;
    return cfg;
}

ToyDataset small_toy(int n, long seed) {
    ToySceneSpec spec;
    spec.num_images = n;
    spec.seed = seed;
    return make_toy_dataset(spec);
}

Tensor stack_range(const std::vector<Tensor>& images, int from, int count) {
    Tensor out(count, images[from].h, images[from].w, images[from].c);
    for (int i = 0; i < count; ++i) out.set_slice(i, images[from + i]);
    return out;
}

std::uint64_t refiner_hash(const TrainState& st) { return param_hash(st.refiner.params()); }
std::uint64_t disc_hash(const TrainState& st) { return param_hash(st.disc.params()); }

double mean_prob_real(const DiscriminatorNet& disc, const Tensor& batch) {
    const auto p = disc_prob_real(disc.forward(batch));
    return std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
}

double l1_distance(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) s += std::abs(a.v[i] - b.v[i]);
    return s / static_cast<double>(a.v.size());
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("synref_trainer_" + std::to_string(Rng(1234).next_u64() % 100000) + "_" +
                std::to_string(static_cast<long>(getpid())));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::vector<StepLog> make_logs(const std::vector<double>& refined,
                               const std::vector<double>& real) {
    std::vector<StepLog> logs(refined.size());
    for (std::size_t i = 0; i < refined.size(); ++i) {
        logs[i].step = static_cast<int>(i) + 1;
        logs[i].refiner_loss = 1.0;
        logs[i].disc_loss_refined = refined[i];
        logs[i].disc_loss_real = real[i];
    }
    return logs;
}

bool logs_identical(const std::vector<StepLog>& a, const std::vector<StepLog>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].step != b[i].step) return false;
        if (a[i].refiner_loss != b[i].refiner_loss) return false;
        if (a[i].disc_loss_real != b[i].disc_loss_real) return false;
        if (a[i].disc_loss_refined != b[i].disc_loss_refined) return false;
        if (a[i].ssim_vs_real != b[i].ssim_vs_real) return false;
        if (a[i].fid_vs_real != b[i].fid_vs_real) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("fresh state is seeded, empty, and validated") {
    const TrainConfig cfg = small_config(5);
    TrainState a = make_train_state(cfg);
    TrainState b = make_train_state(cfg);
    CHECK(refiner_hash(a) == refiner_hash(b));
    CHECK(disc_hash(a) == disc_hash(b));

    TrainConfig other = cfg;
    other.seed = 6;
    TrainState c = make_train_state(other);
    CHECK(refiner_hash(a) != refiner_hash(c));
    CHECK(disc_hash(a) != disc_hash(c));

    CHECK(a.step == 0);
    CHECK(a.logs.empty());
    CHECK(a.buffer.size() == 0);
    CHECK(a.buffer.capacity() == cfg.history_capacity);
    CHECK(a.refiner_updates == 0);
    CHECK(a.disc_updates == 0);
    CHECK(a.pretrain_refiner_updates == 0);
    CHECK(a.pretrain_disc_updates == 0);

    TrainConfig bad = cfg;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(make_train_state(bad), ConfigError);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(make_train_state(bad), ConfigError);
}

TEST_CASE("zero pretraining steps touch nothing") {
    const ToyDataset ds = small_toy(8, 7);
    TrainState st = make_train_state(small_config(3));
    const auto rh = refiner_hash(st);
    const auto dh = disc_hash(st);
    BatchIter syn(ds.synthetic.images, 4, 101);
    BatchIter real(ds.real.images, 4, 202);
    const FeatureExtractor psi = FeatureExtractor::toy();

    pretrain_refiner(st, syn, 0, psi);
    pretrain_discriminator(st, syn, real, 0);
    CHECK(refiner_hash(st) == rh);
    CHECK(disc_hash(st) == dh);
    CHECK(st.pretrain_refiner_updates == 0);
    CHECK(st.pretrain_disc_updates == 0);
}

TEST_CASE("reconstruction pretraining reduces held-out error") {
    const ToyDataset ds = small_toy(24, 7);
    std::vector<Tensor> train_pool(ds.synthetic.images.begin(),
                                   ds.synthetic.images.begin() + 16);
    const Tensor held = stack_range(ds.synthetic.images, 16, 8);
    const FeatureExtractor psi = FeatureExtractor::toy();

    TrainState st = make_train_state(small_config(3));
    const auto dh = disc_hash(st);
    const double perc0 = perceptual_loss(st.refiner.forward(held), held, psi);
    const double l1_0 = l1_distance(st.refiner.forward(held), held);

    BatchIter syn(train_pool, 4, 101);
    pretrain_refiner(st, syn, 40, psi);

    CHECK(perceptual_loss(st.refiner.forward(held), held, psi) < perc0);
    CHECK(l1_distance(st.refiner.forward(held), held) < l1_0);
    CHECK(disc_hash(st) == dh);
    CHECK(st.pretrain_refiner_updates == 40);
    CHECK(st.refiner_updates == 0);
}

TEST_CASE("the two pretraining objectives walk different paths") {
    const ToyDataset ds = small_toy(16, 7);
    const FeatureExtractor psi = FeatureExtractor::toy();
    const Tensor held = stack_range(ds.synthetic.images, 8, 4);

    TrainState a = make_train_state(small_config(3));
    TrainState b = make_train_state(small_config(3));
    const auto init_hash = refiner_hash(a);
    const double l1_0 = l1_distance(b.refiner.forward(held), held);

    BatchIter syn_a(ds.synthetic.images, 4, 101);
    BatchIter syn_b(ds.synthetic.images, 4, 101);
    pretrain_refiner(a, syn_a, 6, psi, PretrainLoss::perceptual);
    pretrain_refiner(b, syn_b, 6, psi, PretrainLoss::self_reg);

    CHECK(refiner_hash(a) != init_hash);
    CHECK(refiner_hash(b) != init_hash);
    CHECK(refiner_hash(a) != refiner_hash(b));
    CHECK(l1_distance(b.refiner.forward(held), held) < l1_0);
}

TEST_CASE("discriminator warm-up separates real from refined") {
    const ToyDataset ds = small_toy(24, 7);
    TrainState st = make_train_state(small_config(3));
    const auto rh = refiner_hash(st);

    const Tensor held_syn = stack_range(ds.synthetic.images, 0, 8);
    const Tensor held_real = stack_range(ds.real.images, 8, 8);
    const Tensor refined = st.refiner.forward(held_syn);

    auto held_loss = [&] {
        return disc_loss(disc_prob_real(st.disc.forward(refined)),
                         disc_prob_real(st.disc.forward(held_real)));
    };
    const double loss0 = held_loss();

    BatchIter syn(ds.synthetic.images, 4, 101);
    BatchIter real(ds.real.images, 4, 202);
    pretrain_discriminator(st, syn, real, 100);

    CHECK(held_loss() < loss0);
    CHECK(mean_prob_real(st.disc, held_real) > mean_prob_real(st.disc, refined));
    CHECK(refiner_hash(st) == rh);
    CHECK(st.pretrain_disc_updates == 100);
    CHECK(st.disc_updates == 0);
}

TEST_CASE("full steps follow the update schedule and buffer law") {
    const ToyDataset ds = small_toy(16, 7);
    TrainState st = make_train_state(small_config(5));
    BatchIter syn(ds.synthetic.images, 4, 101);
    BatchIter real(ds.real.images, 4, 202);

    for (int s = 0; s < 10; ++s) full_train_step(st, syn, real);

    CHECK(st.step == 10);
    CHECK(st.refiner_updates == 20);
    CHECK(st.disc_updates == 10);
    CHECK(st.logs.size() == 10);
    CHECK(st.buffer.size() == 40);
    for (int i = 0; i < 10; ++i) {
        CHECK(st.logs[i].step == i + 1);
        CHECK(std::isfinite(st.logs[i].refiner_loss));
        CHECK(st.logs[i].refiner_loss > 0.0);
        CHECK(st.logs[i].disc_loss_real > 0.0);
        CHECK(st.logs[i].disc_loss_refined > 0.0);
        CHECK(!st.logs[i].ssim_vs_real.has_value());
        CHECK(!st.logs[i].fid_vs_real.has_value());
    }

    const Checkpoint ckpt = state_to_checkpoint(st, 0xabcdefULL);
    CHECK(ckpt.step == 10);
    CHECK(ckpt.loss_log.size() == 10);
    CHECK(ckpt.config_hash == 0xabcdefULL);
    CHECK(param_hash(ckpt.refiner_params) == refiner_hash(st));
    CHECK(param_hash(ckpt.disc_params) == disc_hash(st));

    // a full buffer evicts instead of growing
    TrainConfig capped = small_config(5);
    capped.history_capacity = 8;
    TrainState st2 = make_train_state(capped);
    BatchIter syn2(ds.synthetic.images, 4, 101);
    BatchIter real2(ds.real.images, 4, 202);
    for (int s = 0; s < 4; ++s) full_train_step(st2, syn2, real2);
    CHECK(st2.buffer.size() == 8);
}

TEST_CASE("each update freezes the opposing network") {
    const ToyDataset ds = small_toy(8, 7);
    TrainState st = make_train_state(small_config(3));
    const Tensor syn = stack_range(ds.synthetic.images, 0, 4);
    const Tensor real = stack_range(ds.real.images, 0, 4);

    const auto dh = disc_hash(st);
    const auto rh = refiner_hash(st);
    const double loss = refiner_update(st, syn);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
    CHECK(disc_hash(st) == dh);
    CHECK(refiner_hash(st) != rh);

    const auto rh2 = refiner_hash(st);
    const Tensor refined = st.refiner.forward(syn);
    double lr_refined = 0.0;
    double lr_real = 0.0;
    disc_update(st, refined, real, &lr_refined, &lr_real);
    CHECK(std::isfinite(lr_refined));
    CHECK(std::isfinite(lr_real));
    CHECK(lr_refined > 0.0);
    CHECK(lr_real > 0.0);
    CHECK(refiner_hash(st) == rh2);
    CHECK(disc_hash(st) != dh);
}

TEST_CASE("identical seeds reproduce the trace bit-exactly") {
    const ToyDataset ds = small_toy(16, 7);
    auto run = [&](long seed) {
        TrainState st = make_train_state(small_config(seed));
        BatchIter syn(ds.synthetic.images, 4, 101);
        BatchIter real(ds.real.images, 4, 202);
        for (int s = 0; s < 4; ++s) full_train_step(st, syn, real);
        return st;
    };
    const TrainState a = run(9);
    const TrainState b = run(9);
    const TrainState c = run(10);

    CHECK(logs_identical(a.logs, b.logs));
    CHECK(refiner_hash(a) == refiner_hash(b));
    CHECK(disc_hash(a) == disc_hash(b));
    CHECK(!logs_identical(a.logs, c.logs));
}

TEST_CASE("non-finite losses abort with a runtime fault") {
    const ToyDataset ds = small_toy(8, 7);
    TrainState st = make_train_state(small_config(3));
    // poison the output layer; earlier layers can hide a NaN behind a ReLU
    ParamRecord rec = st.refiner.params();
    rec.back().data[0] = std::numeric_limits<double>::quiet_NaN();
    st.refiner.set_params(rec);

    BatchIter syn(ds.synthetic.images, 4, 101);
    BatchIter real(ds.real.images, 4, 202);
    CHECK_THROWS_AS(full_train_step(st, syn, real), RuntimeFault);

    TrainState st2 = make_train_state(small_config(3));
    rec = st2.refiner.params();
    rec.back().data[0] = std::numeric_limits<double>::quiet_NaN();
    st2.refiner.set_params(rec);
    const FeatureExtractor psi = FeatureExtractor::toy();
    CHECK_THROWS_AS(pretrain_refiner(st2, syn, 1, psi), RuntimeFault);
}

TEST_CASE("checkpoint selection maximizes the smoothed gap") {
    // lone spike at 5 loses to the broad plateau around 18 once smoothed
    std::vector<double> refined(25, 0.6);
    std::vector<double> real(25, 0.6);
    refined[5] = 1.5;
    refined[16] = 0.85;
    refined[17] = 0.9;
    refined[18] = 0.9;
    refined[19] = 0.9;
    refined[20] = 0.85;
    CHECK(select_best_checkpoint(make_logs(refined, real), 5) == 18);
    // window 1 is the raw argmax
    CHECK(select_best_checkpoint(make_logs(refined, real), 1) == 5);

    // the criterion is the difference, not the refined series alone
    std::vector<double> r2(15, 0.7);
    std::vector<double> q2(15, 0.6);
    r2[4] = 1.2;
    q2[4] = 1.1;
    r2[10] = 1.0;
    q2[10] = 0.4;
    CHECK(select_best_checkpoint(make_logs(r2, q2), 1) == 10);

    // ties break toward the earliest step (dyadic values so the averages are exact)
    CHECK(select_best_checkpoint(make_logs(std::vector<double>(9, 0.75),
                                           std::vector<double>(9, 0.5)), 3) == 0);

    // edges average over the samples that exist
    std::vector<double> r3(10, 0.6);
    r3[0] = 1.0;
    CHECK(select_best_checkpoint(make_logs(r3, std::vector<double>(10, 0.1)), 3) == 0);

    CHECK_THROWS_AS(select_best_checkpoint({}, 5), DataError);
    CHECK_THROWS_AS(select_best_checkpoint(make_logs(r3, r3), 4), ConfigError);
    CHECK_THROWS_AS(select_best_checkpoint(make_logs(r3, r3), 0), ConfigError);
}

TEST_CASE("end-to-end run writes checkpoints, logs, and evaluations") {
    const ToyDataset ds = small_toy(16, 31);

    RunConfig cfg;
    cfg.train = small_config(21);
    cfg.train.refiner_pretrain_steps = 4;
    cfg.train.disc_pretrain_steps = 4;
    cfg.train.full_train_steps = 6;
    cfg.eval_every = 3;
    cfg.ckpt_every = 2;
    cfg.eval_fid = true;

    TempDir tmp;
    const std::string dir_a = (tmp.path / "a").string();
    const Checkpoint final_a = run_training(cfg, ds.synthetic.images, ds.real.images, dir_a);

    CHECK(fs::exists(fs::path(dir_a) / "ckpt_2.bin"));
    CHECK(fs::exists(fs::path(dir_a) / "ckpt_4.bin"));
    CHECK(fs::exists(fs::path(dir_a) / "ckpt_6.bin"));
    CHECK(fs::exists(fs::path(dir_a) / "loss_log.csv"));

    CHECK(final_a.step == 6);
    CHECK(final_a.config_hash == config_hash(cfg));
    CHECK(final_a.loss_log.size() == 6);
    for (int i = 0; i < 6; ++i) {
        const bool eval_step = (i + 1) % 3 == 0;
        CHECK(final_a.loss_log[i].ssim_vs_real.has_value() == eval_step);
        CHECK(final_a.loss_log[i].fid_vs_real.has_value() == eval_step);
        if (eval_step) {
            CHECK(*final_a.loss_log[i].ssim_vs_real > -1.0);
            CHECK(*final_a.loss_log[i].ssim_vs_real <= 1.0);
            CHECK(*final_a.loss_log[i].fid_vs_real >= 0.0);
        }
    }

    const Checkpoint disk = load_checkpoint((fs::path(dir_a) / "ckpt_6.bin").string());
    CHECK(disk.step == 6);
    CHECK(param_hash(disk.refiner_params) == param_hash(final_a.refiner_params));
    CHECK(param_hash(disk.disc_params) == param_hash(final_a.disc_params));
    CHECK(logs_identical(disk.loss_log, final_a.loss_log));

    const auto csv = load_step_logs((fs::path(dir_a) / "loss_log.csv").string());
    CHECK(logs_identical(csv, final_a.loss_log));

    // same config, fresh directory: identical run
    const Checkpoint final_b =
        run_training(cfg, ds.synthetic.images, ds.real.images, (tmp.path / "b").string());
    CHECK(param_hash(final_b.refiner_params) == param_hash(final_a.refiner_params));
    CHECK(param_hash(final_b.disc_params) == param_hash(final_a.disc_params));
    CHECK(logs_identical(final_b.loss_log, final_a.loss_log));

    // the ablation arm diverges
    RunConfig ablated = cfg;
    ablated.skip_perceptual_pretrain = true;
    const Checkpoint final_c =
        run_training(ablated, ds.synthetic.images, ds.real.images, (tmp.path / "c").string());
    CHECK(param_hash(final_c.refiner_params) != param_hash(final_a.refiner_params));

    CHECK_THROWS_AS(run_training(cfg, {}, ds.real.images, (tmp.path / "d").string()),
                    DataError);
}
