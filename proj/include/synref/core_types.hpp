#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synref/errors.hpp"

namespace synref {

/// Every hyperparameter of the training recipe in one validated record.
/// Defaults are the published full-scale values.
struct TrainConfig {
    double alpha = 50.0;
    double beta = 4e-6;
    double refiner_lr = 1e-4;
    double disc_lr = 1e-3;
    int refiner_pretrain_steps = 1200;
    int disc_pretrain_steps = 400;
    int full_train_steps = 5000;
    int refiner_updates_per_step = 2;
    int disc_updates_per_step = 1;
    int batch_size = 4;
    int history_capacity = 512;
    double history_fraction = 0.5;
    long seed = 0;
    std::string perceptual_layer = "default";
    int image_height = 80;
    int image_width = 160;
};

/// Throws ConfigError naming the first violated field; returns cfg unchanged
/// otherwise.
TrainConfig validate_config(const TrainConfig& cfg);

struct StepLog {
    int step = 0;
    double refiner_loss = 0.0;
    double disc_loss_real = 0.0;
    double disc_loss_refined = 0.0;
    std::optional<double> ssim_vs_real;
    std::optional<double> fid_vs_real;
};

struct NamedArray {
    std::string name;
    std::vector<double> data;
};

/// Ordered list of named flat arrays; the interchange form for network
/// parameters.
using ParamRecord = std::vector<NamedArray>;

std::size_t param_count(const ParamRecord& rec);
/// FNV-1a over the raw bytes of every array, order-sensitive. Used for
/// freeze-contract assertions and checkpoint metadata.
std::uint64_t param_hash(const ParamRecord& rec);

struct Checkpoint {
    ParamRecord refiner_params;
    ParamRecord disc_params;
    long step = 0;
    std::vector<StepLog> loss_log;
    std::uint64_t config_hash = 0;
};

/// Versioned binary container; parameters round-trip bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Loss-log CSV: header `step,refiner_loss,disc_loss_real,disc_loss_refined,
/// ssim,fid`, one row per step, empty cells for unevaluated metrics, %.17g
/// so values survive the round-trip exactly.
void save_step_logs(const std::vector<StepLog>& logs, const std::string& path);
std::vector<StepLog> load_step_logs(const std::string& path);

enum class GapKind { flat_vs_textured };

struct ToySceneSpec {
    int num_images = 64;
    int height = 12;
    int width = 16;
    int num_classes = 4;
    long seed = 0;
    GapKind gap_kind = GapKind::flat_vs_textured;
};

struct DataConfig {
    std::string kind = "toy";  // "toy" | "dirs"
    ToySceneSpec toy;
    std::string synthetic_dir;
    std::string real_dir;
    bool has_labels = true;
};

struct SegConfig {
    int steps = 300;
    double lr = 0.05;
    int batch_size = 4;
    int base_channels = 8;
    int test_size = 32;
};

/// Full run configuration: the flat-file keys are TrainConfig field names
/// plus the documented extras; `data.*`, `seg.*` address the sections.
struct RunConfig {
    TrainConfig train;
    DataConfig data;
    SegConfig seg;

    std::string extractor_backend = "toy";  // "toy" | "pretrained_inception"
    std::string inception_weights_path;
    bool allow_toy_fallback = true;

    int eval_every = 100;
    int ckpt_every = 100;
    int smooth_window = 5;
    bool skip_perceptual_pretrain = false;
    bool eval_fid = true;
};

/// Parses `key = value` lines (# comments, blank lines allowed). Unknown
/// keys and malformed values raise ConfigError naming the key.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::string& path, RunConfig base = {});
/// Applies `key=value` override strings on top of cfg (last wins).
RunConfig apply_overrides(RunConfig cfg, const std::vector<std::string>& overrides);

/// Canonical text form: every key in declaration order, parseable by
/// parse_config_text. Basis of the manifest snapshot and config_hash.
std::string format_config(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

/// Shortest round-trippable decimal form (%.17g), shared by all CSV writers.
std::string fmt_double(double v);

}  // namespace synref
