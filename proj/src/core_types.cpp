#include "synref/core_types.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

namespace synref {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

}  // namespace

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

TrainConfig validate_config(const TrainConfig& cfg) {
    auto fail = [](const char* msg) { throw ConfigError(msg); };
    if (!(cfg.alpha > 0)) fail("alpha must be > 0");
    if (!(cfg.beta >= 0)) fail("beta must be >= 0");
    if (!(cfg.refiner_lr > 0)) fail("refiner_lr must be > 0");
    if (!(cfg.disc_lr > 0)) fail("disc_lr must be > 0");
    if (cfg.refiner_pretrain_steps < 0) fail("refiner_pretrain_steps must be >= 0");
    if (cfg.disc_pretrain_steps < 0) fail("disc_pretrain_steps must be >= 0");
    if (cfg.full_train_steps < 0) fail("full_train_steps must be >= 0");
    if (cfg.refiner_updates_per_step < 1) fail("refiner_updates_per_step must be >= 1");
    if (cfg.disc_updates_per_step < 1) fail("disc_updates_per_step must be >= 1");
    if (cfg.batch_size < 1) fail("batch_size must be >= 1");
    if (cfg.history_capacity < 0) fail("history_capacity must be >= 0");
    if (!(cfg.history_fraction >= 0.0 && cfg.history_fraction <= 1.0))
        fail("history_fraction must be in [0,1]");
    if (cfg.image_height < 8) fail("image_height must be >= 8");
    if (cfg.image_width < 8) fail("image_width must be >= 8");
    return cfg;
}

std::size_t param_count(const ParamRecord& rec) {
    std::size_t n = 0;
    for (const auto& a : rec) n += a.data.size();
    return n;
}

std::uint64_t param_hash(const ParamRecord& rec) {
    std::uint64_t h = kFnvOffset;
    for (const auto& a : rec) {
        h = fnv1a(h, a.name.data(), a.name.size());
        h = fnv1a(h, a.data.data(), a.data.size() * sizeof(double));
    }
    return h;
}

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
    put_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw DataError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

void put_params(std::ostream& os, const ParamRecord& rec) {
    put_u64(os, rec.size());
    for (const auto& a : rec) {
        put_u64(os, a.name.size());
        os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        put_u64(os, a.data.size());
        for (double v : a.data) put_f64(os, v);
    }
}

ParamRecord get_params(std::istream& is) {
    ParamRecord rec(get_u64(is));
    for (auto& a : rec) {
        std::string name(get_u64(is), '\0');
        if (name.size() > (1u << 20)) throw DataError("checkpoint: absurd name length");
        if (!is.read(name.data(), static_cast<std::streamsize>(name.size())))
            throw DataError("checkpoint truncated");
        a.name = std::move(name);
        a.data.resize(get_u64(is));
        for (double& v : a.data) v = get_f64(is);
    }
    return rec;
}

constexpr char kCkptMagic[4] = {'S', 'R', 'C', 'K'};
constexpr unsigned char kCkptVersion = 1;

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write(kCkptMagic, 4);
    os.put(static_cast<char>(kCkptVersion));
    put_u64(os, ckpt.config_hash);
    put_u64(os, static_cast<std::uint64_t>(ckpt.step));
    put_u64(os, ckpt.loss_log.size());
    for (const auto& l : ckpt.loss_log) {
        put_u64(os, static_cast<std::uint64_t>(l.step));
        put_f64(os, l.refiner_loss);
        put_f64(os, l.disc_loss_real);
        put_f64(os, l.disc_loss_refined);
        os.put(l.ssim_vs_real ? 1 : 0);
        put_f64(os, l.ssim_vs_real.value_or(0.0));
        os.put(l.fid_vs_real ? 1 : 0);
        put_f64(os, l.fid_vs_real.value_or(0.0));
    }
    put_params(os, ckpt.refiner_params);
    put_params(os, ckpt.disc_params);
    if (!os) throw DataError("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw DataError("not a checkpoint file: " + path);
    const int version = is.get();
    if (version != kCkptVersion)
        throw DataError("checkpoint format version mismatch in " + path +
                        " (got " + std::to_string(version) + ", want " +
                        std::to_string(kCkptVersion) + ")");
    Checkpoint ckpt;
    ckpt.config_hash = get_u64(is);
    ckpt.step = static_cast<long>(get_u64(is));
    ckpt.loss_log.resize(get_u64(is));
    for (auto& l : ckpt.loss_log) {
        l.step = static_cast<int>(get_u64(is));
        l.refiner_loss = get_f64(is);
        l.disc_loss_real = get_f64(is);
        l.disc_loss_refined = get_f64(is);
        const int has_ssim = is.get();
        const double ssim = get_f64(is);
        if (has_ssim == 1) l.ssim_vs_real = ssim;
        const int has_fid = is.get();
        const double fid = get_f64(is);
        if (has_fid == 1) l.fid_vs_real = fid;
        if (has_ssim < 0 || has_fid < 0) throw DataError("checkpoint truncated");
    }
    ckpt.refiner_params = get_params(is);
    ckpt.disc_params = get_params(is);
    return ckpt;
}

void save_step_logs(const std::vector<StepLog>& logs, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open log CSV for writing: " + path);
    os << "step,refiner_loss,disc_loss_real,disc_loss_refined,ssim,fid\n";
    for (const auto& l : logs) {
        os << l.step << ',' << fmt_double(l.refiner_loss) << ','
           << fmt_double(l.disc_loss_real) << ',' << fmt_double(l.disc_loss_refined)
           << ',' << (l.ssim_vs_real ? fmt_double(*l.ssim_vs_real) : "") << ','
           << (l.fid_vs_real ? fmt_double(*l.fid_vs_real) : "") << '\n';
    }
    if (!os) throw DataError("write failure on log CSV: " + path);
}

std::vector<StepLog> load_step_logs(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open log CSV: " + path);
    std::string line;
    if (!std::getline(is, line) ||
        line != "step,refiner_loss,disc_loss_real,disc_loss_refined,ssim,fid")
        throw DataError("unrecognized log CSV header in " + path);
    std::vector<StepLog> logs;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const auto pos = line.find(',', start);
            cells.push_back(line.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (cells.size() != 6)
            throw DataError("malformed log CSV row in " + path + ": " + line);
        StepLog l;
        l.step = std::stoi(cells[0]);
        l.refiner_loss = std::stod(cells[1]);
        l.disc_loss_real = std::stod(cells[2]);
        l.disc_loss_refined = std::stod(cells[3]);
        if (!cells[4].empty()) l.ssim_vs_real = std::stod(cells[4]);
        if (!cells[5].empty()) l.fid_vs_real = std::stod(cells[5]);
        logs.push_back(l);
    }
    return logs;
}

namespace {

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
    }
    if (used != v.size())
        throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
    return out;
}

long parse_long(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long out;
    try {
        out = std::stol(v, &used);
    } catch (const std::exception&) {
        throw ConfigError("bad integer value for " + key + ": '" + v + "'");
    }
    if (used != v.size())
        throw ConfigError("bad integer value for " + key + ": '" + v + "'");
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    return static_cast<int>(parse_long(key, v));
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean value for " + key + ": '" + v + "'");
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto d = [&](const char* key, double TrainConfig::* f) {
            t[key] = [f](RunConfig& c, const std::string& k, const std::string& v) {
                c.train.*f = parse_double(k, v);
            };
        };
        auto i = [&](const char* key, int TrainConfig::* f) {
            t[key] = [f](RunConfig& c, const std::string& k, const std::string& v) {
                c.train.*f = parse_int(k, v);
            };
        };
        d("alpha", &TrainConfig::alpha);
        d("beta", &TrainConfig::beta);
        d("refiner_lr", &TrainConfig::refiner_lr);
        d("disc_lr", &TrainConfig::disc_lr);
        i("refiner_pretrain_steps", &TrainConfig::refiner_pretrain_steps);
        i("disc_pretrain_steps", &TrainConfig::disc_pretrain_steps);
        i("full_train_steps", &TrainConfig::full_train_steps);
        i("refiner_updates_per_step", &TrainConfig::refiner_updates_per_step);
        i("disc_updates_per_step", &TrainConfig::disc_updates_per_step);
        i("batch_size", &TrainConfig::batch_size);
        i("history_capacity", &TrainConfig::history_capacity);
        d("history_fraction", &TrainConfig::history_fraction);
        t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.seed = parse_long(k, v);
        };
        t["perceptual_layer"] = [](RunConfig& c, const std::string&,
                                   const std::string& v) {
            c.train.perceptual_layer = v;
        };
        i("image_height", &TrainConfig::image_height);
        i("image_width", &TrainConfig::image_width);

        t["extractor_backend"] = [](RunConfig& c, const std::string& k,
                                    const std::string& v) {
            if (v != "toy" && v != "pretrained_inception")
                throw ConfigError("bad value for " + k + ": '" + v + "'");
            c.extractor_backend = v;
        };
        t["inception_weights_path"] = [](RunConfig& c, const std::string&,
                                         const std::string& v) {
            c.inception_weights_path = v;
        };
        t["allow_toy_fallback"] = [](RunConfig& c, const std::string& k,
                                     const std::string& v) {
            c.allow_toy_fallback = parse_bool(k, v);
        };
        t["eval_every"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.eval_every = parse_int(k, v);
        };
        t["ckpt_every"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.ckpt_every = parse_int(k, v);
        };
        t["smooth_window"] = [](RunConfig& c, const std::string& k,
                                const std::string& v) {
            c.smooth_window = parse_int(k, v);
        };
        t["skip_perceptual_pretrain"] = [](RunConfig& c, const std::string& k,
                                           const std::string& v) {
            c.skip_perceptual_pretrain = parse_bool(k, v);
        };
        t["eval_fid"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.eval_fid = parse_bool(k, v);
        };

        t["data.kind"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v != "toy" && v != "dirs")
                throw ConfigError("bad value for " + k + ": '" + v + "'");
            c.data.kind = v;
        };
        t["data.synthetic_dir"] = [](RunConfig& c, const std::string&,
                                     const std::string& v) { c.data.synthetic_dir = v; };
        t["data.real_dir"] = [](RunConfig& c, const std::string&,
                                const std::string& v) { c.data.real_dir = v; };
        t["data.has_labels"] = [](RunConfig& c, const std::string& k,
                                  const std::string& v) {
            c.data.has_labels = parse_bool(k, v);
        };
        t["data.toy_images"] = [](RunConfig& c, const std::string& k,
                                  const std::string& v) {
            c.data.toy.num_images = parse_int(k, v);
        };
        t["data.toy_height"] = [](RunConfig& c, const std::string& k,
                                  const std::string& v) {
            c.data.toy.height = parse_int(k, v);
        };
        t["data.toy_width"] = [](RunConfig& c, const std::string& k,
                                 const std::string& v) {
            c.data.toy.width = parse_int(k, v);
        };
        t["data.toy_classes"] = [](RunConfig& c, const std::string& k,
                                   const std::string& v) {
            c.data.toy.num_classes = parse_int(k, v);
        };
        t["data.toy_seed"] = [](RunConfig& c, const std::string& k,
                                const std::string& v) {
            c.data.toy.seed = parse_long(k, v);
        };
        t["data.gap_kind"] = [](RunConfig& c, const std::string& k,
                                const std::string& v) {
            if (v != "flat_vs_textured")
                throw ConfigError("bad value for " + k + ": '" + v + "'");
            c.data.toy.gap_kind = GapKind::flat_vs_textured;
        };

        t["seg.steps"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.seg.steps = parse_int(k, v);
        };
        t["seg.lr"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.seg.lr = parse_double(k, v);
        };
        t["seg.batch_size"] = [](RunConfig& c, const std::string& k,
                                 const std::string& v) {
            c.seg.batch_size = parse_int(k, v);
        };
        t["seg.base_channels"] = [](RunConfig& c, const std::string& k,
                                    const std::string& v) {
            c.seg.base_channels = parse_int(k, v);
        };
        t["seg.test_size"] = [](RunConfig& c, const std::string& k,
                                const std::string& v) {
            c.seg.test_size = parse_int(k, v);
        };
        return t;
    }();
    return table;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key: " + key);
    it->second(cfg, key, value);
}

}  // namespace

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              " is not 'key = value': " + line);
        apply_kv(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

RunConfig apply_overrides(RunConfig cfg, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override is not key=value: " + ov);
        apply_kv(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
    }
    return cfg;
}

std::string format_config(const RunConfig& c) {
    std::ostringstream os;
    os << "alpha = " << fmt_double(c.train.alpha) << '\n';
    os << "beta = " << fmt_double(c.train.beta) << '\n';
    os << "refiner_lr = " << fmt_double(c.train.refiner_lr) << '\n';
    os << "disc_lr = " << fmt_double(c.train.disc_lr) << '\n';
    os << "refiner_pretrain_steps = " << c.train.refiner_pretrain_steps << '\n';
    os << "disc_pretrain_steps = " << c.train.disc_pretrain_steps << '\n';
    os << "full_train_steps = " << c.train.full_train_steps << '\n';
    os << "refiner_updates_per_step = " << c.train.refiner_updates_per_step << '\n';
    os << "disc_updates_per_step = " << c.train.disc_updates_per_step << '\n';
    os << "batch_size = " << c.train.batch_size << '\n';
    os << "history_capacity = " << c.train.history_capacity << '\n';
    os << "history_fraction = " << fmt_double(c.train.history_fraction) << '\n';
    os << "seed = " << c.train.seed << '\n';
    os << "perceptual_layer = " << c.train.perceptual_layer << '\n';
    os << "image_height = " << c.train.image_height << '\n';
    os << "image_width = " << c.train.image_width << '\n';
    os << "extractor_backend = " << c.extractor_backend << '\n';
    os << "inception_weights_path = " << c.inception_weights_path << '\n';
    os << "allow_toy_fallback = " << (c.allow_toy_fallback ? "true" : "false") << '\n';
    os << "eval_every = " << c.eval_every << '\n';
    os << "ckpt_every = " << c.ckpt_every << '\n';
    os << "smooth_window = " << c.smooth_window << '\n';
    os << "skip_perceptual_pretrain = "
       << (c.skip_perceptual_pretrain ? "true" : "false") << '\n';
    os << "eval_fid = " << (c.eval_fid ? "true" : "false") << '\n';
    os << "data.kind = " << c.data.kind << '\n';
    os << "data.synthetic_dir = " << c.data.synthetic_dir << '\n';
    os << "data.real_dir = " << c.data.real_dir << '\n';
    os << "data.has_labels = " << (c.data.has_labels ? "true" : "false") << '\n';
    os << "data.toy_images = " << c.data.toy.num_images << '\n';
    os << "data.toy_height = " << c.data.toy.height << '\n';
    os << "data.toy_width = " << c.data.toy.width << '\n';
    os << "data.toy_classes = " << c.data.toy.num_classes << '\n';
    os << "data.toy_seed = " << c.data.toy.seed << '\n';
    os << "data.gap_kind = flat_vs_textured\n";
    os << "seg.steps = " << c.seg.steps << '\n';
    os << "seg.lr = " << fmt_double(c.seg.lr) << '\n';
    os << "seg.batch_size = " << c.seg.batch_size << '\n';
    os << "seg.base_channels = " << c.seg.base_channels << '\n';
    os << "seg.test_size = " << c.seg.test_size << '\n';
    return os.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
    const std::string text = format_config(cfg);
    return fnv1a(kFnvOffset, text.data(), text.size());
}

}  // namespace synref
