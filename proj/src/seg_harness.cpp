#include "synref/seg_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "synref/metrics.hpp"
#include "synref/rng.hpp"

namespace synref {

namespace {

constexpr int kEvalChunk = 8;

void check_scores(const Tensor& scores, const LabelMap& gt) {
    if (scores.n != gt.n || scores.h != gt.h || scores.w != gt.w)
        throw DataError("score map and label map shapes differ");
    if (scores.c != gt.num_classes)
        throw DataError("score channels do not match label num_classes");
    if (scores.c < 2) throw DataError("scores need at least 2 class channels");
    if (scores.n < 1) throw DataError("empty score batch");
}

void check_dataset(const SegDataset& data, const char* what) {
    if (data.images.empty()) throw DataError(std::string(what) + ": no images");
    if (data.labels.size() != data.images.size())
        throw DataError(std::string(what) + ": images and labels are not parallel");
    const int k = data.labels[0].num_classes;
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const Tensor& img = data.images[i];
        const LabelMap& lab = data.labels[i];
        if (img.n != 1 || lab.n != 1)
            throw DataError(std::string(what) + ": entries must be single images");
        if (img.h != lab.h || img.w != lab.w)
            throw DataError(std::string(what) + ": image and label dims differ");
        if (lab.num_classes != k)
            throw DataError(std::string(what) + ": inconsistent num_classes");
        validate_label_map(lab, what);
    }
}

void check_seg_config(const SegConfig& cfg) {
    if (cfg.steps < 0) throw ConfigError("seg.steps must be >= 0");
    if (!(cfg.lr > 0.0)) throw ConfigError("seg.lr must be > 0");
    if (cfg.batch_size < 1) throw ConfigError("seg.batch_size must be >= 1");
    if (cfg.base_channels < 1) throw ConfigError("seg.base_channels must be >= 1");
}

LabelMap gather_labels(const std::vector<LabelMap>& labels,
                       const std::vector<std::size_t>& idx) {
    LabelMap out(static_cast<int>(idx.size()), labels[0].h, labels[0].w,
                 labels[0].num_classes);
    for (std::size_t i = 0; i < idx.size(); ++i) out.set_slice(static_cast<int>(i), labels[idx[i]]);
    return out;
}

Tensor gather_images(const std::vector<Tensor>& images, const std::vector<std::size_t>& idx) {
    Tensor out(static_cast<int>(idx.size()), images[0].h, images[0].w, images[0].c);
    for (std::size_t i = 0; i < idx.size(); ++i) out.set_slice(static_cast<int>(i), images[idx[i]]);
    return out;
}

SegDataset take(const SegDataset& data, const std::vector<std::size_t>& idx) {
    SegDataset out;
    out.images.reserve(idx.size());
    out.labels.reserve(idx.size());
    for (const std::size_t i : idx) {
        out.images.push_back(data.images[i]);
        out.labels.push_back(data.labels[i]);
    }
    return out;
}

/// Largest-magnitude score per pixel, then softmax relative to it.
double lse_at(const Tensor& s, int i, int y, int x) {
    double m = s.at(i, y, x, 0);
    for (int k = 1; k < s.c; ++k) m = std::max(m, s.at(i, y, x, k));
    double z = 0.0;
    for (int k = 0; k < s.c; ++k) z += std::exp(s.at(i, y, x, k) - m);
    return m + std::log(z);
}

/// Multiplies a decimal literal by 10^k as a pure text operation. Keeps the
/// fraction<->percent conversion exact: multiplying doubles by 100 and
/// dividing back is lossy for fractions in binades where ulp(100x) exceeds
/// 100*ulp(x), but a decimal-point shift loses nothing.
std::string shift_decimal(const std::string& s, int k) {
    const std::size_t epos = s.find_first_of("eE");
    if (epos != std::string::npos) {
        long exp10 = 0;
        try {
            exp10 = std::stol(s.substr(epos + 1));
        } catch (const std::exception&) {
            return s;  // leave malformed text for the numeric parser to reject
        }
        return s.substr(0, epos) + "e" + std::to_string(exp10 + k);
    }
    std::string mant = s;
    const bool neg = !mant.empty() && mant[0] == '-';
    if (neg) mant.erase(0, 1);
    const std::size_t dot = mant.find('.');
    std::string digits = mant;
    long point = static_cast<long>(mant.size());
    if (dot != std::string::npos) {
        digits = mant.substr(0, dot) + mant.substr(dot + 1);
        point = static_cast<long>(dot);
    }
    point += k;
    while (point > static_cast<long>(digits.size())) digits += '0';
    while (point < 0) {
        digits.insert(digits.begin(), '0');
        ++point;
    }
    std::string out = digits.substr(0, point);
    if (point < static_cast<long>(digits.size())) out += "." + digits.substr(point);
    while (out.size() > 1 && out[0] == '0' && out[1] != '.') out.erase(0, 1);
    if (out.empty() || out[0] == '.') out.insert(0, "0");
    return (neg ? "-" : "") + out;
}

void write_index_line(std::ostream& os, const char* key,
                      const std::vector<std::size_t>& idx) {
    os << key << " =";
    for (const std::size_t i : idx) os << ' ' << i;
    os << '\n';
}

}  // namespace

const char* image_type_name(ImageType t) {
    switch (t) {
        case ImageType::synthetic: return "synthetic";
        case ImageType::refined: return "refined";
        case ImageType::real: return "real";
    }
    throw ConfigError("unknown image type");
}

double seg_ce_loss(const Tensor& scores, const LabelMap& gt) {
    check_scores(scores, gt);
    double total = 0.0;
    for (int i = 0; i < scores.n; ++i)
        for (int y = 0; y < scores.h; ++y)
            for (int x = 0; x < scores.w; ++x)
                total += lse_at(scores, i, y, x) - scores.at(i, y, x, gt.at(i, y, x));
    return total / (static_cast<double>(scores.n) * scores.h * scores.w);
}

Tensor seg_ce_loss_grad(const Tensor& scores, const LabelMap& gt) {
    check_scores(scores, gt);
    Tensor grad(scores.n, scores.h, scores.w, scores.c);
    const double inv = 1.0 / (static_cast<double>(scores.n) * scores.h * scores.w);
    for (int i = 0; i < scores.n; ++i)
        for (int y = 0; y < scores.h; ++y)
            for (int x = 0; x < scores.w; ++x) {
                const double lse = lse_at(scores, i, y, x);
                const int g = gt.at(i, y, x);
                for (int k = 0; k < scores.c; ++k) {
                    const double p = std::exp(scores.at(i, y, x, k) - lse);
                    grad.at(i, y, x, k) = (p - (k == g ? 1.0 : 0.0)) * inv;
                }
            }
    return grad;
}

SegNet train_seg(const SegDataset& data, const SegConfig& cfg, std::uint64_t seed) {
    check_dataset(data, "seg training set");
    check_seg_config(cfg);
    const int k = data.labels[0].num_classes;
    SegNet net(3, k, cfg.base_channels);
    net.init_params(Rng::substream(seed, "seg/init").next_u64());
    if (cfg.steps == 0) return net;

    BatchIter iter(data.images, cfg.batch_size,
                   Rng::substream(seed, "seg/stream").next_u64());
    for (int step = 1; step <= cfg.steps; ++step) {
        const std::vector<std::size_t> idx = iter.next_indices();
        const Tensor batch = gather_images(data.images, idx);
        const LabelMap lab = gather_labels(data.labels, idx);
        SegNet::Cache cache;
        const Tensor scores = net.forward(batch, &cache);
        const double loss = seg_ce_loss(scores, lab);
        if (!std::isfinite(loss)) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "non-finite segmentation loss at step %d", step);
            throw RuntimeFault(buf);
        }
        const Grads g = net.backward(cache, seg_ce_loss_grad(scores, lab));
        sgd_step(net.layers(), g, cfg.lr);
    }
    return net;
}

LabelMap seg_predict(const SegNet& net, const std::vector<Tensor>& images) {
    if (images.empty()) throw DataError("nothing to predict on");
    const int n = static_cast<int>(images.size());
    LabelMap pred(n, images[0].h, images[0].w, net.num_classes());
    for (int from = 0; from < n; from += kEvalChunk) {
        const int count = std::min(kEvalChunk, n - from);
        std::vector<std::size_t> idx(count);
        for (int i = 0; i < count; ++i) idx[i] = static_cast<std::size_t>(from + i);
        const LabelMap chunk = argmax_map(net.forward(gather_images(images, idx)));
        for (int i = 0; i < count; ++i) pred.set_slice(from + i, chunk.slice(i));
    }
    return pred;
}

SegScores score_predictions(const LabelMap& pred, const LabelMap& gt) {
    if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w)
        throw DataError("prediction and label shapes differ");
    if (pred.num_classes != gt.num_classes)
        throw DataError("prediction and label num_classes differ");
    SegScores s;
    s.miou = miou(pred, gt, gt.num_classes);
    s.pixel_acc = pixel_accuracy(pred, gt);
    return s;
}

SegScores eval_seg(const SegNet& net, const SegDataset& data) {
    check_dataset(data, "seg eval set");
    std::vector<std::size_t> all(data.images.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return score_predictions(seg_predict(net, data.images),
                             gather_labels(data.labels, all));
}

MatrixReport run_matrix(const SegDataset& synthetic, const SegDataset& refined,
                        const SegDataset& real, const SegConfig& cfg, std::uint64_t seed,
                        const std::string& manifest_path, MatrixArtifacts* artifacts) {
    check_dataset(synthetic, "synthetic dataset");
    check_dataset(refined, "refined dataset");
    check_dataset(real, "real dataset");
    check_seg_config(cfg);

    if (refined.images.size() != synthetic.images.size())
        throw DataError("refined dataset must pair 1:1 with the synthetic dataset");
    for (std::size_t i = 0; i < synthetic.labels.size(); ++i)
        if (refined.labels[i].v != synthetic.labels[i].v)
            throw DataError("refined labels must be the synthetic labels unchanged");
    const int k = synthetic.labels[0].num_classes;
    if (real.labels[0].num_classes != k)
        throw DataError("datasets disagree on num_classes");

    const int n_syn = static_cast<int>(synthetic.images.size());
    const int n_real = static_cast<int>(real.images.size());
    if (cfg.test_size < 1) throw ConfigError("seg.test_size must be >= 1");
    if (cfg.test_size >= n_syn || cfg.test_size >= n_real)
        throw ConfigError("seg.test_size must leave at least one training image");

    // synthetic and refined share one split so every row sees the same scenes
    const auto perm_syn = Rng::substream(seed, "split/synthetic").permutation(n_syn);
    const auto perm_real = Rng::substream(seed, "split/real").permutation(n_real);
    const auto split = [&](const std::vector<std::size_t>& perm, int test_size) {
        std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
        out.first.assign(perm.begin(), perm.begin() + test_size);   // test
        out.second.assign(perm.begin() + test_size, perm.end());    // train
        return out;
    };
    const auto [test_syn, train_syn] = split(perm_syn, cfg.test_size);
    const auto [test_real, train_real] = split(perm_real, cfg.test_size);

    if (!manifest_path.empty()) {
        std::ofstream os(manifest_path);
        if (!os) throw DataError("cannot write split manifest: " + manifest_path);
        os << "# disjoint train/test split manifest\n";
        write_index_line(os, "synthetic_train", train_syn);
        write_index_line(os, "synthetic_test", test_syn);
        write_index_line(os, "refined_train", train_syn);
        write_index_line(os, "refined_test", test_syn);
        write_index_line(os, "real_train", train_real);
        write_index_line(os, "real_test", test_real);
    }

    const SegDataset trains[3] = {take(synthetic, train_syn), take(refined, train_syn),
                                  take(real, train_real)};
    const SegDataset tests[3] = {take(synthetic, test_syn), take(refined, test_syn),
                                 take(real, test_real)};

    MatrixReport report;
    report.n_test = cfg.test_size;
    report.seg_config = cfg;
    // one derived seed for every row: identical init and batch schedule, so
    // matrix differences isolate the data type
    const std::uint64_t row_seed = Rng::substream(seed, "seg/rows").next_u64();
    if (artifacts) {
        artifacts->row_nets.clear();
        artifacts->test_synthetic = test_syn;
        artifacts->test_real = test_real;
    }
    for (int row = 0; row < 3; ++row) {
        SegNet net = train_seg(trains[row], cfg, row_seed);
        for (int col = 0; col < 3; ++col) {
            const SegScores s = eval_seg(net, tests[col]);
            report.miou[row][col] = s.miou;
            report.pixel_acc[row][col] = s.pixel_acc;
        }
        if (artifacts) artifacts->row_nets.push_back(std::move(net));
    }
    return report;
}

void save_matrix_report(const MatrixReport& report, const std::string& path) {
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            const bool ok = report.miou[r][c] >= 0.0 && report.miou[r][c] <= 1.0 &&
                            report.pixel_acc[r][c] >= 0.0 && report.pixel_acc[r][c] <= 1.0;
            if (!ok) throw DataError("matrix entries must lie in [0,1]");
        }
    std::ofstream os(path);
    if (!os) throw DataError("cannot write matrix report: " + path);
    os << "# n_test = " << report.n_test << '\n';
    os << "# seg.steps = " << report.seg_config.steps << '\n';
    os << "# seg.lr = " << fmt_double(report.seg_config.lr) << '\n';
    os << "# seg.batch_size = " << report.seg_config.batch_size << '\n';
    os << "# seg.base_channels = " << report.seg_config.base_channels << '\n';
    os << "# seg.test_size = " << report.seg_config.test_size << '\n';
    os << "block,train,synthetic,refined,real\n";
    for (int r = 0; r < 3; ++r) {
        os << "miou," << image_type_name(kImageTypes[r]);
        for (int c = 0; c < 3; ++c) os << ',' << fmt_double(report.miou[r][c]);
        os << '\n';
    }
    for (int r = 0; r < 3; ++r) {
        os << "pixel_acc_percent," << image_type_name(kImageTypes[r]);
        for (int c = 0; c < 3; ++c) os << ',' << shift_decimal(fmt_double(report.pixel_acc[r][c]), 2);
        os << '\n';
    }
    if (!os.good()) throw DataError("failed writing matrix report: " + path);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

double parse_cell(const std::string& s, const std::string& path) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw DataError("bad numeric cell in " + path + ": " + s);
    }
    if (used != s.size()) throw DataError("bad numeric cell in " + path + ": " + s);
    return v;
}

}  // namespace

MatrixReport load_matrix_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open matrix report: " + path);
    MatrixReport report;
    bool seen[2][3] = {};
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::stringstream ss(line);
            std::string hash, key, eq, value;
            ss >> hash >> key >> eq >> value;
            if (eq != "=") continue;
            if (key == "n_test") report.n_test = static_cast<int>(parse_cell(value, path));
            else if (key == "seg.steps") report.seg_config.steps = static_cast<int>(parse_cell(value, path));
            else if (key == "seg.lr") report.seg_config.lr = parse_cell(value, path);
            else if (key == "seg.batch_size") report.seg_config.batch_size = static_cast<int>(parse_cell(value, path));
            else if (key == "seg.base_channels") report.seg_config.base_channels = static_cast<int>(parse_cell(value, path));
            else if (key == "seg.test_size") report.seg_config.test_size = static_cast<int>(parse_cell(value, path));
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() == 5 && cells[0] == "block") continue;  // header row
        if (cells.size() != 5) throw DataError("malformed matrix row in " + path + ": " + line);
        int block = -1;
        if (cells[0] == "miou") block = 0;
        else if (cells[0] == "pixel_acc_percent") block = 1;
        else throw DataError("unknown block in " + path + ": " + cells[0]);
        int row = -1;
        for (int r = 0; r < 3; ++r)
            if (cells[1] == image_type_name(kImageTypes[r])) row = r;
        if (row < 0) throw DataError("unknown train type in " + path + ": " + cells[1]);
        for (int c = 0; c < 3; ++c) {
            if (block == 0)
                report.miou[row][c] = parse_cell(cells[2 + c], path);
            else
                report.pixel_acc[row][c] = parse_cell(shift_decimal(cells[2 + c], -2), path);
        }
        seen[block][row] = true;
    }
    for (int b = 0; b < 2; ++b)
        for (int r = 0; r < 3; ++r)
            if (!seen[b][r]) throw DataError("matrix report is missing rows: " + path);
    return report;
}

}  // namespace synref
