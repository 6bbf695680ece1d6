#include "synref/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "synref/core_types.hpp"
#include "synref/errors.hpp"
#include "synref/rng.hpp"

namespace synref {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kEigTol = 1e-6;

Mat to_matrix(const GaussianMoments& m) {
    return Eigen::Map<const Mat>(m.cov.data(), m.dim, m.dim);
}

void check_moments(const GaussianMoments& m, const char* which) {
    if (m.dim < 1) throw DataError(std::string(which) + ": moments dim must be >= 1");
    if (m.mean.size() != static_cast<std::size_t>(m.dim) ||
        m.cov.size() != static_cast<std::size_t>(m.dim) * m.dim)
        throw DataError(std::string(which) + ": moments field sizes disagree with dim");
    for (int i = 0; i < m.dim; ++i)
        for (int j = i + 1; j < m.dim; ++j)
            if (std::abs(m.cov[i * m.dim + j] - m.cov[j * m.dim + i]) > 1e-8)
                throw DataError(std::string(which) + ": covariance not symmetric");
}

// Clamps the eigenvalue spectrum to PSD; tiny negatives are solver noise,
// anything past kEigTol means the input was not a covariance.
Eigen::VectorXd clamp_spectrum(const Eigen::VectorXd& eig, const char* ctx) {
    Eigen::VectorXd out = eig;
    for (int i = 0; i < out.size(); ++i) {
        if (out[i] < -kEigTol)
            throw DataError(std::string(ctx) + ": matrix square root failed (eigenvalue " +
                            std::to_string(out[i]) + ")");
        if (out[i] < 0) out[i] = 0;
    }
    return out;
}

// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
const std::array<double, 121>& ssim_window() {
    static const std::array<double, 121> w = [] {
        std::array<double, 121> win{};
        double total = 0;
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 11; ++x) {
                const double dy = y - 5, dx = x - 5;
                win[y * 11 + x] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
                total += win[y * 11 + x];
            }
        for (double& v : win) v /= total;
        return win;
    }();
    return w;
}

double ssim_pair(const Tensor& a, const Tensor& b, int img) {
    constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    const auto& win = ssim_window();
    double total = 0;
    long count = 0;
    for (int c = 0; c < a.c; ++c) {
        for (int oy = 0; oy + 11 <= a.h; ++oy) {
            for (int ox = 0; ox + 11 <= a.w; ++ox) {
                double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
                for (int ky = 0; ky < 11; ++ky) {
                    for (int kx = 0; kx < 11; ++kx) {
                        const double w = win[ky * 11 + kx];
                        const double va = a.at(img, oy + ky, ox + kx, c);
                        const double vb = b.at(img, oy + ky, ox + kx, c);
                        ma += w * va;
                        mb += w * vb;
                        aa += w * va * va;
                        bb += w * vb * vb;
                        ab += w * va * vb;
                    }
                }
                const double saa = aa - ma * ma;
                const double sbb = bb - mb * mb;
                const double sab = ab - ma * mb;
                const double num = (2.0 * (ma * mb) + kC1) * (2.0 * sab + kC2);
                const double den = (ma * ma + mb * mb + kC1) * (saa + sbb + kC2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

void check_label_pair(const LabelMap& pred, const LabelMap& gt) {
    if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w)
        throw DataError("label maps differ in shape");
    if (pred.num_classes != gt.num_classes)
        throw DataError("label maps differ in num_classes");
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

GaussianMoments fit_moments(const Tensor& feats) {
    const int n = feats.n;
    const long d = static_cast<long>(feats.h) * feats.w * feats.c;
    if (n < 2) throw DataError("fit_moments needs at least 2 samples");
    if (d < 1) throw DataError("fit_moments: empty feature vectors");

    Eigen::Map<const Mat> x(feats.v.data(), n, d);
    GaussianMoments m;
    m.dim = static_cast<int>(d);
    Eigen::RowVectorXd mean = x.colwise().mean();
    Mat centered = x.rowwise() - mean;
    Mat cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    cov = ((cov + cov.transpose()) * 0.5).eval();

    m.mean.assign(mean.data(), mean.data() + d);
    m.cov.assign(cov.data(), cov.data() + d * d);
    return m;
}

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
    check_moments(a, "frechet_distance(a)");
    check_moments(b, "frechet_distance(b)");
    if (a.dim != b.dim) throw DataError("frechet_distance: dimension mismatch");

    const Mat sa = to_matrix(a);
    const Mat sb = to_matrix(b);

    Eigen::SelfAdjointEigenSolver<Mat> es_a(sa);
    if (es_a.info() != Eigen::Success)
        throw DataError("frechet_distance: eigendecomposition of cov(a) failed");
    const Eigen::VectorXd la = clamp_spectrum(es_a.eigenvalues(), "frechet_distance");
    const Mat sqrt_a = es_a.eigenvectors() * la.cwiseSqrt().asDiagonal() *
                       es_a.eigenvectors().transpose();

    Mat prod = sqrt_a * sb * sqrt_a;
    prod = ((prod + prod.transpose()) * 0.5).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es_p(prod);
    if (es_p.info() != Eigen::Success)
        throw DataError("frechet_distance: eigendecomposition of the product failed");
    const Eigen::VectorXd lp = clamp_spectrum(es_p.eigenvalues(), "frechet_distance");

    double mean_term = 0;
    for (int i = 0; i < a.dim; ++i) {
        const double diff = a.mean[i] - b.mean[i];
        mean_term += diff * diff;
    }
    return mean_term + sa.trace() + sb.trace() - 2.0 * lp.cwiseSqrt().sum();
}

double fid(const Tensor& set_a, const Tensor& set_b, const FeatureExtractor& ex) {
    if (set_a.n < 2 || set_b.n < 2) throw DataError("fid needs at least 2 images per set");
    return frechet_distance(fit_moments(ex.pooled_features(set_a)),
                            fit_moments(ex.pooled_features(set_b)));
}

double ssim(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DataError("ssim inputs differ in shape");
    if (a.h < 11 || a.w < 11)
        throw DataError("ssim needs images at least 11x11 (got " + std::to_string(a.h) +
                        "x" + std::to_string(a.w) + ")");
    double total = 0;
    for (int i = 0; i < a.n; ++i) total += ssim_pair(a, b, i);
    return total / static_cast<double>(a.n);
}

double dataset_ssim(const Tensor& a, const Tensor& b, std::uint64_t seed) {
    if (a.n < 1 || b.n < 1) throw DataError("dataset_ssim needs non-empty sets");
    if (a.h != b.h || a.w != b.w || a.c != b.c)
        throw DataError("dataset_ssim inputs differ in image shape");
    const int m = std::min(a.n, b.n);
    Rng rng(Rng::substream(seed, "ssim/pairing"));
    const auto pa = rng.permutation(a.n);
    const auto pb = rng.permutation(b.n);
    double total = 0;
    for (int i = 0; i < m; ++i)
        total += ssim(a.slice(static_cast<int>(pa[i])), b.slice(static_cast<int>(pb[i])));
    return total / static_cast<double>(m);
}

double pixel_accuracy(const LabelMap& pred, const LabelMap& gt) {
    check_label_pair(pred, gt);
    long hits = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i)
        if (pred.v[i] == gt.v[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.v.size());
}

double miou(const LabelMap& pred, const LabelMap& gt, int num_classes) {
    check_label_pair(pred, gt);
    if (num_classes < 2) throw DataError("miou needs num_classes >= 2");
    std::vector<long> inter(num_classes, 0), uni(num_classes, 0);
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const int p = pred.v[i], g = gt.v[i];
        if (p == g) {
            ++inter[p];
            ++uni[p];
        } else {
            ++uni[p];
            ++uni[g];
        }
    }
    double total = 0;
    int present = 0;
    for (int c = 0; c < num_classes; ++c) {
        if (uni[c] == 0) continue;
        total += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
        ++present;
    }
    if (present == 0) throw DataError("miou: no classes present in either map");
    return total / present;
}

void save_metric_report(const std::string& path, const MetricReport& report) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open metric report for writing: " + path);
    os << "train_type,test_type,metric,value\n";
    for (const auto& r : report.rows)
        os << r.train_type << ',' << r.test_type << ',' << r.metric << ','
           << fmt_double(r.value) << '\n';
    if (!os) throw DataError("write failure on metric report: " + path);
}

MetricReport load_metric_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open metric report: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "train_type,test_type,metric,value")
        throw DataError("metric report has unexpected header: " + path);
    MetricReport rep;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 4)
            throw DataError("malformed metric report row: " + line);
        MetricRow r;
        r.train_type = cells[0];
        r.test_type = cells[1];
        r.metric = cells[2];
        try {
            r.value = std::stod(cells[3]);
        } catch (const std::exception&) {
            throw DataError("malformed metric value: " + cells[3]);
        }
        rep.rows.push_back(std::move(r));
    }
    return rep;
}

std::string format_metric_table(const MetricReport& report) {
    // first-appearance order keeps the caller's matrix layout
    std::vector<std::string> metrics, trains, tests;
    auto note = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    std::map<std::string, double> cell;
    for (const auto& r : report.rows) {
        note(metrics, r.metric);
        note(trains, r.train_type);
        note(tests, r.test_type);
        cell[r.metric + '\n' + r.train_type + '\n' + r.test_type] = r.value;
    }

    std::size_t label_w = sizeof "train \\ test" - 1;
    for (const auto& t : trains) label_w = std::max(label_w, t.size());
    std::size_t col_w = 9;
    for (const auto& t : tests) col_w = std::max(col_w, t.size() + 2);

    std::ostringstream os;
    for (const auto& m : metrics) {
        os << '[' << m << "]\n";
        os << std::string(label_w - (sizeof "train \\ test" - 1), ' ') << "train \\ test";
        for (const auto& t : tests)
            os << std::string(col_w - t.size(), ' ') << t;
        os << '\n';
        for (const auto& tr : trains) {
            os << std::string(label_w - tr.size(), ' ') << tr;
            for (const auto& te : tests) {
                const auto it = cell.find(m + '\n' + tr + '\n' + te);
                char buf[32];
                if (it == cell.end())
                    std::snprintf(buf, sizeof buf, "%*s", static_cast<int>(col_w), "-");
                else
                    std::snprintf(buf, sizeof buf, "%*.4f", static_cast<int>(col_w),
                                  it->second);
                os << buf;
            }
            os << '\n';
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace synref
