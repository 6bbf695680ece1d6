#include "synref/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "synref/errors.hpp"
#include "synref/image_io.hpp"
#include "synref/kernels.hpp"
#include "synref/rng.hpp"

namespace fs = std::filesystem;

namespace synref {

namespace {

void check_crop(const DatasetSpec& spec, int h, int w) {
    if (spec.crop_height < 1 || spec.crop_width < 1)
        throw ConfigError("crop window dims must be >= 1");
    if (spec.crop_row < 0 || spec.crop_col < 0 ||
        spec.crop_row + spec.crop_height > h || spec.crop_col + spec.crop_width > w)
        throw DataError("crop window out of bounds: rows [" +
                        std::to_string(spec.crop_row) + ", " +
                        std::to_string(spec.crop_row + spec.crop_height) +
                        ") cols [" + std::to_string(spec.crop_col) + ", " +
                        std::to_string(spec.crop_col + spec.crop_width) +
                        ") in a " + std::to_string(h) + "x" + std::to_string(w) +
                        " source");
}

bool wants_crop(const DatasetSpec& spec) {
    return spec.crop_height != 0 || spec.crop_width != 0;
}

bool wants_resize(const DatasetSpec& spec) {
    return spec.out_height != 0 || spec.out_width != 0;
}

void check_out_dims(const DatasetSpec& spec) {
    if (spec.out_height < 8 || spec.out_width < 8)
        throw ConfigError("output dims must be >= 8");
}

}  // namespace

Tensor crop_resize(const Tensor& batch, const DatasetSpec& spec) {
    Tensor cur = batch;
    if (wants_crop(spec)) {
        check_crop(spec, batch.h, batch.w);
        Tensor window(batch.n, spec.crop_height, spec.crop_width, batch.c);
        for (int i = 0; i < batch.n; ++i)
            for (int y = 0; y < spec.crop_height; ++y)
                for (int x = 0; x < spec.crop_width; ++x) {
                    const double* src = batch.row(i, spec.crop_row + y, spec.crop_col + x);
                    double* dst = window.row(i, y, x);
                    for (int k = 0; k < batch.c; ++k) dst[k] = src[k];
                }
        cur = std::move(window);
    }
    if (wants_resize(spec)) {
        check_out_dims(spec);
        cur = kernels::resize_bilinear(cur, spec.out_height, spec.out_width);
    }
    return cur;
}

LabelMap crop_resize_labels(const LabelMap& m, const DatasetSpec& spec) {
    LabelMap cur = m;
    if (wants_crop(spec)) {
        check_crop(spec, m.h, m.w);
        LabelMap window(m.n, spec.crop_height, spec.crop_width, m.num_classes);
        for (int i = 0; i < m.n; ++i)
            for (int y = 0; y < spec.crop_height; ++y)
                for (int x = 0; x < spec.crop_width; ++x)
                    window.at(i, y, x) = m.at(i, spec.crop_row + y, spec.crop_col + x);
        cur = std::move(window);
    }
    if (wants_resize(spec)) {
        check_out_dims(spec);
        cur = kernels::resize_nearest(cur, spec.out_height, spec.out_width);
    }
    return cur;
}

LoadedDataset load_image_dir(const DatasetSpec& spec, bool strict) {
    const fs::path image_dir = fs::path(spec.root_path) / "images";
    if (!fs::is_directory(image_dir))
        throw DataError("image directory not found: " + image_dir.string());

    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(image_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());

    LoadedDataset out;
    // label values are validated against the final class count below; until
    // then accept anything an 8-bit label file can hold
    const int read_bound = spec.num_classes > 0 ? spec.num_classes : 256;
    int max_label = -1;
    for (const std::string& name : names) {
        const fs::path img_path = image_dir / name;
        Tensor img;
        try {
            img = read_png(img_path.string());
        } catch (const DataError&) {
            if (strict) throw;
            std::fprintf(stderr, "warning: skipping undecodable file: %s\n",
                         img_path.string().c_str());
            ++out.skipped;
            continue;
        }
        out.images.push_back(crop_resize(img, spec));
        const std::string stem = fs::path(name).stem().string();
        out.stems.push_back(stem);

        if (spec.has_labels) {
            const fs::path lbl_path = fs::path(spec.root_path) / "labels" / (stem + ".png");
            if (!fs::is_regular_file(lbl_path))
                throw DataError("label file missing for " + name + ": expected " +
                                lbl_path.string());
            LabelMap lbl = read_label_png(lbl_path.string(), read_bound);
            for (auto v : lbl.v) max_label = std::max(max_label, static_cast<int>(v));
            out.labels.push_back(crop_resize_labels(lbl, spec));
        }
    }
    if (out.images.empty())
        throw DataError("no decodable images in " + image_dir.string());

    if (spec.has_labels && spec.num_classes == 0) {
        const int inferred = std::max(max_label + 1, 2);
        for (LabelMap& lbl : out.labels) lbl.num_classes = inferred;
    }
    return out;
}

namespace {

struct Scene {
    std::vector<double> sy, sx;
    std::vector<int> cls;
};

Scene make_scene(Rng& rng, const ToySceneSpec& spec) {
    Scene s;
    const int nseeds = spec.num_classes * 3;
    for (int j = 0; j < nseeds; ++j) {
        s.sy.push_back(rng.uniform(0.0, spec.height));
        s.sx.push_back(rng.uniform(0.0, spec.width));
        // every class owns at least three sites, so no class vanishes
        s.cls.push_back(j % spec.num_classes);
    }
    return s;
}

LabelMap rasterize(const Scene& s, const ToySceneSpec& spec) {
    LabelMap m(1, spec.height, spec.width, spec.num_classes);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            double best = 1e300;
            int best_cls = 0;
            for (std::size_t j = 0; j < s.sy.size(); ++j) {
                const double dy = (y + 0.5) - s.sy[j];
                const double dx = (x + 0.5) - s.sx[j];
                const double d = dy * dy + dx * dx;
                if (d < best) {
                    best = d;
                    best_cls = s.cls[j];
                }
            }
            m.at(0, y, x) = best_cls;
        }
    return m;
}

Tensor render_flat(const LabelMap& m, const std::vector<double>& palette) {
    Tensor img(1, m.h, m.w, 3);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            const int k = m.at(0, y, x);
            double* px = img.row(0, y, x);
            for (int c = 0; c < 3; ++c) px[c] = palette[static_cast<std::size_t>(k) * 3 + c];
        }
    return img;
}

}  // namespace

ToyDataset make_toy_dataset(const ToySceneSpec& spec) {
    if (spec.num_images < 1) throw ConfigError("num_images must be >= 1");
    if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (spec.height < 8 || spec.width < 8)
        throw ConfigError("toy scene dims must be >= 8");

    const auto seed = static_cast<std::uint64_t>(spec.seed);
    Rng pal_rng = Rng::substream(seed, "toy/palette");
    std::vector<double> palette;
    for (int k = 0; k < spec.num_classes; ++k)
        for (int c = 0; c < 3; ++c)
            // keep colors away from the pixel range edges so the real-domain
            // noise and tone shift survive clamping mostly intact
            palette.push_back(pal_rng.uniform(0.15, 0.85));

    Rng tone_rng = Rng::substream(seed, "toy/tone");
    double tone[3];
    for (double& t : tone) {
        const double sign = tone_rng.uniform() < 0.5 ? -1.0 : 1.0;
        t = sign * tone_rng.uniform(0.05, 0.10);
    }

    ToyDataset out;
    for (int i = 0; i < spec.num_images; ++i) {
        Rng geo = Rng::substream(seed, "toy/scene", static_cast<std::uint64_t>(i));
        const Scene scene = make_scene(geo, spec);
        const LabelMap labels = rasterize(scene, spec);

        Tensor synth = render_flat(labels, palette);

        Tensor real = synth;
        Rng noise = Rng::substream(seed, "toy/noise", static_cast<std::uint64_t>(i));
        for (double& v : real.v) v += noise.normal() * 0.08;
        real = kernels::box_blur3(real);
        for (int y = 0; y < real.h; ++y)
            for (int x = 0; x < real.w; ++x) {
                double* px = real.row(0, y, x);
                for (int c = 0; c < 3; ++c)
                    px[c] = std::clamp(px[c] + tone[c], 0.0, 1.0);
            }

        out.synthetic.images.push_back(std::move(synth));
        out.synthetic.labels.push_back(labels);
        out.real.images.push_back(std::move(real));
        out.real.labels.push_back(labels);
    }
    return out;
}

BatchIter::BatchIter(std::vector<Tensor> images, int batch_size, std::uint64_t seed)
    : images_(std::move(images)), batch_size_(batch_size), seed_(seed) {
    if (batch_size_ < 1) throw ConfigError("batch_size must be >= 1");
    if (images_.empty()) throw DataError("batch_iter: empty dataset");
    if (batch_size_ > static_cast<int>(images_.size()))
        throw ConfigError("batch_size exceeds dataset size (" +
                          std::to_string(batch_size_) + " > " +
                          std::to_string(images_.size()) + ")");
    for (const Tensor& img : images_)
        if (img.n != 1 || !img.same_shape(images_.front()))
            throw DataError("batch_iter: images must be single and uniformly shaped");
    reshuffle();
}

void BatchIter::reshuffle() {
    ++epoch_;
    perm_ = Rng::substream(seed_, "epoch", static_cast<std::uint64_t>(epoch_))
                .permutation(images_.size());
    cursor_ = 0;
}

std::vector<std::size_t> BatchIter::next_indices() {
    if (cursor_ + static_cast<std::size_t>(batch_size_) > perm_.size()) reshuffle();
    std::vector<std::size_t> idx(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 perm_.begin() + static_cast<std::ptrdiff_t>(cursor_) +
                                     batch_size_);
    cursor_ += static_cast<std::size_t>(batch_size_);
    return idx;
}

Tensor BatchIter::next() {
    const std::vector<std::size_t> idx = next_indices();
    const Tensor& first = images_.front();
    Tensor batch(batch_size_, first.h, first.w, first.c);
    for (int i = 0; i < batch_size_; ++i)
        batch.set_slice(i, images_[idx[static_cast<std::size_t>(i)]]);
    return batch;
}

}  // namespace synref
