#include "noiseavg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

#include "noiseavg/error.hpp"
#include "noiseavg/rng.hpp"

namespace noiseavg {

void Dataset::validate() const {
    if (inputs.size() != labels.size()) {
        std::ostringstream ss;
        ss << "dataset has " << inputs.size() << " inputs but " << labels.size() << " labels";
        throw ValidationError(ss.str());
    }
    if (class_count < 2) throw ValidationError("dataset needs >= 2 classes");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count) {
            std::ostringstream ss;
            ss << "label " << labels[i] << " out of range [0, " << class_count << ") at index " << i;
            throw ValidationError(ss.str());
        }
        if (!inputs.empty() && inputs[i].size() != inputs.front().size())
            throw ValidationError("dataset inputs have inconsistent dimensions");
        for (double v : inputs[i].data)
            if (!(v >= 0.0 && v <= 1.0))
                throw ValidationError("dataset input component outside [0,1]");
    }
}

Tensor one_hot(int label, int class_count) {
    if (class_count < 2) throw ValidationError("one_hot needs >= 2 classes");
    if (label < 0 || label >= class_count) {
        std::ostringstream ss;
        ss << "label " << label << " out of range [0, " << class_count << ")";
        throw ValidationError(ss.str());
    }
    Tensor y = Tensor::zeros({static_cast<std::size_t>(class_count)});
    y[static_cast<std::size_t>(label)] = 1.0;
    return y;
}

Dataset gen_gaussian_blobs(std::size_t n_per_class, std::size_t dim, int class_count,
                           double spread, std::uint64_t seed) {
    if (n_per_class == 0) throw ValidationError("n_per_class must be positive");
    if (dim == 0) throw ValidationError("dim must be positive");
    if (class_count < 2) throw ValidationError("class_count must be >= 2");
    if (spread < 0.0) throw ValidationError("spread must be >= 0");

    RandomEngine rng(seed);

    // Class means. When every class fits on its own axis the layout is a
    // pairwise-equidistant cross around the box center; the seed picks the
    // axis order and the push direction.
    std::vector<Tensor> means;
    const std::size_t c_count = static_cast<std::size_t>(class_count);
    if (c_count <= dim) {
        std::vector<std::size_t> axes(dim);
        std::iota(axes.begin(), axes.end(), std::size_t{0});
        deterministic_shuffle(axes, rng);
        for (std::size_t c = 0; c < c_count; ++c) {
            Tensor mean(std::vector<double>(dim, 0.5), {dim});
            const double direction = rng.uniform01() < 0.5 ? -1.0 : 1.0;
            mean[axes[c]] = 0.5 + direction * 0.3;
            means.push_back(std::move(mean));
        }
    } else {
        for (std::size_t c = 0; c < c_count; ++c) {
            Tensor mean = Tensor::zeros({dim});
            for (std::size_t j = 0; j < dim; ++j) mean[j] = rng.uniform(0.2, 0.8);
            means.push_back(std::move(mean));
        }
    }

    Dataset out;
    out.class_count = class_count;
    for (std::size_t c = 0; c < c_count; ++c) {
        for (std::size_t s = 0; s < n_per_class; ++s) {
            Tensor x = Tensor::zeros({dim});
            for (std::size_t j = 0; j < dim; ++j)
                x[j] = std::clamp(means[c][j] + spread * rng.gaussian(0.0, 1.0), 0.0, 1.0);
            out.inputs.push_back(std::move(x));
            out.labels.push_back(static_cast<int>(c));
        }
    }
    return out;
}

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& what, const std::string& file) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4)
        throw TruncatedFileError("truncated IDX file (while reading " + what + "): " + file);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

} // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw Error("cannot open IDX image file: " + images_path.string());
    const std::uint32_t img_magic = read_be_u32(img, "magic", images_path.string());
    if (img_magic != 2051u) {
        std::ostringstream ss;
        ss << "bad magic in " << images_path.string() << ": got " << img_magic << ", expected 2051";
        throw BadMagicError(ss.str());
    }
    const std::uint32_t img_count = read_be_u32(img, "image count", images_path.string());
    const std::uint32_t rows = read_be_u32(img, "row count", images_path.string());
    const std::uint32_t cols = read_be_u32(img, "column count", images_path.string());

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw Error("cannot open IDX label file: " + labels_path.string());
    const std::uint32_t lab_magic = read_be_u32(lab, "magic", labels_path.string());
    if (lab_magic != 2049u) {
        std::ostringstream ss;
        ss << "bad magic in " << labels_path.string() << ": got " << lab_magic << ", expected 2049";
        throw BadMagicError(ss.str());
    }
    const std::uint32_t lab_count = read_be_u32(lab, "label count", labels_path.string());

    if (img_count != lab_count) {
        std::ostringstream ss;
        ss << "IDX count mismatch: " << img_count << " images vs " << lab_count << " labels";
        throw CountMismatchError(ss.str());
    }

    const std::size_t pixels = std::size_t(rows) * std::size_t(cols);
    if (pixels == 0) throw MalformedFileError("IDX image dimensions are zero: " + images_path.string());

    Dataset out;
    std::vector<unsigned char> buf(pixels);
    int max_label = 0;
    for (std::uint32_t i = 0; i < img_count; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
        if (static_cast<std::size_t>(img.gcount()) != pixels)
            throw TruncatedFileError("truncated IDX image payload: " + images_path.string());
        Tensor x = Tensor::zeros({pixels});
        for (std::size_t p = 0; p < pixels; ++p) x[p] = buf[p] / 255.0;
        out.inputs.push_back(std::move(x));

        unsigned char label;
        lab.read(reinterpret_cast<char*>(&label), 1);
        if (lab.gcount() != 1)
            throw TruncatedFileError("truncated IDX label payload: " + labels_path.string());
        out.labels.push_back(static_cast<int>(label));
        max_label = std::max(max_label, static_cast<int>(label));
    }
    out.class_count = std::max(max_label + 1, 2);
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed) {
    dataset.validate();
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
        throw ValidationError("train_fraction must be in [0,1]");

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    RandomEngine rng(seed);
    deterministic_shuffle(order, rng);

    const std::size_t n_train =
        std::min<std::size_t>(dataset.size(),
                              static_cast<std::size_t>(std::llround(train_fraction * double(dataset.size()))));

    Dataset train_set, test_set;
    train_set.class_count = test_set.class_count = dataset.class_count;
    for (std::size_t i = 0; i < order.size(); ++i) {
        Dataset& dst = i < n_train ? train_set : test_set;
        dst.inputs.push_back(dataset.inputs[order[i]]);
        dst.labels.push_back(dataset.labels[order[i]]);
    }
    return {std::move(train_set), std::move(test_set)};
}

} // namespace noiseavg
