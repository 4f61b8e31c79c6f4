#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>

#include "noiseavg/tensor.hpp"

namespace noiseavg {

// Inputs normalized to [0,1], labels in [0, class_count).
struct Dataset {
    std::vector<Tensor> inputs;
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const { return inputs.size(); }
    std::size_t dim() const { return inputs.empty() ? 0 : inputs.front().size(); }
    void validate() const;
};

Tensor one_hot(int label, int class_count);

// Gaussian blobs around deterministically placed class means. When C <= d the
// means sit at 0.5*ones +- 0.3*e_axis (seeded axis permutation and sign), so
// they are pairwise equidistant; otherwise means are seeded uniform draws in
// [0.2, 0.8]^d. Samples are clamped to [0,1].
Dataset gen_gaussian_blobs(std::size_t n_per_class, std::size_t dim, int class_count,
                           double spread, std::uint64_t seed);

// IDX pair: images (magic 2051: count, rows, cols, u8 pixels row-major) and
// labels (magic 2049: count, u8 labels). Pixels scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

// Seeded shuffle, then split at round(train_fraction * n). Disjoint, exhaustive.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed);

} // namespace noiseavg
