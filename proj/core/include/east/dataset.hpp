#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "east/tensor.hpp"

namespace east {

struct DatasetSpec {
    enum class Kind { Synthetic, Idx, Cifar10 };
    Kind kind = Kind::Synthetic;

    // synthetic Gaussian blobs
    int64_t classes = 10;
    Shape sample_shape = {3, 32, 32};
    int64_t train_size = 10000;
    int64_t test_size = 2000;
    double mean_scale = 1.0;
    double noise = 1.0;
    bool channel_means = false;  // class means constant per channel
    uint64_t seed = 1;

    // idx (image/label file pairs)
    std::string images, labels, test_images, test_labels;

    // cifar binary batches; empty dir falls back to $EAST_DATA_DIR
    std::string dir;

    int64_t subset = 0;  // cap on the train split, 0 = all
    bool normalize = true;
};

/// In-memory split: row-major samples, one float per element.
struct Dataset {
    Shape sample_shape;  // C,H,W
    std::vector<float> data;
    std::vector<int> labels;

    int64_t size() const { return static_cast<int64_t>(labels.size()); }
    int64_t sample_numel() const { return shape_numel(sample_shape); }

    /// Gathers the given sample indices into a [n,C,H,W] batch tensor.
    Tensor gather(const std::vector<int64_t>& indices) const;
    std::vector<int> gather_labels(const std::vector<int64_t>& indices) const;
};

struct DataPair {
    Dataset train, test;
};

DataPair load_dataset(const DatasetSpec& spec);

/// IDX-format reader (big-endian header). Throws on magic mismatch.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, bool normalize);

}  // namespace east
