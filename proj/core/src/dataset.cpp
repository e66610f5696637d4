#include "east/dataset.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "east/rng.hpp"

namespace east {

Tensor Dataset::gather(const std::vector<int64_t>& indices) const {
    const int64_t n = static_cast<int64_t>(indices.size());
    const int64_t m = sample_numel();
    Shape bshape;
    bshape.push_back(n);
    for (int64_t d : sample_shape) bshape.push_back(d);
    Tensor out(bshape);
    auto dst = out.data();
    for (int64_t i = 0; i < n; ++i)
        std::memcpy(dst.data() + i * m, data.data() + indices[static_cast<size_t>(i)] * m,
                    static_cast<size_t>(m) * sizeof(float));
    return out;
}

std::vector<int> Dataset::gather_labels(const std::vector<int64_t>& indices) const {
    std::vector<int> out(indices.size());
    for (size_t i = 0; i < indices.size(); ++i)
        out[i] = labels[static_cast<size_t>(indices[i])];
    return out;
}

namespace {

uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("idx: truncated header in " + path);
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

Dataset synthetic_split(const DatasetSpec& spec, int64_t n, uint64_t noise_salt) {
    Dataset d;
    d.sample_shape = spec.sample_shape;
    const int64_t m = shape_numel(spec.sample_shape);

    // class means from the base seed so train and test share the geometry
    Rng mean_rng(spec.seed);
    std::vector<double> means(static_cast<size_t>(spec.classes * m));
    if (spec.channel_means && spec.sample_shape.size() == 3) {
        const int64_t C = spec.sample_shape[0];
        const int64_t hw = m / C;
        for (int64_t c = 0; c < spec.classes; ++c)
            for (int64_t ch = 0; ch < C; ++ch) {
                const double v = spec.mean_scale * mean_rng.normal();
                for (int64_t j = 0; j < hw; ++j)
                    means[static_cast<size_t>(c * m + ch * hw + j)] = v;
            }
    } else {
        for (auto& v : means) v = spec.mean_scale * mean_rng.normal();
    }

    // exact round-robin label histogram, then a seeded shuffle of the order
    d.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        d.labels[static_cast<size_t>(i)] = static_cast<int>(i % spec.classes);
    Rng order_rng(spec.seed ^ (0x5151515151515151ull + noise_salt));
    order_rng.shuffle(d.labels);

    Rng noise_rng(spec.seed * 0x9e3779b97f4a7c15ull + noise_salt);
    d.data.resize(static_cast<size_t>(n * m));
    for (int64_t i = 0; i < n; ++i) {
        const int c = d.labels[static_cast<size_t>(i)];
        for (int64_t j = 0; j < m; ++j)
            d.data[static_cast<size_t>(i * m + j)] = static_cast<float>(
                means[static_cast<size_t>(c * m + j)] + spec.noise * noise_rng.normal());
    }
    return d;
}

void normalize_channels(Dataset& d, const std::vector<float>& mean,
                        const std::vector<float>& stddev) {
    const int64_t C = d.sample_shape[0];
    const int64_t hw = d.sample_numel() / C;
    for (int64_t i = 0; i < d.size(); ++i)
        for (int64_t c = 0; c < C; ++c) {
            float* p = d.data.data() + (i * C + c) * hw;
            for (int64_t j = 0; j < hw; ++j)
                p[j] = (p[j] - mean[static_cast<size_t>(c)]) / stddev[static_cast<size_t>(c)];
        }
}

Dataset load_cifar_files(const std::vector<std::string>& paths, bool normalize) {
    Dataset d;
    d.sample_shape = {3, 32, 32};
    const int64_t m = 3072;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cifar: cannot open " + path);
        in.seekg(0, std::ios::end);
        const int64_t bytes = in.tellg();
        in.seekg(0);
        if (bytes % 3073 != 0)
            throw std::runtime_error("cifar: " + path + " is not a batch file (size " +
                                     std::to_string(bytes) + " not a multiple of 3073)");
        const int64_t records = bytes / 3073;
        std::vector<unsigned char> raw(static_cast<size_t>(bytes));
        in.read(reinterpret_cast<char*>(raw.data()), bytes);
        const size_t base = d.data.size();
        d.data.resize(base + static_cast<size_t>(records * m));
        for (int64_t r = 0; r < records; ++r) {
            const unsigned char* rec = raw.data() + r * 3073;
            d.labels.push_back(static_cast<int>(rec[0]));
            for (int64_t j = 0; j < m; ++j)
                d.data[base + static_cast<size_t>(r * m + j)] =
                    static_cast<float>(rec[1 + j]) / 255.0f;
        }
    }
    if (normalize)
        normalize_channels(d, {0.4914f, 0.4822f, 0.4465f}, {0.2470f, 0.2435f, 0.2616f});
    return d;
}

void cap_subset(Dataset& d, int64_t subset) {
    if (subset <= 0 || subset >= d.size()) return;
    d.labels.resize(static_cast<size_t>(subset));
    d.data.resize(static_cast<size_t>(subset * d.sample_numel()));
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, bool normalize) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("idx: cannot open " + images_path);
    const uint32_t img_magic = read_be32(imgs, images_path);
    if (img_magic != 0x00000803)
        throw std::runtime_error("idx: magic mismatch in " + images_path + " (got 0x" +
                                 std::to_string(img_magic) + ", want 0x803 image file)");
    const int64_t n = read_be32(imgs, images_path);
    const int64_t h = read_be32(imgs, images_path);
    const int64_t w = read_be32(imgs, images_path);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error("idx: cannot open " + labels_path);
    const uint32_t lab_magic = read_be32(labs, labels_path);
    if (lab_magic != 0x00000801)
        throw std::runtime_error("idx: magic mismatch in " + labels_path + " (got 0x" +
                                 std::to_string(lab_magic) + ", want 0x801 label file)");
    const int64_t ln = read_be32(labs, labels_path);
    if (ln != n)
        throw std::runtime_error("idx: " + std::to_string(n) + " images but " +
                                 std::to_string(ln) + " labels");

    Dataset d;
    d.sample_shape = {1, h, w};
    d.data.resize(static_cast<size_t>(n * h * w));
    d.labels.resize(static_cast<size_t>(n));
    std::vector<unsigned char> row(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < n; ++i) {
        if (!imgs.read(reinterpret_cast<char*>(row.data()), h * w))
            throw std::runtime_error("idx: truncated image data in " + images_path);
        for (int64_t j = 0; j < h * w; ++j)
            d.data[static_cast<size_t>(i * h * w + j)] =
                static_cast<float>(row[static_cast<size_t>(j)]) / 255.0f;
        unsigned char lab;
        if (!labs.read(reinterpret_cast<char*>(&lab), 1))
            throw std::runtime_error("idx: truncated labels in " + labels_path);
        d.labels[static_cast<size_t>(i)] = static_cast<int>(lab);
    }
    if (normalize) normalize_channels(d, {0.1307f}, {0.3081f});
    return d;
}

DataPair load_dataset(const DatasetSpec& spec) {
    DataPair out;
    switch (spec.kind) {
        case DatasetSpec::Kind::Synthetic:
            out.train = synthetic_split(spec, spec.train_size, 0);
            out.test = synthetic_split(spec, spec.test_size, 1);
            break;
        case DatasetSpec::Kind::Idx:
            out.train = load_idx(spec.images, spec.labels, spec.normalize);
            out.test = spec.test_images.empty()
                           ? Dataset{out.train.sample_shape, {}, {}}
                           : load_idx(spec.test_images, spec.test_labels, spec.normalize);
            break;
        case DatasetSpec::Kind::Cifar10: {
            std::string dir = spec.dir;
            if (dir.empty()) {
                const char* env = std::getenv("EAST_DATA_DIR");
                if (!env)
                    throw std::runtime_error(
                        "cifar: no data directory (set data.dir or EAST_DATA_DIR)");
                dir = env;
            }
            std::vector<std::string> train_files;
            for (int i = 1; i <= 5; ++i)
                train_files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
            out.train = load_cifar_files(train_files, spec.normalize);
            out.test = load_cifar_files({dir + "/test_batch.bin"}, spec.normalize);
            break;
        }
    }
    cap_subset(out.train, spec.subset);
    return out;
}

}  // namespace east
