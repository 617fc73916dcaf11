#include "spacte/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "spacte/rng.hpp"

namespace spacte {

namespace fs = std::filesystem;

Tensor Dataset::batch(const std::vector<int>& ids) const {
    Tensor out(static_cast<int>(ids.size()), shape.channels, shape.height, shape.width);
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy(inputs[ids[i]].begin(), inputs[ids[i]].end(),
                  out.sample(static_cast<int>(i)));
    return out;
}

Tensor Dataset::single(int id) const {
    Tensor out(1, shape.channels, shape.height, shape.width);
    std::copy(inputs[id].begin(), inputs[id].end(), out.sample(0));
    return out;
}

namespace {

constexpr int kCifarRecord = 3073;
constexpr int kCifarPixels = 3 * 32 * 32;

void read_cifar_file(const std::string& file, Dataset& ds) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open CIFAR-10 file: " + file);
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    in.seekg(0);
    if (size % kCifarRecord != 0)
        throw std::runtime_error("truncated CIFAR-10 file " + file + ": size " +
                                 std::to_string(size) + " not divisible by 3073 (offset " +
                                 std::to_string(size - size % kCifarRecord) + ")");
    const long long records = size / kCifarRecord;
    std::vector<unsigned char> buf(kCifarRecord);
    for (long long r = 0; r < records; ++r) {
        in.read(reinterpret_cast<char*>(buf.data()), kCifarRecord);
        if (!in) throw std::runtime_error("read failure in " + file);
        if (buf[0] > 9)
            throw std::runtime_error("invalid label byte " + std::to_string(buf[0]) +
                                     " at record " + std::to_string(r) + " in " + file);
        ds.labels.push_back(buf[0]);
        std::vector<double> pixels(kCifarPixels);
        for (int i = 0; i < kCifarPixels; ++i) pixels[i] = buf[1 + i] / 255.0;
        ds.inputs.push_back(std::move(pixels));
        ds.original_index.push_back(static_cast<int>(ds.original_index.size()));
    }
}

}  // namespace

Dataset read_cifar10_binary(const std::string& path, const std::string& split) {
    Dataset ds;
    ds.shape = {3, 32, 32};
    ds.num_classes = 10;
    ds.split = split;
    if (fs::is_directory(path)) {
        if (split == "train") {
            for (int i = 1; i <= 5; ++i)
                read_cifar_file(path + "/data_batch_" + std::to_string(i) + ".bin", ds);
        } else {
            read_cifar_file(path + "/test_batch.bin", ds);
        }
    } else {
        read_cifar_file(path, ds);
    }
    return ds;
}

void write_cifar10_binary(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write CIFAR-10 file: " + path);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        unsigned char label = static_cast<unsigned char>(ds.labels[r]);
        out.put(static_cast<char>(label));
        for (double v : ds.inputs[r]) {
            const int byte = static_cast<int>(v * 255.0 + 0.5);
            out.put(static_cast<char>(byte < 0 ? 0 : (byte > 255 ? 255 : byte)));
        }
    }
}

BlobsDataset synthetic_blobs(int dim, double separation, double sigma_data,
                             int count, std::uint64_t seed) {
    if (separation <= 0.0) throw std::invalid_argument("separation must be positive");
    BlobsDataset out;
    out.data.shape = {dim, 1, 1};
    out.data.num_classes = 2;
    out.data.split = "synthetic";
    out.separator_w.assign(dim, 0.0);
    out.separator_w[0] = 1.0;
    out.separator_b = -0.5;
    Rng rng(sub_seed(seed, seed_tag::kData, 0));
    for (int i = 0; i < count; ++i) {
        const int label = i % 2;
        const double center = 0.5 + (label == 1 ? separation / 2.0 : -separation / 2.0);
        std::vector<double> x(dim);
        for (int d = 0; d < dim; ++d) {
            const double mu = d == 0 ? center : 0.5;
            x[d] = std::clamp(mu + sigma_data * rng.gaussian(), 0.0, 1.0);
        }
        out.margin.push_back(std::abs(x[0] - 0.5));
        out.data.inputs.push_back(std::move(x));
        out.data.labels.push_back(label);
        out.data.original_index.push_back(i);
    }
    return out;
}

Dataset subsample_every(const Dataset& ds, int stride) {
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    Dataset out;
    out.shape = ds.shape;
    out.num_classes = ds.num_classes;
    out.split = ds.split;
    for (std::size_t i = 0; i < ds.size(); i += stride) {
        out.inputs.push_back(ds.inputs[i]);
        out.labels.push_back(ds.labels[i]);
        out.original_index.push_back(ds.original_index[i]);
    }
    return out;
}

}  // namespace spacte
