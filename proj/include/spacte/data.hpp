#ifndef SPACTE_DATA_HPP
#define SPACTE_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "spacte/arch.hpp"
#include "spacte/tensor.hpp"

namespace spacte {

struct Dataset {
    InputShape shape;
    int num_classes = 0;
    std::string split;
    std::vector<std::vector<double>> inputs;  // each in [0,1]^d, CHW order
    std::vector<int> labels;
    // Original positions in the source set; subsampling preserves them so
    // certification records keep their true indices.
    std::vector<int> original_index;

    std::size_t size() const { return inputs.size(); }
    Tensor batch(const std::vector<int>& ids) const;
    Tensor single(int id) const;
};

// CIFAR-10 binary format: 3073-byte records, 1 label byte then 3x32x32
// channel-planar pixel bytes, scaled to [0,1] by /255. `path` may be a
// single .bin file or a directory containing data_batch_*.bin / test_batch.bin.
Dataset read_cifar10_binary(const std::string& path, const std::string& split = "train");

// Inverse of the reader, for round-trip checks and fixtures.
void write_cifar10_binary(const Dataset& ds, const std::string& path);

// Two Gaussian clusters at 0.5 +/- (separation/2) along the first input
// dimension, clipped to the unit box. The analytic Bayes separator
// (first coordinate vs 0.5) and each point's margin distance come along
// for oracle tests.
struct BlobsDataset {
    Dataset data;
    // Separator w.x + b = 0 with w = e1, b = -0.5; class 1 on the + side.
    std::vector<double> separator_w;
    double separator_b = 0.0;
    std::vector<double> margin;  // |x1 - 0.5| per example (post-clipping)
};

BlobsDataset synthetic_blobs(int dim, double separation, double sigma_data,
                             int count, std::uint64_t seed);

// Keep indices 0, stride, 2*stride, ... preserving order and original indices.
Dataset subsample_every(const Dataset& ds, int stride);

}  // namespace spacte

#endif  // SPACTE_DATA_HPP
