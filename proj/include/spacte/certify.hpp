#ifndef SPACTE_CERTIFY_HPP
#define SPACTE_CERTIFY_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spacte/data.hpp"
#include "spacte/network.hpp"
#include "spacte/tensor.hpp"

namespace spacte {

struct CertifyConfig {
    int n0 = 100;            // selection draws
    long long n = 100000;    // estimation draws
    double alpha = 0.001;    // failure probability
    double sigma = 0.0;      // certification noise level
    int batch = 1000;        // draws per forward pass; never affects results
    std::uint64_t seed = 0;  // per-example streams derive from this
};

// One certified example. predicted == -1 means the procedure abstained;
// abstentions carry radius 0 and count as incorrect.
struct CertificationRecord {
    int index = 0;  // position in the original test set
    int label = 0;
    int predicted = -1;
    double radius = 0.0;
    bool correct = false;
    double seconds = 0.0;
};

// Hard classifier applied to a batch of noisy copies; fills one class id per
// batch row. Abstracts the network so statistical procedures can run against
// analytic classifiers in tests.
using BaseClassifier = std::function<void(const Tensor& batch, std::vector<int>& out)>;

// Wraps the multi-head network: argmax of the mean head logits, Eval mode.
BaseClassifier ensemble_classifier(MultiHeadNetwork& net);

// Class counts over `count` Gaussian corruptions of x (a single-sample
// tensor). Noise is consumed draw-by-draw from `rng`, so the batch size used
// for the forward passes cannot change the outcome.
std::vector<long long> sample_counts(const BaseClassifier& classify, const Tensor& x,
                                     int num_classes, long long count, double sigma,
                                     int batch, Rng& rng);

// Two-stage certification: n0 draws select the candidate class, n draws feed
// the exact one-sided lower confidence bound on its probability. Abstains
// when the bound does not exceed 1/2; otherwise the radius is
// sigma * Phi^{-1}(bound). Randomness comes solely from (seed, index).
CertificationRecord certify_example(const BaseClassifier& classify, const Tensor& x,
                                    int num_classes, int label, int index,
                                    const CertifyConfig& cfg);

// Abstaining prediction: n draws, two-sided binomial test on the top-two
// counts at level alpha. Returns the top class or -1.
int predict_example(const BaseClassifier& classify, const Tensor& x, int num_classes,
                    const CertifyConfig& cfg);

// Certifies every example of the dataset, `workers` threads working through
// the examples. Per-example seeds make the output independent of the thread
// count and of iteration order; records come back in dataset order.
std::vector<CertificationRecord> certify_dataset(const BaseClassifier& classify,
                                                 const Dataset& dataset,
                                                 const CertifyConfig& cfg,
                                                 int workers = 1);

// Tab-separated records: idx, label, predict, radius (3 decimals), correct,
// seconds. Round-trips through read_certification_tsv except for the radius
// rounding.
void write_certification_tsv(const std::string& path,
                             const std::vector<CertificationRecord>& records);
std::vector<CertificationRecord> read_certification_tsv(const std::string& path);

}  // namespace spacte

#endif  // SPACTE_CERTIFY_HPP
