#ifndef SPACTE_METRICS_HPP
#define SPACTE_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "spacte/arch.hpp"
#include "spacte/certify.hpp"
#include "spacte/network.hpp"

namespace spacte {

// Mean certified radius: abstentions and misclassifications enter as 0, and
// the mean runs over every record, not just the certified ones.
double acr(const std::vector<CertificationRecord>& records);

// Fraction of records certified correct at radius >= r.
double certified_accuracy(const std::vector<CertificationRecord>& records, double r);

// radius,accuracy pairs on a uniform grid [0, r_max] with the given step.
struct CertifiedCurve {
    std::vector<double> radii;
    std::vector<double> accuracy;

    std::string to_csv() const;  // header "radius,accuracy"
};

CertifiedCurve certified_curve(const std::vector<CertificationRecord>& records,
                               double r_max, double step);

// Per-draw log-probability gap log p_y - max_{c != y} log p_c of the
// smoothed ensemble prediction under Gaussian corruptions of x.
std::vector<double> log_prob_gap_samples(MultiHeadNetwork& net, const Tensor& x,
                                         int label, double sigma, int draws, Rng& rng);

// Equal-width histogram; returns CSV "bin_left,bin_right,count" lines.
std::string histogram_csv(const std::vector<double>& values, int bins);

// Per-example measurements feeding the easy/hard split.
struct SampleAnalysis {
    double radius = 0.0;
    double smoothed_loss = 0.0;
    std::vector<bool> draw_correct;  // ensemble correctness per resampling
};

struct GroupStats {
    bool empty = true;
    int count = 0;
    double mean_smoothed_loss = 0.0;
    double var_smoothed_loss = 0.0;  // population variance
    double mean_draw_accuracy = 0.0;
    double min_draw_accuracy = 0.0;  // spread across resamplings
    double max_draw_accuracy = 0.0;
};

struct EasyHardReport {
    double threshold = 0.0;  // mean certified radius of the analyzed samples
    GroupStats easy;         // radius >  threshold
    GroupStats hard;         // radius <= threshold
    std::string to_text() const;
};

// Splits at the given radius threshold and aggregates loss statistics and
// the accuracy spread across resamplings per group.
EasyHardReport easy_hard_split(const std::vector<SampleAnalysis>& samples,
                               double threshold);

// Computes SampleAnalysis for each record by re-corrupting its input:
// smoothed loss from `m` draws, correctness from `draws` fresh resamplings.
std::vector<SampleAnalysis> analyze_samples(MultiHeadNetwork& net,
                                            const Dataset& dataset,
                                            const std::vector<CertificationRecord>& records,
                                            double sigma, int m, int draws,
                                            std::uint64_t seed);

// Human-readable cost summary: parameter/FLOP accounting plus measured
// timings when available (negative values mean "not measured").
std::string runtime_report(const CostReport& cost, double train_seconds_per_epoch,
                           double certify_seconds_per_example);

}  // namespace spacte

#endif  // SPACTE_METRICS_HPP
