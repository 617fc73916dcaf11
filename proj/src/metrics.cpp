#include "spacte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "spacte/losses.hpp"
#include "spacte/rng.hpp"

namespace spacte {

double acr(const std::vector<CertificationRecord>& records) {
    if (records.empty()) return 0.0;
    double acc = 0.0;
    for (const CertificationRecord& r : records)
        if (r.correct) acc += r.radius;
    return acc / static_cast<double>(records.size());
}

double certified_accuracy(const std::vector<CertificationRecord>& records, double r) {
    if (records.empty()) return 0.0;
    long long good = 0;
    for (const CertificationRecord& rec : records)
        if (rec.correct && rec.radius >= r) ++good;
    return static_cast<double>(good) / static_cast<double>(records.size());
}

std::string CertifiedCurve::to_csv() const {
    std::ostringstream os;
    os << "radius,accuracy\n";
    os.precision(10);
    for (std::size_t i = 0; i < radii.size(); ++i)
        os << radii[i] << ',' << accuracy[i] << '\n';
    return os.str();
}

CertifiedCurve certified_curve(const std::vector<CertificationRecord>& records,
                               double r_max, double step) {
    if (step <= 0.0) throw std::invalid_argument("curve step must be positive");
    CertifiedCurve curve;
    for (double r = 0.0; r <= r_max + 1e-12; r += step) {
        curve.radii.push_back(r);
        curve.accuracy.push_back(certified_accuracy(records, r));
    }
    return curve;
}

std::vector<double> log_prob_gap_samples(MultiHeadNetwork& net, const Tensor& x,
                                         int label, double sigma, int draws, Rng& rng) {
    if (x.n != 1) throw std::invalid_argument("log_prob_gap_samples expects one example");
    std::vector<double> gaps;
    gaps.reserve(draws);
    const int k = net.num_classes();
    for (int d = 0; d < draws; ++d) {
        Tensor noisy = x;
        for (double& v : noisy.v) v += sigma * rng.gaussian();
        const Tensor logits = net.forward_all_heads(noisy, Mode::Eval);
        const Tensor ens = ensemble_logits_batch(logits);
        std::span<const double> row(ens.sample(0), k);
        double best_other = -1e300;
        for (int c = 0; c < k; ++c) {
            if (c == label) continue;
            best_other = std::max(best_other, row[c]);
        }
        // log p_y - max log p_c: the log-sum-exp normalizers cancel.
        gaps.push_back(row[label] - best_other);
    }
    return gaps;
}

std::string histogram_csv(const std::vector<double>& values, int bins) {
    if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
    std::ostringstream os;
    os << "bin_left,bin_right,count\n";
    if (values.empty()) return os.str();
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    os.precision(10);
    if (hi == lo) {
        os << lo << ',' << hi << ',' << values.size() << '\n';
        return os.str();
    }
    const double width = (hi - lo) / bins;
    std::vector<long long> counts(bins, 0);
    for (double v : values) {
        int b = static_cast<int>((v - lo) / width);
        if (b >= bins) b = bins - 1;  // hi lands in the last bin
        ++counts[b];
    }
    for (int b = 0; b < bins; ++b)
        os << lo + b * width << ',' << lo + (b + 1) * width << ',' << counts[b] << '\n';
    return os.str();
}

namespace {

GroupStats group_stats(const std::vector<const SampleAnalysis*>& group) {
    GroupStats g;
    g.count = static_cast<int>(group.size());
    if (group.empty()) return g;
    g.empty = false;

    double mean = 0.0;
    for (const SampleAnalysis* s : group) mean += s->smoothed_loss;
    mean /= g.count;
    double var = 0.0;
    for (const SampleAnalysis* s : group) {
        const double d = s->smoothed_loss - mean;
        var += d * d;
    }
    g.mean_smoothed_loss = mean;
    g.var_smoothed_loss = var / g.count;

    std::size_t draws = group.front()->draw_correct.size();
    for (const SampleAnalysis* s : group) draws = std::min(draws, s->draw_correct.size());
    if (draws == 0) return g;
    double sum = 0.0, lo = 1.0, hi = 0.0;
    for (std::size_t j = 0; j < draws; ++j) {
        double correct = 0.0;
        for (const SampleAnalysis* s : group)
            if (s->draw_correct[j]) correct += 1.0;
        const double accuracy = correct / g.count;
        sum += accuracy;
        lo = std::min(lo, accuracy);
        hi = std::max(hi, accuracy);
    }
    g.mean_draw_accuracy = sum / static_cast<double>(draws);
    g.min_draw_accuracy = lo;
    g.max_draw_accuracy = hi;
    return g;
}

void format_group(std::ostringstream& os, const char* name, const GroupStats& g) {
    os << name << ": ";
    if (g.empty) {
        os << "empty\n";
        return;
    }
    os << g.count << " samples, smoothed loss " << g.mean_smoothed_loss << " (var "
       << g.var_smoothed_loss << "), accuracy " << g.mean_draw_accuracy << " [min "
       << g.min_draw_accuracy << ", max " << g.max_draw_accuracy << "]\n";
}

}  // namespace

std::string EasyHardReport::to_text() const {
    std::ostringstream os;
    os.precision(6);
    os << "radius threshold: " << threshold << '\n';
    format_group(os, "easy (radius above threshold)", easy);
    format_group(os, "hard (radius at or below threshold)", hard);
    return os.str();
}

EasyHardReport easy_hard_split(const std::vector<SampleAnalysis>& samples,
                               double threshold) {
    EasyHardReport report;
    report.threshold = threshold;
    std::vector<const SampleAnalysis*> easy, hard;
    for (const SampleAnalysis& s : samples)
        (s.radius > threshold ? easy : hard).push_back(&s);
    report.easy = group_stats(easy);
    report.hard = group_stats(hard);
    return report;
}

std::vector<SampleAnalysis> analyze_samples(MultiHeadNetwork& net, const Dataset& dataset,
                                            const std::vector<CertificationRecord>& records,
                                            double sigma, int m, int draws,
                                            std::uint64_t seed) {
    if (records.size() != dataset.size())
        throw std::invalid_argument("records and dataset sizes differ");
    const int k = net.num_classes();
    std::vector<SampleAnalysis> out(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const Tensor x = dataset.single(static_cast<int>(i));
        const int label = dataset.labels[i];
        Rng rng(sub_seed(seed, seed_tag::kNoise,
                         static_cast<std::uint64_t>(dataset.original_index[i])));
        SampleAnalysis& s = out[i];
        s.radius = records[i].correct ? records[i].radius : 0.0;

        std::vector<double> per_draw(m);
        for (int d = 0; d < m; ++d) {
            Tensor noisy = x;
            for (double& v : noisy.v) v += sigma * rng.gaussian();
            const Tensor ens = ensemble_logits_batch(net.forward_all_heads(noisy, Mode::Eval));
            per_draw[d] = cross_entropy(std::span<const double>(ens.sample(0), k), label);
        }
        s.smoothed_loss = smoothed_loss(per_draw);

        s.draw_correct.resize(draws);
        for (int d = 0; d < draws; ++d) {
            Tensor noisy = x;
            for (double& v : noisy.v) v += sigma * rng.gaussian();
            const Tensor ens = ensemble_logits_batch(net.forward_all_heads(noisy, Mode::Eval));
            int best = 0;
            for (int c = 1; c < k; ++c)
                if (ens.at(0, c, 0, 0) > ens.at(0, best, 0, 0)) best = c;
            s.draw_correct[d] = best == label;
        }
    }
    return out;
}

std::string runtime_report(const CostReport& cost, double train_seconds_per_epoch,
                           double certify_seconds_per_example) {
    std::ostringstream os;
    os << cost.to_text();
    os.precision(6);
    if (train_seconds_per_epoch >= 0.0)
        os << "train seconds/epoch: " << train_seconds_per_epoch << '\n';
    if (certify_seconds_per_example >= 0.0)
        os << "certify seconds/example: " << certify_seconds_per_example << '\n';
    return os.str();
}

}  // namespace spacte
