#include "spacte/certify.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "spacte/rng.hpp"
#include "spacte/stats.hpp"

namespace spacte {

BaseClassifier ensemble_classifier(MultiHeadNetwork& net) {
    return [&net](const Tensor& batch, std::vector<int>& out) {
        const Tensor logits = net.forward_all_heads(batch, Mode::Eval);
        const Tensor ens = ensemble_logits_batch(logits);
        out.resize(batch.n);
        const int k = ens.c;
        for (int s = 0; s < batch.n; ++s) {
            int best = 0;
            for (int c = 1; c < k; ++c)
                if (ens.at(s, c, 0, 0) > ens.at(s, best, 0, 0)) best = c;
            out[s] = best;
        }
    };
}

std::vector<long long> sample_counts(const BaseClassifier& classify, const Tensor& x,
                                     int num_classes, long long count, double sigma,
                                     int batch, Rng& rng) {
    if (x.n != 1) throw std::invalid_argument("sample_counts expects a single example");
    if (batch < 1) throw std::invalid_argument("certify batch must be >= 1");
    std::vector<long long> counts(num_classes, 0);
    const std::size_t dim = x.v.size();
    std::vector<int> preds;
    long long done = 0;
    while (done < count) {
        const int chunk = static_cast<int>(std::min<long long>(batch, count - done));
        Tensor noisy(chunk, x.c, x.h, x.w);
        for (int s = 0; s < chunk; ++s)
            for (std::size_t i = 0; i < dim; ++i)
                noisy.v[s * dim + i] = x.v[i] + sigma * rng.gaussian();
        classify(noisy, preds);
        for (int s = 0; s < chunk; ++s) {
            if (preds[s] < 0 || preds[s] >= num_classes)
                throw std::runtime_error("base classifier produced class " +
                                         std::to_string(preds[s]));
            ++counts[preds[s]];
        }
        done += chunk;
    }
    return counts;
}

CertificationRecord certify_example(const BaseClassifier& classify, const Tensor& x,
                                    int num_classes, int label, int index,
                                    const CertifyConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(sub_seed(cfg.seed, seed_tag::kCertify, static_cast<std::uint64_t>(index)));

    const std::vector<long long> guess_counts =
        sample_counts(classify, x, num_classes, cfg.n0, cfg.sigma, cfg.batch, rng);
    const int guess = static_cast<int>(
        std::max_element(guess_counts.begin(), guess_counts.end()) - guess_counts.begin());

    const std::vector<long long> counts =
        sample_counts(classify, x, num_classes, cfg.n, cfg.sigma, cfg.batch, rng);
    const double p_lower = lower_conf_bound(counts[guess], cfg.n, cfg.alpha);

    CertificationRecord rec;
    rec.index = index;
    rec.label = label;
    if (p_lower > 0.5) {
        rec.predicted = guess;
        rec.radius = cfg.sigma * normal_quantile(p_lower);
        rec.correct = guess == label;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

int predict_example(const BaseClassifier& classify, const Tensor& x, int num_classes,
                    const CertifyConfig& cfg) {
    Rng rng(sub_seed(cfg.seed, seed_tag::kCertify, 0));
    const std::vector<long long> counts =
        sample_counts(classify, x, num_classes, cfg.n, cfg.sigma, cfg.batch, rng);
    int top1 = 0, top2 = -1;
    for (int c = 1; c < num_classes; ++c)
        if (counts[c] > counts[top1]) top1 = c;
    for (int c = 0; c < num_classes; ++c) {
        if (c == top1) continue;
        if (top2 < 0 || counts[c] > counts[top2]) top2 = c;
    }
    const long long na = counts[top1];
    const long long nb = top2 >= 0 ? counts[top2] : 0;
    return binomial_two_sided_p(na, na + nb, 0.5) <= cfg.alpha ? top1 : -1;
}

std::vector<CertificationRecord> certify_dataset(const BaseClassifier& classify,
                                                 const Dataset& dataset,
                                                 const CertifyConfig& cfg, int workers) {
    const std::size_t total = dataset.size();
    std::vector<CertificationRecord> records(total);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= total) return;
            records[i] = certify_example(classify, dataset.single(static_cast<int>(i)),
                                         dataset.num_classes, dataset.labels[i],
                                         dataset.original_index[i], cfg);
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return records;
}

void write_certification_tsv(const std::string& path,
                             const std::vector<CertificationRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write records file: " + path);
    out << "idx\tlabel\tpredict\tradius\tcorrect\ttime\n";
    for (const CertificationRecord& r : records) {
        out << r.index << '\t' << r.label << '\t' << r.predicted << '\t'
            << std::fixed << std::setprecision(3) << r.radius << '\t'
            << (r.correct ? 1 : 0) << '\t' << r.seconds << '\n';
        out.unsetf(std::ios::fixed);
    }
}

std::vector<CertificationRecord> read_certification_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open records file: " + path);
    std::vector<CertificationRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.rfind("idx", 0) == 0) continue;
        std::istringstream is(line);
        CertificationRecord r;
        int correct = 0;
        if (!(is >> r.index >> r.label >> r.predicted >> r.radius >> correct >> r.seconds))
            throw std::runtime_error("malformed record line in " + path + ": " + line);
        r.correct = correct != 0;
        records.push_back(r);
    }
    return records;
}

}  // namespace spacte
