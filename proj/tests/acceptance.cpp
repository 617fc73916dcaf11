// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fail. argv[1] must point at the command-line binary.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "spacte/arch.hpp"
#include "spacte/certify.hpp"
#include "spacte/config.hpp"
#include "spacte/data.hpp"
#include "spacte/losses.hpp"
#include "spacte/metrics.hpp"
#include "spacte/schedule.hpp"
#include "spacte/stats.hpp"
#include "spacte/trainer.hpp"

using namespace spacte;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool ok, const std::string& what) {
    std::cout << (ok ? "PASS" : "FAIL") << " " << criterion << ": " << what << std::endl;
    if (!ok) ++g_failures;
}

bool approx(double a, double b, double tol) { return std::abs(a - b) <= tol; }

int run_command(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    if (status < 0) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// drops the trailing wall-clock column of every record line
std::string strip_time_column(const std::string& tsv) {
    std::istringstream is(tsv);
    std::ostringstream os;
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t last = line.rfind('\t');
        os << (last == std::string::npos ? line : line.substr(0, last)) << '\n';
    }
    return os.str();
}

void criterion_1_2() {
    const ArchitectureSpec spec = resnet110_cifar_spec(5, true);
    const CostReport r = estimate_flops(spec);
    const bool counts_ok = r.params_total_single == 1730714 &&
                           r.params_total_multihead == 6995138 &&
                           r.params_total_k_dnns == 8653570;
    std::ostringstream c1;
    c1 << "residual-network parameter counts " << r.params_total_single << " / "
       << r.params_total_multihead << " / " << r.params_total_k_dnns
       << " (expected 1730714 / 6995138 / 8653570)";
    report(1, counts_ok, c1.str());

    const double ratio = r.flops_multihead / r.flops_single;
    std::ostringstream c2;
    c2 << "flops ratio " << ratio << " within 10% of 2.320";
    report(2, std::abs(ratio - 2.320) <= 0.10 * 2.320, c2.str());
}

void criterion_3() {
    const BlobsDataset blobs = synthetic_blobs(8, 0.6, 0.1, 200, 2025);
    const BaseClassifier oracle = [](const Tensor& batch, std::vector<int>& out) {
        out.resize(batch.n);
        const int dim = batch.per_sample();
        for (int s = 0; s < batch.n; ++s) out[s] = batch.v[s * dim] > 0.5 ? 1 : 0;
    };
    CertifyConfig cfg;
    cfg.n0 = 100;
    cfg.n = 1000;
    cfg.alpha = 0.001;
    cfg.sigma = 0.25;
    cfg.batch = 500;
    cfg.seed = 99;
    int violations = 0;
    for (std::size_t i = 0; i < blobs.data.size(); ++i) {
        const CertificationRecord rec =
            certify_example(oracle, blobs.data.single(static_cast<int>(i)), 2,
                            blobs.data.labels[i], static_cast<int>(i), cfg);
        if (rec.radius > blobs.margin[i] + 1e-12) ++violations;
    }
    std::ostringstream msg;
    msg << "certified radius exceeded the analytic margin on " << violations
        << " of 200 points (allowed 5)";
    report(3, violations <= 5, msg.str());
}

void criterion_4() {
    bool ok = true;
    for (long long n : {10LL, 100LL, 100000LL})
        for (double alpha : {0.05, 0.001}) {
            ok = ok && approx(lower_conf_bound(0, n, alpha), 0.0, 1e-9);
            ok = ok && approx(lower_conf_bound(n, n, alpha), std::pow(alpha, 1.0 / n), 1e-9);
        }
    report(4, ok, "exact confidence-bound closed forms at k = 0 and k = n");
}

void criterion_5() {
    bool ok = true;
    ok = ok && spl_weight(0.5, 1.0) == 1.0;
    ok = ok && approx(spl_weight(std::log(3.0), 0.0), 0.5, 1e-9);
    const double lambda = std::log(10.0);
    ok = ok && approx(spl_weight(lambda + 1.0, lambda), 1.1 / (1.0 + std::exp(1.0)), 1e-9);

    const auto w1 = head_weights(std::vector<double>{0.3, 0.7}, 0.2);
    ok = ok && approx(w1[0], 0.8, 1e-9) && approx(w1[1], 0.2, 1e-9);
    const auto w2 = head_weights(std::vector<double>{1, 2, 3, 4, 5}, 0.8);
    for (double v : w2) ok = ok && approx(v, 0.2, 1e-9);
    const auto w3 = head_weights(std::vector<double>{0.5, 0.5, 0.9}, 0.2);
    ok = ok && approx(w3[0], 0.8, 1e-9) && approx(w3[1], 0.1, 1e-9) &&
         approx(w3[2], 0.1, 1e-9);

    ok = ok && approx(cosine_diversity_loss({{1, 0}, {0, 1}}), 0.0, 1e-9);
    ok = ok && approx(cosine_diversity_loss({{1, 0}, {1, 0}}), 2.0, 1e-9);
    ok = ok && approx(cosine_diversity_loss({{2, 0}, {1, 1}}), 2.0 * std::sqrt(2.0), 1e-9);

    // objective: L=2, m=1, N=1, omega [0.8,0.2], shifted nu [0.5,1], CE [1,2]
    Tensor logits(1, 2, 2, 1);
    for (int k = 0; k < 2; ++k) {
        logits.at(0, k, 0, 0) = 0.0;
        logits.at(0, k, 1, 0) = std::log(std::exp(k + 1.0) - 1.0);
    }
    TeachingWeights nu(1, 2);
    nu.at(0, 0) = 0.5;
    nu.at(0, 1) = 1.0;
    const double obj =
        spacte_objective({logits}, std::vector<int>{0}, nu, std::vector<double>{0.8, 0.2}, {});
    ok = ok && approx(obj, 0.4, 1e-9);
    report(5, ok, "loss closed forms (sample weights, head weights, diversity, objective)");
}

void criterion_6() {
    Rng rng(6);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> hv(3, std::vector<double>(32));
        for (auto& v : hv) {
            double norm = 0.0;
            for (double& x : v) {
                x = rng.gaussian();
                norm += x * x;
            }
            norm = std::sqrt(norm);
            const double target = 0.5 + 1.5 * rng.uniform();
            for (double& x : v) x *= target / norm;
        }
        const auto grad = cosine_diversity_grad(hv);
        const double eps = 1e-5;
        for (int k = 0; k < 3; ++k)
            for (int d = 0; d < 32; ++d) {
                auto plus = hv, minus = hv;
                plus[k][d] += eps;
                minus[k][d] -= eps;
                const double fd =
                    (cosine_diversity_loss(plus) - cosine_diversity_loss(minus)) / (2 * eps);
                const double scale = std::max({1.0, std::abs(fd), std::abs(grad[k][d])});
                worst = std::max(worst, std::abs(grad[k][d] - fd) / scale);
            }
    }
    std::ostringstream msg;
    msg << "diversity-loss gradient vs finite differences, worst relative error " << worst;
    report(6, worst <= 1e-4, msg.str());
}

void criterion_7() {
    const LambdaSchedule s{std::log(10.0), 1.0, 100};
    const bool endpoints =
        lambda_at_epoch(s, 1) == s.lambda_ini && lambda_at_epoch(s, 100) == s.lambda_lst;
    const double expected = std::log(10.0) + (1.0 - std::log(10.0)) / 2.0;
    const bool interior = approx(lambda_at_epoch(s, 10), expected, 1e-9);
    report(7, endpoints && interior, "threshold schedule endpoints exact, interior value correct");
}

struct DeskRun {
    bool ok = false;
    std::string tsv_path;  // first certification output
};

DeskRun criterion_8(const std::string& cli) {
    DeskRun result;
    const fs::path root = fs::temp_directory_path() / "spacte_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);

    const std::string cfg_path = (root / "desk.cfg").string();
    {
        std::ofstream cfg(cfg_path);
        cfg << "arch.preset = mlp\n"
               "arch.heads = 3\n"
               "arch.classes = 2\n"
               "arch.mlp.widths = 32,32\n"
               "noise.sigma = 0.25\n"
               "train.epochs = 20\n"
               "train.batch = 64\n"
               "train.m = 2\n"
               "train.epsilon = 0.2\n"
               "train.lambda_lst = 1.0\n"
               "train.lr = 0.1\n"
               "train.checkpoint_every = 10\n"
               "seed = 7\n"
               "certify.n0 = 100\n"
               "certify.n = 1000\n"
               "certify.alpha = 0.001\n"
               "certify.stride = 20\n"
               "data.kind = blobs\n"
               "data.blobs.dim = 8\n"
               "data.blobs.count = 1024\n"
               "data.blobs.test_count = 2000\n"  // stride 20 -> 100 points
               "data.blobs.separation = 0.6\n"
               "data.blobs.sigma = 0.1\n";
    }
    auto out = [&](const char* name) { return (root / name).string(); };

    bool ok = true;
    for (const char* dir : {"t1", "t2"}) {
        const int rc = run_command(cli + " train --config " + cfg_path + " --set out.dir=" +
                                   out(dir) + " > " + out(dir) + ".log 2>&1");
        if (rc != 0) {
            report(8, false, std::string("training run failed, see ") + out(dir) + ".log");
            return result;
        }
    }
    ok = ok && read_file(out("t1") + "/checkpoint-final.ckpt") ==
                   read_file(out("t2") + "/checkpoint-final.ckpt");

    struct CertRun {
        const char* dir;
        const char* workers;
    } runs[] = {{"c1", "1"}, {"c2", "1"}, {"c4", "4"}};
    for (const CertRun& r : runs) {
        const int rc = run_command(cli + " certify --config " + cfg_path +
                                   " --checkpoint " + out("t1") + "/checkpoint-final.ckpt" +
                                   " --set out.dir=" + out(r.dir) +
                                   " --set certify.workers=" + r.workers + " > " +
                                   out(r.dir) + ".log 2>&1");
        if (rc != 0) {
            report(8, false, std::string("certification run failed, see ") + out(r.dir) + ".log");
            return result;
        }
    }
    const std::string base = strip_time_column(read_file(out("c1") + "/certify.tsv"));
    ok = ok && !base.empty();
    ok = ok && base == strip_time_column(read_file(out("c2") + "/certify.tsv"));
    ok = ok && base == strip_time_column(read_file(out("c4") + "/certify.tsv"));

    report(8, ok, "desk-scale runs bit-identical across repeats and worker counts");
    result.ok = ok;
    result.tsv_path = out("c1") + "/certify.tsv";
    return result;
}

void criterion_9(const DeskRun& run) {
    if (!run.ok) {
        report(9, false, "skipped: desk-scale run unavailable");
        return;
    }
    const auto records = read_certification_tsv(run.tsv_path);
    const double at_zero = certified_accuracy(records, 0.0);
    const double mean_radius = acr(records);
    std::ostringstream msg;
    msg << "certified accuracy at r=0 " << at_zero << " (>= 0.90), mean certified radius "
        << mean_radius << " (>= 0.15)";
    report(9, at_zero >= 0.90 && mean_radius >= 0.15, msg.str());
}

void criterion_10() {
    RunConfig cfg;
    cfg.arch_preset = "mlp";
    cfg.heads = 1;
    cfg.classes = 2;
    cfg.mlp_widths = {16, 16};
    cfg.sigma = 0.25;
    cfg.m = 2;
    cfg.circular_teaching = false;
    cfg.seed = 13;
    const ArchitectureSpec arch = cfg.make_arch(4);
    const BlobsDataset blobs = synthetic_blobs(4, 0.6, 0.1, 8, 3);
    std::vector<int> ids = {0, 1, 2, 3, 4, 5, 6, 7};
    const Tensor batch = blobs.data.batch(ids);
    const std::vector<int> labels(blobs.data.labels.begin(), blobs.data.labels.end());

    TrainState a(arch);
    a.net.init(31);
    train_iteration(a, batch, labels, 0.0, 0.05, cfg);

    // plain Gaussian-augmentation baseline on the same draws
    TrainState b(arch);
    b.net.init(31);
    {
        const int m = cfg.m, N = 8, K = 2;
        Rng rng(sub_seed(cfg.seed, seed_tag::kNoise, 0));
        std::vector<Tensor> noisy;
        for (int i = 0; i < m; ++i) {
            Tensor t = batch;
            for (double& v : t.v) v += *cfg.sigma * rng.gaussian();
            noisy.push_back(std::move(t));
        }
        b.net.zero_grad();
        for (int i = 0; i < m; ++i) {
            ForwardCache cache;
            const Tensor logits = b.net.forward_all_heads(noisy[i], Mode::Train, &cache);
            Tensor dl(N, 1, K, 1);
            for (int n = 0; n < N; ++n) {
                std::vector<double> row = {logits.at(n, 0, 0, 0), logits.at(n, 0, 1, 0)};
                const auto g = cross_entropy_grad(row, labels[n]);
                for (int c = 0; c < K; ++c) dl.at(n, 0, c, 0) = g[c] / (m * N);
            }
            b.net.backward(cache, dl);
        }
        std::vector<ParamRef> params = b.net.params();
        b.opt.step(params, 0.05);
    }

    const auto pa = a.net.flatten_params();
    const auto pb = b.net.flatten_params();
    double worst = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i)
        worst = std::max(worst, std::abs(pa[i] - pb[i]) /
                                    std::max(1.0, std::abs(pb[i])));
    std::ostringstream msg;
    msg << "single-head step vs Gaussian baseline step, worst parameter deviation " << worst;
    report(10, worst <= 1e-12, msg.str());
}

void criterion_11(const DeskRun& run) {
    if (!run.ok) {
        report(11, false, "skipped: desk-scale run unavailable");
        return;
    }
    const auto records = read_certification_tsv(run.tsv_path);
    double max_radius = 0.0;
    for (const auto& r : records) max_radius = std::max(max_radius, r.radius);

    const double step = 1e-4;
    double area = 0.0;
    for (double r = step; r <= max_radius + step; r += step)
        area += certified_accuracy(records, r) * step;
    const double mean_radius = acr(records);
    const bool area_ok =
        mean_radius > 0.0 && std::abs(area - mean_radius) <= 0.01 * mean_radius;

    const CertifiedCurve curve = certified_curve(records, max_radius + 0.25, 0.05);
    bool monotone = true;
    for (std::size_t i = 1; i < curve.accuracy.size(); ++i)
        monotone = monotone && curve.accuracy[i] <= curve.accuracy[i - 1];

    std::ostringstream msg;
    msg << "curve area " << area << " vs mean certified radius " << mean_radius
        << " (within 1%), curve monotone: " << (monotone ? "yes" : "no");
    report(11, area_ok && monotone, msg.str());
}

void criterion_12(const std::string& cli) {
    const fs::path root = fs::temp_directory_path() / "spacte_acceptance";
    fs::create_directories(root);
    const std::string cfg_path = (root / "full_scale.cfg").string();
    {
        std::ofstream cfg(cfg_path);
        cfg << "arch.preset = resnet110\n"
               "arch.heads = 5\n"
               "arch.classes = 10\n"
               "noise.sigma = 0.25\n"
               "train.epochs = 150\n"
               "train.batch = 256\n"
               "train.m = 2\n"
               "train.epsilon = 0.8\n"
               "train.lambda_lst = 1.0\n"
               "train.lr = 0.1\n"
               "train.lr_decay = 0.1\n"
               "train.lr_period = 50\n"
               "train.momentum = 0.9\n"
               "train.nesterov = true\n"
               "train.weight_decay = 0.0001\n"
               "certify.n0 = 100\n"
               "certify.n = 100000\n"
               "certify.alpha = 0.001\n"
               "certify.stride = 20\n"
               "data.kind = cifar10\n"
               "data.path = /data/cifar10\n";
    }
    // the CLI must accept the full-scale hyperparameters (no training here;
    // those results are documented expectations, not desk-reproducible)
    const int rc = run_command(cli + " count --config " + cfg_path +
                               " --resnet110-reference > " +
                               (root / "count.log").string() + " 2>&1");
    bool ok = rc == 0;
    try {
        const RunConfig c = parse_config_file(cfg_path, false);
        const RunConfig back = parse_and_validate(render(c), false);
        ok = ok && render(back) == render(c);
    } catch (const std::exception&) {
        ok = false;
    }
    report(12, ok,
           "full-scale hyperparameter configuration validates and round-trips; "
           "full-scale result tables remain out of desk-scale scope");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <path-to-cli>\n";
        return 2;
    }
    const std::string cli = argv[1];

    criterion_1_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    const DeskRun desk = criterion_8(cli);
    criterion_9(desk);
    criterion_10();
    criterion_11(desk);
    criterion_12(cli);

    if (g_failures > 0) {
        std::cout << g_failures << " criteria failed" << std::endl;
        return 1;
    }
    std::cout << "all criteria passed" << std::endl;
    return 0;
}
