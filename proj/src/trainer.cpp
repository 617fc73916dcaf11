#include "spacte/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "spacte/rng.hpp"

namespace spacte {

using nlohmann::json;

void SgdOptimizer::step(std::vector<ParamRef>& params, double lr) {
    if (velocity.size() != params.size()) {
        velocity.resize(params.size());
        for (std::size_t j = 0; j < params.size(); ++j)
            velocity[j].assign(params[j].value->size(), 0.0);
    }
    for (std::size_t j = 0; j < params.size(); ++j) {
        auto& theta = *params[j].value;
        auto& grad = *params[j].grad;
        auto& v = velocity[j];
        const double wd = params[j].decay ? weight_decay : 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = grad[i] + wd * theta[i];
            v[i] = momentum * v[i] + g;
            theta[i] -= lr * (nesterov ? g + momentum * v[i] : v[i]);
        }
    }
}

namespace {

// Pad-4 random crop plus horizontal flip, drawn per sample. Runs on the
// iteration rng before any noise draw so augmentation and noise stay on one
// reproducible stream.
Tensor augment_batch(const Tensor& batch, Rng& rng) {
    constexpr int pad = 4;
    Tensor out(batch.n, batch.c, batch.h, batch.w);
    for (int s = 0; s < batch.n; ++s) {
        const int dy = static_cast<int>(rng.below(2 * pad + 1)) - pad;
        const int dx = static_cast<int>(rng.below(2 * pad + 1)) - pad;
        const bool flip = rng.below(2) == 1;
        for (int c = 0; c < batch.c; ++c)
            for (int y = 0; y < batch.h; ++y)
                for (int x = 0; x < batch.w; ++x) {
                    const int sy = y + dy;
                    const int sx0 = flip ? batch.w - 1 - x : x;
                    const int sx = sx0 + dx;
                    double v = 0.0;
                    if (sy >= 0 && sy < batch.h && sx >= 0 && sx < batch.w)
                        v = batch.at(s, c, sy, sx);
                    out.at(s, c, y, x) = v;
                }
    }
    return out;
}

VariantConfig variant_config(const RunConfig& cfg) {
    VariantConfig vc;
    vc.kind = cfg.variant_kind();
    vc.c1 = cfg.c1;
    vc.c2 = cfg.c2;
    vc.c3 = cfg.c3;
    vc.attack_steps = cfg.attack_steps;
    vc.attack_step_size = cfg.attack_step_size;
    return vc;
}

}  // namespace

IterationLog train_iteration(TrainState& state, const Tensor& batch,
                             const std::vector<int>& labels, double lambda,
                             double lr, const RunConfig& cfg) {
    if (!cfg.sigma) throw ConfigError("noise.sigma required");
    const double sigma = *cfg.sigma;
    const int N = batch.n;
    const int L = state.net.num_heads();
    const int K = state.net.num_classes();
    const int m = cfg.m;
    const VariantConfig vc = variant_config(cfg);

    Rng rng(sub_seed(cfg.seed, seed_tag::kNoise, state.iteration));

    Tensor clean = (cfg.augment && batch.h > 1) ? augment_batch(batch, rng) : batch;

    // SmoothMix runs its attack before the training forward passes so its
    // Eval-mode probes never see this iteration's batch statistics.
    SmoothMixData mix;
    if (vc.kind == VariantKind::SmoothMix) {
        Rng mix_rng(sub_seed(cfg.seed, seed_tag::kSmoothMix, state.iteration));
        mix = smoothmix_prepare(state.net, clean, labels, vc, sigma, m, mix_rng);
    }

    state.net.zero_grad();

    // m corrupted copies, each through a cached Train-mode forward pass.
    std::vector<Tensor> noisy;
    noisy.reserve(m);
    for (int i = 0; i < m; ++i) {
        Tensor t = clean;
        for (double& v : t.v) v += sigma * rng.gaussian();
        noisy.push_back(std::move(t));
    }
    std::vector<ForwardCache> caches(m);
    std::vector<Tensor> per_draw_logits;
    per_draw_logits.reserve(m);
    for (int i = 0; i < m; ++i)
        per_draw_logits.push_back(
            state.net.forward_all_heads(noisy[i], Mode::Train, &caches[i]));

    // Smoothed per-sample-per-head losses.
    TeachingWeights smoothed(N, L);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < L; ++k) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) {
                std::span<const double> row(&per_draw_logits[i].at(n, k, 0, 0), K);
                acc += cross_entropy(row, labels[n]);
            }
            const double val = acc / m;
            if (!std::isfinite(val))
                throw std::runtime_error("non-finite smoothed loss at sample " +
                                         std::to_string(n) + " head " + std::to_string(k));
            smoothed.at(n, k) = val;
        }

    TeachingWeights nu(N, L);  // defaults to 1
    if (cfg.circular_teaching)
        for (int n = 0; n < N; ++n)
            for (int k = 0; k < L; ++k)
                nu.at(n, k) = spl_weight(smoothed.at(n, k), lambda);

    std::vector<double> head_loss(L, 0.0);
    for (int k = 0; k < L; ++k) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n) acc += smoothed.at(n, k);
        head_loss[k] = acc / N;
    }
    const std::vector<double> omega = head_weights(head_loss, cfg.epsilon);
    const TeachingWeights nu_shift = cfg.circular_teaching ? circular_shift(nu) : nu;

    // Classification gradient: omega_k * nu_shift(n,k) / (m N L) per draw.
    std::vector<Tensor> dlogits(m, Tensor(N, L, K, 1));
    const double denom = static_cast<double>(m) * N * L;
    for (int i = 0; i < m; ++i)
        for (int n = 0; n < N; ++n)
            for (int k = 0; k < L; ++k) {
                const double scale = omega[k] * nu_shift.at(n, k) / denom;
                std::span<const double> row(&per_draw_logits[i].at(n, k, 0, 0), K);
                const std::vector<double> g = cross_entropy_grad(row, labels[n]);
                for (int c = 0; c < K; ++c)
                    dlogits[i].at(n, k, c, 0) += scale * g[c];
            }

    std::vector<std::vector<double>> head_vectors;
    if (L >= 2) {
        head_vectors.reserve(L);
        for (int k = 0; k < L; ++k) head_vectors.push_back(state.net.head_param_vector(k));
    }

    double objective = spacte_objective(per_draw_logits, labels, nu_shift, omega,
                                        head_vectors, cfg.normalized_cosine);

    // Variant terms share the omega/nu weighting but are already averaged
    // over draws internally, so the discretization weight is 1/(N L).
    TeachingWeights coeff(N, L);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < L; ++k)
            coeff.at(n, k) = omega[k] * nu_shift.at(n, k) / (static_cast<double>(N) * L);

    Tensor mix_logits;
    ForwardCache mix_cache;
    Tensor mix_dlogits;
    if (vc.kind == VariantKind::Consistency) {
        objective += consistency_value_grad(per_draw_logits, vc.c1, vc.c2, coeff, dlogits);
    } else if (vc.kind == VariantKind::SmoothMix) {
        mix_logits = state.net.forward_all_heads(mix.x_mix, Mode::Train, &mix_cache);
        mix_dlogits = Tensor(N, L, K, 1);
        objective += smoothmix_value_grad(mix_logits, mix.y_mix, vc.c3, coeff, mix_dlogits);
    }

    for (int i = 0; i < m; ++i) state.net.backward(caches[i], dlogits[i]);
    if (vc.kind == VariantKind::SmoothMix) state.net.backward(mix_cache, mix_dlogits);

    double cosine = 0.0;
    if (L >= 2) {
        cosine = cosine_diversity_loss(head_vectors, cfg.normalized_cosine);
        const auto cos_grads = cosine_diversity_grad(head_vectors, cfg.normalized_cosine);
        for (int k = 0; k < L; ++k) {
            std::size_t off = 0;
            for (ParamRef& p : state.net.head_params(k)) {
                for (double& g : *p.grad) g += cos_grads[k][off++];
            }
        }
    }

    std::vector<ParamRef> params = state.net.params();
    state.opt.momentum = cfg.momentum;
    state.opt.nesterov = cfg.nesterov;
    state.opt.weight_decay = cfg.weight_decay;
    state.opt.step(params, lr);
    ++state.iteration;

    IterationLog log;
    log.head_mean_smoothed_loss = head_loss;
    log.easy_fraction.assign(L, 0.0);
    for (int k = 0; k < L; ++k) {
        int easy = 0;
        for (int n = 0; n < N; ++n)
            if (nu.at(n, k) == 1.0) ++easy;
        log.easy_fraction[k] = static_cast<double>(easy) / N;
    }
    log.cosine_loss = cosine;
    log.omega_argmin = static_cast<int>(
        std::max_element(omega.begin(), omega.end()) - omega.begin());
    log.objective = objective;
    return log;
}

namespace {

json arch_to_json(const ArchitectureSpec& spec) {
    json j;
    j["name"] = spec.name;
    j["input"] = {spec.input.channels, spec.input.height, spec.input.width};
    json layers = json::array();
    for (const LayerDesc& d : spec.layers) {
        layers.push_back({{"kind", static_cast<int>(d.kind)},
                          {"out_channels", d.out_channels},
                          {"kernel", d.kernel},
                          {"stride", d.stride},
                          {"bias", d.bias},
                          {"blocks", d.blocks},
                          {"out_features", d.out_features}});
    }
    j["layers"] = std::move(layers);
    j["split_index"] = spec.split_index;
    j["num_heads"] = spec.num_heads;
    j["num_classes"] = spec.num_classes;
    j["input_mean"] = spec.input_mean;
    j["input_std"] = spec.input_std;
    return j;
}

ArchitectureSpec arch_from_json(const json& j) {
    ArchitectureSpec spec;
    spec.name = j.at("name").get<std::string>();
    const auto& in = j.at("input");
    spec.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
    for (const auto& lj : j.at("layers")) {
        LayerDesc d;
        d.kind = static_cast<LayerKind>(lj.at("kind").get<int>());
        d.out_channels = lj.at("out_channels").get<int>();
        d.kernel = lj.at("kernel").get<int>();
        d.stride = lj.at("stride").get<int>();
        d.bias = lj.at("bias").get<bool>();
        d.blocks = lj.at("blocks").get<int>();
        d.out_features = lj.at("out_features").get<int>();
        spec.layers.push_back(d);
    }
    spec.split_index = j.at("split_index").get<int>();
    spec.num_heads = j.at("num_heads").get<int>();
    spec.num_classes = j.at("num_classes").get<int>();
    spec.input_mean = j.at("input_mean").get<std::vector<double>>();
    spec.input_std = j.at("input_std").get<std::vector<double>>();
    spec.validate();
    return spec;
}

constexpr const char* kCheckpointMagic = "SPACTECK 1";

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in, std::size_t count) {
    std::vector<double> v(count);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint payload");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state,
                     const RunConfig& cfg) {
    auto& net = const_cast<MultiHeadNetwork&>(state.net);
    const std::vector<double> params = net.flatten_params();
    const std::vector<double> norm = net.flatten_norm_state();
    std::vector<double> vel;
    for (const auto& buf : state.opt.velocity) vel.insert(vel.end(), buf.begin(), buf.end());

    json header;
    header["version"] = 1;
    header["arch"] = arch_to_json(net.spec());
    header["config_hash"] = config_hash(cfg);
    header["sigma"] = cfg.sigma.value_or(0.0);
    header["epoch"] = state.epoch;
    header["iteration"] = state.iteration;
    header["counts"] = {{"params", params.size()},
                        {"norm", norm.size()},
                        {"velocity", vel.size()}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << kCheckpointMagic << '\n' << header.dump() << '\n';
    write_doubles(out, params);
    write_doubles(out, norm);
    write_doubles(out, vel);
    if (!out) throw std::runtime_error("write failure on checkpoint: " + path);
}

namespace {

json read_header_json(std::ifstream& in, const std::string& path) {
    std::string magic, header_line;
    if (!std::getline(in, magic) || magic != kCheckpointMagic)
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    if (!std::getline(in, header_line))
        throw std::runtime_error("checkpoint missing header: " + path);
    return json::parse(header_line);
}

}  // namespace

CheckpointHeader read_checkpoint_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    const json h = read_header_json(in, path);
    CheckpointHeader out;
    out.version = h.at("version").get<int>();
    out.arch = arch_from_json(h.at("arch"));
    out.config_hash = h.at("config_hash").get<std::uint64_t>();
    out.sigma = h.at("sigma").get<double>();
    out.epoch = h.at("epoch").get<int>();
    out.iteration = h.at("iteration").get<std::uint64_t>();
    return out;
}

TrainState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    const json h = read_header_json(in, path);
    if (h.at("version").get<int>() != 1)
        throw std::runtime_error("unsupported checkpoint version in " + path);
    const ArchitectureSpec spec = arch_from_json(h.at("arch"));

    TrainState state(spec);
    state.epoch = h.at("epoch").get<int>();
    state.iteration = h.at("iteration").get<std::uint64_t>();

    const std::size_t n_params = h.at("counts").at("params").get<std::size_t>();
    const std::size_t n_norm = h.at("counts").at("norm").get<std::size_t>();
    const std::size_t n_vel = h.at("counts").at("velocity").get<std::size_t>();
    if (n_params != state.net.num_params())
        throw std::runtime_error("checkpoint parameter count mismatch: file has " +
                                 std::to_string(n_params) + ", architecture needs " +
                                 std::to_string(state.net.num_params()));
    state.net.load_flat_params(read_doubles(in, n_params));
    state.net.load_flat_norm_state(read_doubles(in, n_norm));
    if (n_vel > 0) {
        const std::vector<double> flat = read_doubles(in, n_vel);
        std::vector<ParamRef> refs = state.net.params();
        std::size_t off = 0;
        state.opt.velocity.clear();
        for (ParamRef& p : refs) {
            const std::size_t len = p.value->size();
            if (off + len > flat.size())
                throw std::runtime_error("checkpoint velocity payload too short");
            state.opt.velocity.emplace_back(flat.begin() + off, flat.begin() + off + len);
            off += len;
        }
        if (off != flat.size())
            throw std::runtime_error("checkpoint velocity payload size mismatch");
    }
    return state;
}

TrainReport train(const RunConfig& cfg, const Dataset& dataset, TrainState& state,
                  const std::optional<std::string>& resume_from) {
    if (!cfg.sigma) throw ConfigError("noise.sigma required");
    if (resume_from) {
        TrainState loaded = load_checkpoint(*resume_from);
        const std::uint64_t want = config_hash(cfg);
        CheckpointHeader header = read_checkpoint_header(*resume_from);
        if (header.config_hash != want)
            throw std::runtime_error("checkpoint was produced by a different configuration");
        state = std::move(loaded);
    } else {
        state.net.init(cfg.seed);
        state.epoch = 0;
        state.iteration = 0;
        state.opt.velocity.clear();
    }

    LambdaSchedule lam{cfg.lambda_ini_value(),
                       cfg.lambda_lst.value_or(cfg.lambda_ini_value()), cfg.epochs};
    LrSchedule lrs{cfg.lr, cfg.lr_decay, cfg.lr_period,
                   cfg.momentum, cfg.nesterov, cfg.weight_decay};

    std::filesystem::create_directories(cfg.out_dir);

    TrainReport report;
    bool first_iter = true;
    const auto t0 = std::chrono::steady_clock::now();
    for (int epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
        const double lambda =
            cfg.circular_teaching
                ? (cfg.epochs >= 2 ? lambda_at_epoch(lam, epoch) : lam.lambda_ini)
                : 0.0;
        if (cfg.circular_teaching && lambda < 0.0)
            std::cerr << "warning: lambda is negative (" << lambda << ") at epoch "
                      << epoch << "; every per-sample weight will be damped\n";
        const double lr = lr_at_epoch(lrs, epoch);

        std::vector<int> order(dataset.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(sub_seed(cfg.seed, seed_tag::kShuffle,
                                 static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        std::vector<double> epoch_head_loss(state.net.num_heads(), 0.0);
        double epoch_cosine = 0.0;
        int iters = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            std::vector<int> ids(order.begin() + start, order.begin() + stop);
            Tensor batch = dataset.batch(ids);
            std::vector<int> labels(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i) labels[i] = dataset.labels[ids[i]];

            IterationLog log = train_iteration(state, batch, labels, lambda, lr, cfg);
            ++report.iterations;
            double mean_loss = 0.0;
            for (double v : log.head_mean_smoothed_loss) mean_loss += v;
            mean_loss /= log.head_mean_smoothed_loss.size();
            if (first_iter) {
                report.initial_smoothed_loss = mean_loss;
                first_iter = false;
            }
            report.final_smoothed_loss = mean_loss;
            for (std::size_t k = 0; k < epoch_head_loss.size(); ++k)
                epoch_head_loss[k] += log.head_mean_smoothed_loss[k];
            epoch_cosine += log.cosine_loss;
            ++iters;
        }
        state.epoch = epoch;

        std::ostringstream line;
        line.precision(6);
        line << "epoch " << epoch << " lambda " << lambda << " lr " << lr << " loss";
        for (double v : epoch_head_loss) line << ' ' << v / std::max(iters, 1);
        line << " cosine " << epoch_cosine / std::max(iters, 1);
        report.epoch_lines.push_back(line.str());

        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
            save_checkpoint(cfg.out_dir + "/checkpoint-" + std::to_string(epoch) + ".ckpt",
                            state, cfg);
    }
    save_checkpoint(cfg.out_dir + "/checkpoint-final.ckpt", state, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    const int done = cfg.epochs - (resume_from ? read_checkpoint_header(*resume_from).epoch : 0);
    report.seconds_per_epoch =
        std::chrono::duration<double>(t1 - t0).count() / std::max(done, 1);
    return report;
}

}  // namespace spacte
