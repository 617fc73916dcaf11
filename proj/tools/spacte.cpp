// Command-line front end: train, certify, analyze, count, print-defaults.
// Exit codes: 0 success, 1 failed assertion, 2 configuration error,
// 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spacte/certify.hpp"
#include "spacte/config.hpp"
#include "spacte/data.hpp"
#include "spacte/metrics.hpp"
#include "spacte/trainer.hpp"

namespace {

using namespace spacte;

constexpr int kExitOk = 0;
constexpr int kExitAssert = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value, applied after the file
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--config", args.config_path, "configuration file (key = value lines)");
    cmd->add_option("--set", args.overrides, "override, e.g. --set noise.sigma=0.25")
        ->take_all();
}

RunConfig load_config(const ConfigArgs& args) {
    std::ostringstream text;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw ConfigError("cannot open config file: " + args.config_path);
        text << in.rdbuf() << '\n';
    }
    for (const std::string& kv : args.overrides) text << kv << '\n';
    return parse_and_validate(text.str());
}

int config_input_dim(const RunConfig& cfg) {
    if (cfg.data_kind == "blobs") return cfg.blobs_dim;
    return cfg.in_channels * cfg.in_height * cfg.in_width;
}

Dataset load_dataset(const RunConfig& cfg, bool test_split) {
    if (cfg.data_kind == "blobs") {
        if (cfg.classes != 2)
            throw ConfigError("arch.classes: blobs data has 2 classes");
        // Train and test sets come from disjoint sub-seeded streams.
        const std::uint64_t seed = sub_seed(cfg.seed, seed_tag::kData, test_split ? 1 : 0);
        const int count = test_split ? cfg.blobs_test_count : cfg.blobs_count;
        BlobsDataset blobs = synthetic_blobs(cfg.blobs_dim, cfg.blobs_separation,
                                             cfg.blobs_sigma, count, seed);
        blobs.data.split = test_split ? "test" : "train";
        return std::move(blobs.data);
    }
    return read_cifar10_binary(cfg.data_path, test_split ? "test" : "train");
}

bool same_layer(const LayerDesc& a, const LayerDesc& b) {
    return a.kind == b.kind && a.out_channels == b.out_channels && a.kernel == b.kernel &&
           a.stride == b.stride && a.bias == b.bias && a.blocks == b.blocks &&
           a.out_features == b.out_features;
}

bool same_arch(const ArchitectureSpec& a, const ArchitectureSpec& b) {
    if (a.input.channels != b.input.channels || a.input.height != b.input.height ||
        a.input.width != b.input.width || a.split_index != b.split_index ||
        a.num_heads != b.num_heads || a.num_classes != b.num_classes ||
        a.layers.size() != b.layers.size() || a.input_mean != b.input_mean ||
        a.input_std != b.input_std)
        return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i)
        if (!same_layer(a.layers[i], b.layers[i])) return false;
    return true;
}

int cmd_train(const ConfigArgs& args, const std::string& resume) {
    RunConfig cfg = load_config(args);
    if (!cfg.sigma) throw ConfigError("noise.sigma required");
    Dataset train_set = load_dataset(cfg, /*test_split=*/false);
    ArchitectureSpec arch = cfg.make_arch(train_set.shape.channels *
                                          train_set.shape.height * train_set.shape.width);
    TrainState state(arch);
    std::optional<std::string> resume_opt;
    if (!resume.empty()) resume_opt = resume;
    TrainReport report = train(cfg, train_set, state, resume_opt);

    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream log(cfg.out_dir + "/train.log");
    for (const std::string& line : report.epoch_lines) {
        std::cout << line << '\n';
        log << line << '\n';
    }
    std::cout << "iterations " << report.iterations << " loss "
              << report.initial_smoothed_loss << " -> " << report.final_smoothed_loss
              << " seconds/epoch " << report.seconds_per_epoch << '\n';
    std::cout << "checkpoint " << cfg.out_dir << "/checkpoint-final.ckpt\n";
    return kExitOk;
}

int cmd_certify(const ConfigArgs& args, const std::string& checkpoint, double grid_step,
                double grid_max) {
    RunConfig cfg = load_config(args);
    if (!cfg.sigma) throw ConfigError("noise.sigma required");
    Dataset test_set = load_dataset(cfg, /*test_split=*/true);
    const ArchitectureSpec arch = cfg.make_arch(test_set.shape.channels *
                                                test_set.shape.height * test_set.shape.width);

    CheckpointHeader header = read_checkpoint_header(checkpoint);
    if (!same_arch(header.arch, arch))
        throw ConfigError("checkpoint architecture does not match the configuration");
    if (header.sigma != *cfg.sigma)
        std::cerr << "warning: model was trained at sigma " << header.sigma
                  << " but certification uses " << *cfg.sigma << '\n';
    TrainState state = load_checkpoint(checkpoint);

    Dataset subset = subsample_every(test_set, cfg.stride);
    if (cfg.max_examples >= 0 &&
        subset.size() > static_cast<std::size_t>(cfg.max_examples)) {
        subset.inputs.resize(cfg.max_examples);
        subset.labels.resize(cfg.max_examples);
        subset.original_index.resize(cfg.max_examples);
    }

    CertifyConfig cc{cfg.n0, cfg.n_samples, cfg.alpha, *cfg.sigma, cfg.certify_batch,
                     cfg.seed};
    BaseClassifier classify = ensemble_classifier(state.net);
    std::vector<CertificationRecord> records =
        certify_dataset(classify, subset, cc, cfg.workers);

    std::filesystem::create_directories(cfg.out_dir);
    const std::string tsv = cfg.out_dir + "/certify.tsv";
    write_certification_tsv(tsv, records);

    double seconds = 0.0;
    for (const CertificationRecord& r : records) seconds += r.seconds;
    std::cout << "examples " << records.size() << '\n';
    std::cout << "acr " << acr(records) << '\n';
    CertifiedCurve curve = certified_curve(records, grid_max, grid_step);
    for (std::size_t i = 0; i < curve.radii.size(); ++i)
        std::cout << "certified_accuracy@" << curve.radii[i] << ' ' << curve.accuracy[i]
                  << '\n';
    if (!records.empty())
        std::cout << "seconds/example " << seconds / records.size() << '\n';
    std::cout << "records " << tsv << '\n';
    return kExitOk;
}

int cmd_analyze(const ConfigArgs& args, const std::string& mode,
                const std::string& checkpoint, const std::string& records_path,
                int index, int draws, int bins) {
    RunConfig cfg = load_config(args);
    if (!cfg.sigma) throw ConfigError("noise.sigma required");
    TrainState state = load_checkpoint(checkpoint);
    Dataset test_set = load_dataset(cfg, /*test_split=*/true);

    if (mode == "gap-histogram") {
        if (index < 0 || static_cast<std::size_t>(index) >= test_set.size())
            throw ConfigError("--index out of range for the test set");
        Rng rng(sub_seed(cfg.seed, seed_tag::kNoise,
                         static_cast<std::uint64_t>(test_set.original_index[index])));
        std::vector<double> gaps = log_prob_gap_samples(
            state.net, test_set.single(index), test_set.labels[index], *cfg.sigma, draws,
            rng);
        std::cout << histogram_csv(gaps, bins);
        return kExitOk;
    }
    if (mode == "easy-hard") {
        std::vector<CertificationRecord> records = read_certification_tsv(records_path);
        if (records.empty()) throw ConfigError("records file has no rows: " + records_path);
        Dataset subset = subsample_every(test_set, cfg.stride);
        if (records.size() < subset.size()) {
            subset.inputs.resize(records.size());
            subset.labels.resize(records.size());
            subset.original_index.resize(records.size());
        }
        std::vector<SampleAnalysis> samples = analyze_samples(
            state.net, subset, records, *cfg.sigma, cfg.m, draws, cfg.seed);
        double mean_radius = 0.0;
        for (const SampleAnalysis& s : samples) mean_radius += s.radius;
        if (!samples.empty()) mean_radius /= static_cast<double>(samples.size());
        std::cout << easy_hard_split(samples, mean_radius).to_text();
        return kExitOk;
    }
    throw ConfigError("--mode: expected gap-histogram or easy-hard");
}

int cmd_count(const ConfigArgs& args, bool reference_check) {
    RunConfig cfg = load_config(args);
    const ArchitectureSpec arch = cfg.make_arch(config_input_dim(cfg));
    const CostReport report = estimate_flops(arch);
    std::cout << report.to_text();
    if (report.flops_single > 0.0)
        std::cout << "flops ratio (multi-head / single): "
                  << report.flops_multihead / report.flops_single << '\n';

    if (reference_check) {
        const ArchitectureSpec ref = resnet110_cifar_spec(5, /*split_after_group2=*/true);
        const CostReport r = count_params(ref);
        struct Check {
            const char* name;
            std::int64_t expected, got;
        } checks[] = {
            {"single-network parameters", 1730714, r.params_total_single},
            {"multi-head parameters", 6995138, r.params_total_multihead},
            {"independent-ensemble parameters", 8653570, r.params_total_k_dnns},
        };
        for (const Check& c : checks) {
            if (c.expected != c.got) {
                std::cerr << "reference mismatch: " << c.name << " expected " << c.expected
                          << " got " << c.got << '\n';
                return kExitAssert;
            }
            std::cout << "reference ok: " << c.name << " = " << c.got << '\n';
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-head randomized-smoothing toolkit"};
    app.require_subcommand(1);
    app.footer("Configuration keys and defaults:\n" + spacte::defaults_text());

    ConfigArgs train_args, certify_args, analyze_args, count_args;
    std::string resume, certify_ckpt, analyze_ckpt, analyze_mode = "easy-hard";
    std::string records_path;
    int analyze_index = 0, analyze_draws = 10, analyze_bins = 20;
    double grid_step = 0.25, grid_max = 1.5;
    bool reference_check = false;

    CLI::App* train_cmd = app.add_subcommand("train", "train a multi-head model");
    add_config_options(train_cmd, train_args);
    train_cmd->add_option("--resume", resume, "continue from a checkpoint");

    CLI::App* certify_cmd = app.add_subcommand("certify", "certify a trained model");
    add_config_options(certify_cmd, certify_args);
    certify_cmd->add_option("--checkpoint", certify_ckpt, "trained model checkpoint")
        ->required();
    certify_cmd->add_option("--grid-step", grid_step, "radius grid step");
    certify_cmd->add_option("--grid-max", grid_max, "radius grid maximum");

    CLI::App* analyze_cmd = app.add_subcommand("analyze", "inspect a trained model");
    add_config_options(analyze_cmd, analyze_args);
    analyze_cmd->add_option("--checkpoint", analyze_ckpt, "trained model checkpoint")
        ->required();
    analyze_cmd->add_option("--mode", analyze_mode, "gap-histogram | easy-hard");
    analyze_cmd->add_option("--records", records_path, "certification records (easy-hard)");
    analyze_cmd->add_option("--index", analyze_index, "test example (gap-histogram)");
    analyze_cmd->add_option("--draws", analyze_draws, "corruption resamplings");
    analyze_cmd->add_option("--bins", analyze_bins, "histogram bins");

    CLI::App* count_cmd = app.add_subcommand("count", "parameter and FLOP accounting");
    add_config_options(count_cmd, count_args);
    count_cmd->add_flag("--resnet110-reference", reference_check,
                        "assert the published reference parameter counts");

    CLI::App* defaults_cmd =
        app.add_subcommand("print-defaults", "dump every configuration default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*train_cmd) return cmd_train(train_args, resume);
        if (*certify_cmd) return cmd_certify(certify_args, certify_ckpt, grid_step, grid_max);
        if (*analyze_cmd)
            return cmd_analyze(analyze_args, analyze_mode, analyze_ckpt, records_path,
                               analyze_index, analyze_draws, analyze_bins);
        if (*count_cmd) return cmd_count(count_args, reference_check);
        if (*defaults_cmd) {
            std::cout << defaults_text();
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}
