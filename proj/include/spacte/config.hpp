#ifndef SPACTE_CONFIG_HPP
#define SPACTE_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spacte/arch.hpp"
#include "spacte/losses.hpp"

namespace spacte {

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat key=value configuration with '#' comments. Every default is
// documented by `defaults_text()`. Environment variables with prefix
// SPACTE_ (dots become underscores, uppercase) override file values.
struct RunConfig {
    // architecture
    std::string arch_preset = "mlp";  // mlp | conv-small | resnet110
    int heads = 5;
    int classes = 10;
    int split = -1;  // -1 = preset default
    std::vector<int> mlp_widths = {32, 32, 32, 32};
    int in_channels = 3, in_height = 32, in_width = 32;

    // noise level; required, no default: training and certification must
    // state it explicitly.
    std::optional<double> sigma;

    // training
    int epochs = 150;
    int batch = 256;
    int m = 2;
    double epsilon = 0.8;
    std::string variant = "gaussian";  // gaussian | consistency | smoothmix
    double c1 = 0.0, c2 = 0.0, c3 = 0.0;
    int attack_steps = 0;
    double attack_step_size = 0.0;
    bool circular_teaching = true;
    std::optional<double> lambda_ini;  // default ln(classes)
    std::optional<double> lambda_lst;  // required when circular_teaching
    double lr = 0.1, lr_decay = 0.1;
    int lr_period = 50;
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 1e-4;
    bool normalized_cosine = false;
    bool augment = false;
    std::uint64_t seed = 0;
    int checkpoint_every = 10;

    // certification
    int n0 = 100;
    long long n_samples = 100000;
    double alpha = 0.001;
    int certify_batch = 1000;
    int stride = 20;
    int max_examples = -1;  // -1 = all of the subsample
    int workers = 1;

    // data
    std::string data_kind = "blobs";  // blobs | cifar10
    std::string data_path;
    int blobs_dim = 8;
    int blobs_count = 2000;
    int blobs_test_count = 400;
    double blobs_separation = 0.6;
    double blobs_sigma = 0.1;

    std::string out_dir = "out";

    double lambda_ini_value() const;  // ln(classes) unless set
    VariantKind variant_kind() const;
    // Builds the architecture spec; input_dim is taken from the dataset for
    // the mlp preset.
    ArchitectureSpec make_arch(int input_dim) const;
};

RunConfig parse_and_validate(const std::string& text, bool apply_env = true);
RunConfig parse_config_file(const std::string& path, bool apply_env = true);

// Full key=value dump; parse(render(c)) == c.
std::string render(const RunConfig& cfg);

// Defaults with the required noise.sigma left as a commented placeholder.
std::string defaults_text();

// FNV-1a hash of the rendered config, stored in checkpoints.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace spacte

#endif  // SPACTE_CONFIG_HPP
