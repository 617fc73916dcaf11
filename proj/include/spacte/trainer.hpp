#ifndef SPACTE_TRAINER_HPP
#define SPACTE_TRAINER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spacte/config.hpp"
#include "spacte/data.hpp"
#include "spacte/losses.hpp"
#include "spacte/network.hpp"
#include "spacte/schedule.hpp"

namespace spacte {

// SGD with Nesterov momentum; weight decay skips normalization parameters.
struct SgdOptimizer {
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 1e-4;
    std::vector<std::vector<double>> velocity;  // one buffer per ParamRef

    void step(std::vector<ParamRef>& params, double lr);
};

struct IterationLog {
    std::vector<double> head_mean_smoothed_loss;  // per head
    std::vector<double> easy_fraction;            // per head, share of nu == 1
    double cosine_loss = 0.0;
    int omega_argmin = 0;
    double objective = 0.0;
};

struct TrainState {
    MultiHeadNetwork net;
    SgdOptimizer opt;
    int epoch = 0;            // completed epochs
    std::uint64_t iteration = 0;  // global iteration counter, drives noise sub-seeds

    explicit TrainState(const ArchitectureSpec& spec) : net(spec) {}
};

struct TrainReport {
    std::uint64_t iterations = 0;
    double initial_smoothed_loss = 0.0;  // mean over heads, first iteration
    double final_smoothed_loss = 0.0;    // mean over heads, last iteration
    std::vector<std::string> epoch_lines;
    double seconds_per_epoch = 0.0;
};

// One step of the circular-teaching algorithm: sample m Gaussian draws,
// smoothed losses, SPL weights, head weights, circular shift, variant
// objective, one optimizer step.
IterationLog train_iteration(TrainState& state, const Tensor& batch,
                             const std::vector<int>& labels, double lambda,
                             double lr, const RunConfig& cfg);

// Full epoch loop with per-epoch lambda/lr schedules, seeded shuffling and
// checkpointing. `resume_from` continues a serialized run; the result is
// bit-identical to the uninterrupted run.
TrainReport train(const RunConfig& cfg, const Dataset& dataset, TrainState& state,
                  const std::optional<std::string>& resume_from = std::nullopt);

// Versioned checkpoint container: self-describing header (format version,
// architecture, config hash, training sigma, epoch) followed by raw double
// payloads for parameters, normalization state and optimizer velocity.
struct CheckpointHeader {
    int version = 1;
    ArchitectureSpec arch;
    std::uint64_t config_hash = 0;
    double sigma = 0.0;
    int epoch = 0;
    std::uint64_t iteration = 0;
};

void save_checkpoint(const std::string& path, const TrainState& state,
                     const RunConfig& cfg);
CheckpointHeader read_checkpoint_header(const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace spacte

#endif  // SPACTE_TRAINER_HPP
