#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "symploc/pipeline/model.hpp"

namespace symploc::pipeline {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second-moment adaptive steps with bias correction, one state per
// parameter name.
class Adam {
public:
    explicit Adam(AdamConfig config) : config_(config) {}
    void step(ParamStore& store, const std::map<std::string, std::vector<double>>& grads);
    std::size_t steps() const { return t_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamConfig config_;
    std::size_t t_ = 0;
    std::map<std::string, Moments> state_;
};

struct TrainConfig {
    std::size_t coarse_steps = 1800;
    std::size_t fine_steps = 200;
    std::size_t batch_size = 8;
    double lr_coarse = 5e-4;
    double lr_fine = 3e-4;
    std::uint64_t seed = 42;

    void validate() const;
};

enum class Phase { coarse, fine };

struct LossRecord {
    std::size_t step = 0;  // global step index across both phases
    Phase phase = Phase::coarse;
    double instance = 0, relation = 0, global = 0, fine = 0;
    double total = 0;
};

// Raised when a loss or gradient stops being finite; carries the batch that
// triggered it.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, std::size_t step, std::vector<int> query_ids, std::vector<int> submap_ids)
        : std::runtime_error(what), step(step), query_ids(std::move(query_ids)), submap_ids(std::move(submap_ids)) {}
    std::size_t step;
    std::vector<int> query_ids;
    std::vector<int> submap_ids;
};

struct TrainResult {
    std::vector<LossRecord> curve;
};

using StepCallback = std::function<void(const LossRecord&)>;

// Batches of distinct ground-truth submaps drawn from the train split.
// The coarse branches are optimized first, then the fine regressor.
TrainResult train(const Dataset& data, ParamStore& params, const ModelConfig& model, const TrainConfig& config,
                  const StepCallback& on_step = {});

// Batch sampler exposed for tests: query indices into `queries`.
std::vector<std::size_t> sample_batch(Rng& rng, const std::vector<const Query*>& queries, std::size_t batch_size);

}  // namespace symploc::pipeline
