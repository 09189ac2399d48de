#pragma once

#include <functional>
#include <string>
#include <vector>

#include "metadet/detector.hpp"
#include "metadet/synth.hpp"

namespace metadet {

struct MetaConfig {
    int64_t inner_steps = 4;
    double alpha_init = 0.001;
    double outer_lr = 0.0001;
    int64_t tasks_per_iteration = 8;
    int64_t first_order_epochs = 0;
    int64_t epochs = 1;
    int64_t iterations_per_epoch = 100;
    bool learn_alpha = true;
    double clip_norm = 10.0;
    std::vector<double> gamma_final = {0.05, 0.10, 0.2, 0.30, 0.35};

    void validate() const;
};

// Multi-step loss weights for one epoch: uniform at epoch 0, linearly
// annealed per component to the final vector, renormalized to sum 1.
std::vector<double> gamma_schedule(int64_t epoch, const MetaConfig& cfg);

// Scalar loss of a parameter assignment; closures capture the data.
using ParamLossFn = std::function<NodePtr(const ParamNodeMap&)>;

struct InnerTrajectory {
    std::vector<ParamNodeMap> steps;  // theta_0 .. theta_k
    ParamNodeMap alpha;               // learning-rate leaf nodes by name
};

// k-step inner GD with kernel-wise rates; every theta_j stays a
// differentiable function of theta_0 and alpha. With second_order=false the
// inner gradients are detached (first-order approximation).
InnerTrajectory inner_gd_nodes(const ParamSet& init, const ParamLossFn& support_loss, int64_t k,
                               bool second_order, bool alpha_requires_grad = true);

// Tensor-level k-step GD used at tracking time; returns all theta_0..theta_k.
std::vector<ParamSet> inner_gd(const ParamSet& init,
                               const std::function<NodePtr(const ParamNodeMap&)>& support_loss,
                               int64_t k);

NodePtr outer_loss(const InnerTrajectory& traj, const ParamLossFn& target_loss,
                   const std::vector<double>& gamma);

struct AdamState {
    std::map<std::string, Tensor> m;  // first moments (weights and "~alpha" keys)
    std::map<std::string, Tensor> v;
    int64_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Detector-level task loss closures.
ParamLossFn detector_sample_loss(const std::vector<Sample>& samples, const DetectorConfig& cfg);

struct MetaStepResult {
    double loss = 0;
    int64_t second_order = 0;  // 1 when second-order gradients were used
};

MetaStepResult meta_step(ParamSet& params, const std::vector<Task>& tasks,
                         const DetectorConfig& det_cfg, const MetaConfig& cfg, AdamState& adam,
                         int64_t epoch);

struct TrainRecord {
    int64_t iteration = 0;
    int64_t epoch = 0;
    double outer_loss = 0;
    double wall_ms = 0;
};

using TaskSource = std::function<std::vector<Task>(int64_t iteration, int64_t count)>;
using EpochHook = std::function<void(int64_t epoch, const ParamSet&, const AdamState&)>;

struct TrainResult {
    ParamSet params;
    AdamState adam;
    std::vector<TrainRecord> log;
    int64_t second_order_steps = 0;
};

TrainResult meta_train(const DetectorConfig& det_cfg, const MetaConfig& cfg,
                       const TaskSource& source, const ParamSet& init,
                       int64_t start_iteration = 0, const EpochHook& hook = nullptr,
                       const AdamState& initial_adam = {});

// Plain Adam training on labeled patches (no inner loop, no alpha): the
// standard-GD baseline the meta-trained detector is compared against.
TrainResult baseline_train(const DetectorConfig& det_cfg, const MetaConfig& cfg,
                           const TaskSource& source, const ParamSet& init);

// Adam state sidecar file.
void save_adam_state(const std::string& path, const AdamState& state);
AdamState load_adam_state(const std::string& path);

}  // namespace metadet
