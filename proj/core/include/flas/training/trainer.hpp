#pragma once

#include "flas/base_lm/model.hpp"
#include "flas/flow/flow_block.hpp"
#include "flas/numcore/optim.hpp"
#include "flas/training/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace flas::train {

struct TrainConfig {
    double lr = 5e-5;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    std::size_t batch_size = 8;
    std::size_t warmup = 100;
    std::size_t max_steps = 2000;
    std::size_t val_interval = 100;
    std::size_t patience = 10;
    double lambda_div = 0.1;
    double t_min = 0.5;
    double t_max = 2.0;
    double val_T = 2.0;
    std::size_t max_len = 64;
    std::uint64_t seed = 0;

    void validate() const;
    void write_header(std::map<std::string, std::string>& header, const std::string& prefix = "train.") const;
    static TrainConfig read_header(const std::map<std::string, std::string>& header,
                                   const std::string& prefix = "train.");
    bool operator==(const TrainConfig&) const = default;
};

// A training row with its frozen layer-l activations precomputed.
struct PreparedExample {
    std::vector<TokenId> ids;
    std::vector<std::int64_t> labels;
    Tensor hidden;  // [len, d]
    std::size_t concept_index = 0;
};

struct TrainData {
    std::vector<std::string> concepts;
    std::vector<Tensor> encodings;  // phi(c) per concept
    std::vector<PreparedExample> train;
    std::vector<PreparedExample> val;
    std::vector<std::vector<std::size_t>> train_by_concept;
};

TrainData prepare_data(const lm::LanguageModel& base, const std::vector<TrainingExample>& train,
                       const std::vector<TrainingExample>& val, std::size_t max_len);

struct LossParts {
    Tensor total;
    Tensor lm;
    Tensor div;
    std::vector<Tensor> pooled;  // final-step velocity, mean over positions
};

// Steers every row over horizon T, resumes the frozen base from layer l and
// scores the response tokens; total = lm + lambda * div.
LossParts flow_loss(const flow::FlowModel& flow, const lm::LanguageModel& base,
                    const std::vector<const PreparedExample*>& rows, const std::vector<Tensor>& encodings, double T,
                    double lambda);

struct TrainState {
    flow::FlowModel flow;
    AdamW optimizer;
    std::size_t step = 0;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_step = 0;
    std::size_t bad_validations = 0;
    std::uint64_t seed = 0;

    TrainState(flow::FlowModel flow_model, const TrainConfig& config);
    // The optimizer holds handles to the flow's tensors, so a copy would
    // update the original's parameters.
    TrainState(const TrainState&) = delete;
    TrainState& operator=(const TrainState&) = delete;
    TrainState(TrainState&&) = default;
    TrainState& operator=(TrainState&&) = default;
};

struct StepStats {
    std::size_t step = 0;  // 1-based index of the step just taken
    double lm_loss = 0.0;
    double div_loss = 0.0;
    double T = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
};

// Generator for step s: a pure function of (seed, s), so resumed runs draw
// the same batches and horizons.
std::mt19937_64 step_rng(std::uint64_t seed, std::size_t step);

// Stratified draw: at least two concepts whenever two are available.
std::vector<const PreparedExample*> sample_batch(const TrainData& data, std::size_t batch_size, std::mt19937_64& rng);

StepStats train_step(TrainState& state, const lm::LanguageModel& base, const TrainData& data,
                     const TrainConfig& config);

// Token-weighted response loss over the validation rows at horizon T.
double validation_loss(const flow::FlowModel& flow, const lm::LanguageModel& base,
                       const std::vector<PreparedExample>& rows, const std::vector<Tensor>& encodings, double T);

// Pooled final-step velocities of `rows` at horizon T.
std::vector<Tensor> pooled_velocities(const flow::FlowModel& flow, const std::vector<PreparedExample>& rows,
                                      const std::vector<Tensor>& encodings, double T);

struct TrainResult {
    double best_val = 0.0;
    std::size_t best_step = 0;
    double final_val = 0.0;
    std::size_t steps_run = 0;
    bool early_stopped = false;
    std::vector<StepStats> log;
};

using StepCallback = std::function<void(const StepStats&, const double* val_loss)>;

// Runs until max_steps or patience exhaustion. With a non-empty out_dir the
// best state goes to out_dir/flow.ckpt, the latest to out_dir/last.ckpt and
// one row per step to out_dir/train_log.csv. On return state.flow holds the
// best parameters.
TrainResult train_loop(TrainState& state, const lm::LanguageModel& base, const TrainData& data,
                       const TrainConfig& config, const std::filesystem::path& out_dir = {},
                       const StepCallback& callback = {});

}  // namespace flas::train
