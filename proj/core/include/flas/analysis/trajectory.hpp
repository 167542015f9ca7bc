#pragma once

#include "flas/base_lm/model.hpp"
#include "flas/flow/flow_block.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace flas::analysis {

inline constexpr std::size_t kDefaultGenLength = 40;

struct TrajectoryRecord {
    std::string method = "flas";
    std::size_t concept_id = 0;
    std::size_t prompt_id = 0;
    std::string concept_text;
    std::string prompt;
    double T = 0.0;
    std::size_t prompt_length = 0;  // rows [0, prompt_length) are prompt tokens
    std::vector<Tensor> states;      // h_0 .. h_N, each [seq, d]
    std::vector<Tensor> velocities;  // v_0 .. v_{N-1}, each [seq, d]
    std::vector<TokenId> tokens;     // every position of the recorded sequence
    std::vector<TokenId> generated;

    std::size_t n_steps() const { return velocities.size(); }
    std::size_t seq_len() const { return states.empty() ? 0 : states.front().dim(0); }
    // Rows analysed as "generated positions"; the whole sequence when
    // nothing was generated.
    std::size_t first_analysed_row() const;
    // Checks N+1 states, N velocities and h_{k+1} - h_k = (T/N) v_k.
    void validate(double tol = 1e-5) const;
};

// Greedy-generates gen_len steered tokens, then replays prompt + generated
// tokens through the steered model once more with recording on. n_steps == 0
// keeps the checkpoint's N.
TrajectoryRecord record_trajectory(const lm::LanguageModel& base, const flow::FlowModel& flow,
                                   const flow::ConceptCache& cache, const std::string& prompt, double T,
                                   std::size_t gen_len = kDefaultGenLength, bool stop_at_eos = true,
                                   std::size_t n_steps = 0);

// Single-step record for a static hook such as additive or affine steering:
// h_1 = hook(h_0), v_0 = (h_1 - h_0) / strength.
TrajectoryRecord record_static(const lm::LanguageModel& base, const lm::Hook& hook, double strength,
                               const std::string& method, const std::string& prompt,
                               std::size_t gen_len = kDefaultGenLength, bool stop_at_eos = true);

void write_trajectory(const std::filesystem::path& path, const TrajectoryRecord& record);
TrajectoryRecord read_trajectory(const std::filesystem::path& path);
// Every *.traj file in a directory, sorted by file name.
std::vector<TrajectoryRecord> read_trajectory_dir(const std::filesystem::path& dir);

}  // namespace flas::analysis
