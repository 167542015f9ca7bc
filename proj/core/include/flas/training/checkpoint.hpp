#pragma once

#include "flas/training/trainer.hpp"

#include <filesystem>

namespace flas::train {

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const TrainConfig& config, const std::filesystem::path& path);

struct LoadedCheckpoint {
    TrainState state;
    TrainConfig config;
};

// Refuses files of another version or built against a different base shape.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const lm::LanguageModel& base);

}  // namespace flas::train
