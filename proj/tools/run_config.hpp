#pragma once

#include "flas/flow/config.hpp"
#include "flas/training/base_setup.hpp"
#include "flas/training/trainer.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace flas::cli {

using KeyValues = std::map<std::string, std::string>;

// Everything a run depends on. The per-component seeds (corpus, pretrain,
// base init, training) all follow `seed`.
struct RunConfig {
    train::BaseSetup base;
    flow::FlowConfig flow;
    train::TrainConfig train;
    std::filesystem::path out_dir = "runs/default";
    std::filesystem::path cache_dir;   // empty disables the base cache
    std::filesystem::path corpus_dir;  // empty generates the toy corpus
    std::uint64_t seed = 0;
    std::size_t baseline_per_side = 72;

    // Toy-scale defaults used when a key is not given.
    static RunConfig defaults();

    KeyValues to_map() const;
    // Unknown keys and malformed values raise ConfigError naming the key.
    static RunConfig from_map(const KeyValues& kv);
};

// "key = value" lines; '#' starts a comment line.
KeyValues read_kv_file(const std::filesystem::path& path);
void write_kv_file(const std::filesystem::path& path, const KeyValues& kv);

// Defaults, then the file (if any), then each "key=value" override in order.
RunConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

}  // namespace flas::cli
