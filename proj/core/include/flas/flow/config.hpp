#pragma once

#include <cstddef>
#include <map>
#include <string>

namespace flas::flow {

enum class InitMode { warm_start, xavier };

std::string to_string(InitMode m);
InitMode init_mode_from_string(const std::string& s);

struct FlowConfig {
    std::size_t n_steps = 3;
    double t_min = 0.5;
    double t_max = 2.0;
    std::size_t n_blocks = 1;
    double gate_init = 0.1;
    std::size_t time_freq_pairs = 64;
    bool cross_attn = true;
    bool self_attn = true;
    bool mlp = true;
    InitMode init_mode = InitMode::warm_start;

    void validate() const;
    void write_header(std::map<std::string, std::string>& header, const std::string& prefix = "flow.") const;
    static FlowConfig read_header(const std::map<std::string, std::string>& header,
                                  const std::string& prefix = "flow.");

    bool operator==(const FlowConfig&) const = default;
};

}  // namespace flas::flow
