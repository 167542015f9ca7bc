#include "flas/flow/config.hpp"

#include "flas/errors.hpp"
#include "flas/io/container.hpp"

namespace flas::flow {

std::string to_string(InitMode m) { return m == InitMode::warm_start ? "warm_start" : "xavier"; }

InitMode init_mode_from_string(const std::string& s) {
    if (s == "warm_start") return InitMode::warm_start;
    if (s == "xavier") return InitMode::xavier;
    throw ConfigError("init_mode must be warm_start or xavier, got '" + s + "'");
}

void FlowConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("FlowConfig: " + m); };
    if (n_steps < 1) fail("n_steps must be >= 1");
    if (n_blocks < 1) fail("n_blocks must be >= 1");
    if (!(t_min > 0.0) || t_min > t_max) fail("require 0 < t_min <= t_max");
    if (time_freq_pairs < 1) fail("time_freq_pairs must be >= 1");
}

void FlowConfig::write_header(std::map<std::string, std::string>& h, const std::string& p) const {
    h[p + "n_steps"] = std::to_string(n_steps);
    h[p + "t_min"] = io::format_double(t_min);
    h[p + "t_max"] = io::format_double(t_max);
    h[p + "n_blocks"] = std::to_string(n_blocks);
    h[p + "gate_init"] = io::format_double(gate_init);
    h[p + "time_freq_pairs"] = std::to_string(time_freq_pairs);
    h[p + "cross_attn"] = cross_attn ? "1" : "0";
    h[p + "self_attn"] = self_attn ? "1" : "0";
    h[p + "mlp"] = mlp ? "1" : "0";
    h[p + "init_mode"] = to_string(init_mode);
}

FlowConfig FlowConfig::read_header(const std::map<std::string, std::string>& h, const std::string& p) {
    auto get = [&](const std::string& k) -> const std::string& {
        auto it = h.find(p + k);
        if (it == h.end()) throw ConfigError("missing header field '" + p + k + "'");
        return it->second;
    };
    auto flag = [&](const std::string& k) {
        const auto& v = get(k);
        if (v != "0" && v != "1") throw ConfigError("field '" + p + k + "' must be 0 or 1");
        return v == "1";
    };
    FlowConfig c;
    c.n_steps = static_cast<std::size_t>(io::parse_int(get("n_steps"), p + "n_steps"));
    c.t_min = io::parse_double(get("t_min"), p + "t_min");
    c.t_max = io::parse_double(get("t_max"), p + "t_max");
    c.n_blocks = static_cast<std::size_t>(io::parse_int(get("n_blocks"), p + "n_blocks"));
    c.gate_init = io::parse_double(get("gate_init"), p + "gate_init");
    c.time_freq_pairs = static_cast<std::size_t>(io::parse_int(get("time_freq_pairs"), p + "time_freq_pairs"));
    c.cross_attn = flag("cross_attn");
    c.self_attn = flag("self_attn");
    c.mlp = flag("mlp");
    c.init_mode = init_mode_from_string(get("init_mode"));
    c.validate();
    return c;
}

}  // namespace flas::flow
