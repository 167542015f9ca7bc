#include "flas/training/checkpoint.hpp"

#include "flas/errors.hpp"
#include "flas/io/container.hpp"

namespace flas::train {

void save_checkpoint(const TrainState& state, const TrainConfig& config, const std::filesystem::path& path) {
    io::ArrayFile file;
    file.header["kind"] = "flow_checkpoint";
    file.header["ckpt.version"] = std::to_string(kCheckpointVersion);
    file.header["ckpt.step"] = std::to_string(state.step);
    file.header["ckpt.best_val"] = io::format_double(state.best_val);
    file.header["ckpt.best_step"] = std::to_string(state.best_step);
    file.header["ckpt.bad_validations"] = std::to_string(state.bad_validations);
    file.header["ckpt.seed"] = std::to_string(state.seed);
    file.header["ckpt.adam_t"] = std::to_string(state.optimizer.steps_taken());
    config.write_header(file.header);
    state.flow.write(file);
    const auto named = state.flow.named_parameters();
    for (std::size_t i = 0; i < named.size(); ++i) {
        file.put("adam.m." + named[i].first, state.optimizer.first_moments()[i]);
        file.put("adam.v." + named[i].first, state.optimizer.second_moments()[i]);
    }
    io::write_array_file(path, file);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const lm::LanguageModel& base) {
    auto file = io::read_array_file(path);
    if (!file.header.count("kind") || file.header.at("kind") != "flow_checkpoint") {
        throw ConfigError(path.string() + " is not a flow training checkpoint");
    }
    const auto version = io::parse_int(file.header_value("ckpt.version"), "ckpt.version");
    if (version != kCheckpointVersion) {
        throw ConfigError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    TrainConfig config = TrainConfig::read_header(file.header);
    LoadedCheckpoint out{TrainState(flow::FlowModel::read(file, base), config), config};
    auto& st = out.state;
    st.step = static_cast<std::size_t>(io::parse_int(file.header_value("ckpt.step"), "ckpt.step"));
    st.best_val = io::parse_double(file.header_value("ckpt.best_val"), "ckpt.best_val");
    st.best_step = static_cast<std::size_t>(io::parse_int(file.header_value("ckpt.best_step"), "ckpt.best_step"));
    st.bad_validations =
        static_cast<std::size_t>(io::parse_int(file.header_value("ckpt.bad_validations"), "ckpt.bad_validations"));
    st.seed = std::stoull(file.header_value("ckpt.seed"));
    st.optimizer.set_steps_taken(io::parse_int(file.header_value("ckpt.adam_t"), "ckpt.adam_t"));
    const auto named = st.flow.named_parameters();
    for (std::size_t i = 0; i < named.size(); ++i) {
        for (auto [prefix, buffers] : {std::pair{"adam.m.", &st.optimizer.first_moments()},
                                       std::pair{"adam.v.", &st.optimizer.second_moments()}}) {
            const Tensor& src = file.get(prefix + named[i].first);
            Tensor& dst = (*buffers)[i];
            if (src.shape() != dst.shape()) throw ConfigError("moment buffer shape mismatch for " + named[i].first);
            std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
        }
    }
    return out;
}

}  // namespace flas::train
