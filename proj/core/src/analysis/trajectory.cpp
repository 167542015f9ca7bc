#include "flas/analysis/trajectory.hpp"

#include "flas/base_lm/generate.hpp"
#include "flas/errors.hpp"
#include "flas/flow/steer.hpp"
#include "flas/io/container.hpp"
#include "flas/numcore/tape.hpp"

#include <algorithm>
#include <cmath>

namespace flas::analysis {

std::size_t TrajectoryRecord::first_analysed_row() const {
    return prompt_length < seq_len() ? prompt_length : 0;
}

void TrajectoryRecord::validate(double tol) const {
    const std::size_t n = velocities.size();
    if (n == 0) throw DataError("trajectory has no velocities");
    if (states.size() != n + 1) {
        throw DataError("trajectory has " + std::to_string(states.size()) + " states for N=" + std::to_string(n));
    }
    const double dt = T / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto a = states[k].data(), b = states[k + 1].data(), v = velocities[k].data();
        if (a.size() != b.size() || a.size() != v.size()) throw DataError("trajectory shapes disagree");
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (std::abs(b[i] - a[i] - dt * v[i]) > tol) {
                throw DataError("trajectory step " + std::to_string(k) + " violates h_{k+1} - h_k = (T/N) v_k");
            }
        }
    }
}

namespace {

lm::GenerationResult generate(const lm::LanguageModel& base, const lm::Hook& hook, const std::string& prompt,
                              std::size_t gen_len, bool stop_at_eos) {
    lm::GenerationOptions opts;
    opts.max_new = gen_len;
    opts.stop_at_eos = stop_at_eos;
    return lm::generate_steered(base, lm::format_prompt(prompt), hook, opts);
}

}  // namespace

TrajectoryRecord record_trajectory(const lm::LanguageModel& base, const flow::FlowModel& flow,
                                   const flow::ConceptCache& cache, const std::string& prompt, double T,
                                   std::size_t gen_len, bool stop_at_eos, std::size_t n_steps) {
    NoGradGuard guard;
    flow::FlowSteerer gen_steer(flow, cache, T, n_steps);
    auto gen = generate(base, gen_steer.hook(), prompt, gen_len, stop_at_eos);

    TrajectoryRecord rec;
    rec.prompt = prompt;
    rec.T = T;
    rec.prompt_length = lm::format_prompt(prompt).size();
    rec.tokens = gen.tokens.ids;
    rec.generated = gen.generated;

    flow::FlowSteerer replay(flow, cache, T, n_steps, true);
    base.forward_hooked(rec.tokens, replay.hook());
    const auto& r = replay.records().front();
    rec.states = r.states;
    rec.velocities = r.velocities;
    return rec;
}

TrajectoryRecord record_static(const lm::LanguageModel& base, const lm::Hook& hook, double strength,
                               const std::string& method, const std::string& prompt, std::size_t gen_len,
                               bool stop_at_eos) {
    NoGradGuard guard;
    auto gen = generate(base, hook, prompt, gen_len, stop_at_eos);
    TrajectoryRecord rec;
    rec.method = method;
    rec.prompt = prompt;
    rec.T = strength;
    rec.prompt_length = lm::format_prompt(prompt).size();
    rec.tokens = gen.tokens.ids;
    rec.generated = gen.generated;
    Tensor h0, h1;
    base.forward_hooked(rec.tokens, [&](const Tensor& h, std::size_t off) {
        h0 = h;
        h1 = hook ? hook(h, off) : h;
        return h1;
    });
    rec.states = {h0, h1};
    rec.velocities = {strength == 0.0 ? Tensor::zeros(h0.shape()) : scale(sub(h1, h0), 1.0 / strength)};
    return rec;
}

void write_trajectory(const std::filesystem::path& path, const TrajectoryRecord& rec) {
    io::ArrayFile file;
    file.header["kind"] = "trajectory";
    file.header["traj.method"] = rec.method;
    file.header["traj.concept_id"] = std::to_string(rec.concept_id);
    file.header["traj.prompt_id"] = std::to_string(rec.prompt_id);
    file.header["traj.concept"] = rec.concept_text;
    file.header["traj.prompt"] = rec.prompt;
    file.header["traj.T"] = io::format_double(rec.T);
    file.header["traj.N"] = std::to_string(rec.n_steps());
    file.header["traj.prompt_length"] = std::to_string(rec.prompt_length);
    file.header["traj.generated"] = std::to_string(rec.generated.size());
    for (std::size_t k = 0; k < rec.states.size(); ++k) file.put("state." + std::to_string(k), rec.states[k]);
    for (std::size_t k = 0; k < rec.velocities.size(); ++k) {
        file.put("velocity." + std::to_string(k), rec.velocities[k]);
    }
    std::vector<double> ids(rec.tokens.begin(), rec.tokens.end());
    const std::size_t n = ids.size();
    if (n > 0) file.put("tokens", Tensor({n}, std::move(ids)));
    io::write_array_file(path, file);
}

TrajectoryRecord read_trajectory(const std::filesystem::path& path) {
    const auto file = io::read_array_file(path);
    if (!file.header.count("kind") || file.header.at("kind") != "trajectory") {
        throw DataError(path.string() + " is not a trajectory dump");
    }
    auto count = [&](const std::string& k) {
        return static_cast<std::size_t>(io::parse_int(file.header_value(k), k));
    };
    TrajectoryRecord rec;
    rec.method = file.header_value("traj.method");
    rec.concept_id = count("traj.concept_id");
    rec.prompt_id = count("traj.prompt_id");
    rec.concept_text = file.header_value("traj.concept");
    rec.prompt = file.header_value("traj.prompt");
    rec.T = io::parse_double(file.header_value("traj.T"), "traj.T");
    rec.prompt_length = count("traj.prompt_length");
    const std::size_t n = count("traj.N");
    for (std::size_t k = 0; k <= n; ++k) rec.states.push_back(file.get("state." + std::to_string(k)));
    for (std::size_t k = 0; k < n; ++k) rec.velocities.push_back(file.get("velocity." + std::to_string(k)));
    if (file.contains("tokens")) {
        for (double v : file.get("tokens").data()) rec.tokens.push_back(static_cast<TokenId>(v));
    }
    const std::size_t g = count("traj.generated");
    if (g > rec.tokens.size()) throw DataError(path.string() + ": generated count exceeds token count");
    rec.generated.assign(rec.tokens.end() - static_cast<std::ptrdiff_t>(g), rec.tokens.end());
    return rec;
}

std::vector<TrajectoryRecord> read_trajectory_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".traj") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<TrajectoryRecord> out;
    for (const auto& f : files) out.push_back(read_trajectory(f));
    return out;
}

}  // namespace flas::analysis
