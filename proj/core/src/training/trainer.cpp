#include "flas/training/trainer.hpp"

#include "flas/errors.hpp"
#include "flas/flow/euler.hpp"
#include "flas/io/container.hpp"
#include "flas/numcore/tape.hpp"
#include "flas/training/batch.hpp"
#include "flas/training/checkpoint.hpp"
#include "flas/training/losses.hpp"
#include "flas/training/schedule.hpp"

#include <cmath>
#include <fstream>
#include <map>

namespace flas::train {

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("TrainConfig: " + m); };
    if (!(lr > 0.0)) fail("lr must be > 0");
    if (weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (!(clip_norm > 0.0)) fail("clip_norm must be > 0");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (max_steps == 0) fail("max_steps must be >= 1");
    if (warmup >= max_steps) fail("warmup must be < max_steps");
    if (val_interval == 0) fail("val_interval must be >= 1");
    if (lambda_div < 0.0) fail("lambda_div must be >= 0");
    if (!(t_min > 0.0) || t_min > t_max) fail("require 0 < t_min <= t_max");
    if (val_T < 0.0) fail("val_T must be >= 0");
    if (max_len < 2) fail("max_len must be >= 2");
}

void TrainConfig::write_header(std::map<std::string, std::string>& h, const std::string& p) const {
    h[p + "lr"] = io::format_double(lr);
    h[p + "weight_decay"] = io::format_double(weight_decay);
    h[p + "clip_norm"] = io::format_double(clip_norm);
    h[p + "batch_size"] = std::to_string(batch_size);
    h[p + "warmup"] = std::to_string(warmup);
    h[p + "max_steps"] = std::to_string(max_steps);
    h[p + "val_interval"] = std::to_string(val_interval);
    h[p + "patience"] = std::to_string(patience);
    h[p + "lambda_div"] = io::format_double(lambda_div);
    h[p + "t_min"] = io::format_double(t_min);
    h[p + "t_max"] = io::format_double(t_max);
    h[p + "val_T"] = io::format_double(val_T);
    h[p + "max_len"] = std::to_string(max_len);
    h[p + "seed"] = std::to_string(seed);
}

TrainConfig TrainConfig::read_header(const std::map<std::string, std::string>& h, const std::string& p) {
    auto get = [&](const std::string& k) -> const std::string& {
        auto it = h.find(p + k);
        if (it == h.end()) throw ConfigError("missing header field '" + p + k + "'");
        return it->second;
    };
    auto count = [&](const std::string& k) { return static_cast<std::size_t>(io::parse_int(get(k), p + k)); };
    auto real = [&](const std::string& k) { return io::parse_double(get(k), p + k); };
    TrainConfig c;
    c.lr = real("lr");
    c.weight_decay = real("weight_decay");
    c.clip_norm = real("clip_norm");
    c.batch_size = count("batch_size");
    c.warmup = count("warmup");
    c.max_steps = count("max_steps");
    c.val_interval = count("val_interval");
    c.patience = count("patience");
    c.lambda_div = real("lambda_div");
    c.t_min = real("t_min");
    c.t_max = real("t_max");
    c.val_T = real("val_T");
    c.max_len = count("max_len");
    c.seed = std::stoull(get("seed"));
    c.validate();
    return c;
}

namespace {

std::vector<PreparedExample> prepare_rows(const lm::LanguageModel& base, const std::vector<TrainingExample>& examples,
                                          std::map<std::string, std::size_t>& concept_ids, TrainData& data,
                                          std::size_t max_len) {
    std::vector<PreparedExample> out;
    if (examples.empty()) return out;
    NoGradGuard guard;
    const Batch batch = build_batch(examples, max_len);
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        const auto& concept_text = batch.concepts[r];
        auto it = concept_ids.find(concept_text);
        if (it == concept_ids.end()) {
            it = concept_ids.emplace(concept_text, data.concepts.size()).first;
            data.concepts.push_back(concept_text);
            data.encodings.push_back(
                base.encode_concept(lm::make_concept(concept_text, base.config().max_concept_len)));
        }
        PreparedExample row;
        const std::size_t n = batch.lengths[r];
        row.ids.assign(batch.tokens[r].begin(), batch.tokens[r].begin() + static_cast<std::ptrdiff_t>(n));
        row.labels.assign(batch.labels[r].begin(), batch.labels[r].begin() + static_cast<std::ptrdiff_t>(n));
        row.hidden = base.forward_hooked(row.ids).hidden.detach();
        row.concept_index = it->second;
        out.push_back(std::move(row));
    }
    return out;
}

Tensor steered_logits(const lm::LanguageModel& base, const Tensor& h_steered) {
    const auto& cfg = base.config();
    return base.head(base.run_layers(h_steered, cfg.steer_layer, cfg.n_layers, 0, nullptr));
}

flow::EulerResult integrate_row(const flow::FlowModel& flow, const Tensor& h, const flow::ConceptCache& cache,
                                double T) {
    auto field = [&](const Tensor& x, double t, std::size_t k) { return flow.velocity(x, t, cache, nullptr, k, 0); };
    return flow::euler_integrate(h, T, flow.config().n_steps, field);
}

}  // namespace

TrainData prepare_data(const lm::LanguageModel& base, const std::vector<TrainingExample>& train,
                       const std::vector<TrainingExample>& val, std::size_t max_len) {
    TrainData data;
    std::map<std::string, std::size_t> ids;
    data.train = prepare_rows(base, train, ids, data, max_len);
    data.val = prepare_rows(base, val, ids, data, max_len);
    data.train_by_concept.resize(data.concepts.size());
    for (std::size_t i = 0; i < data.train.size(); ++i) data.train_by_concept[data.train[i].concept_index].push_back(i);
    return data;
}

LossParts flow_loss(const flow::FlowModel& flow, const lm::LanguageModel& base,
                    const std::vector<const PreparedExample*>& rows, const std::vector<Tensor>& encodings, double T,
                    double lambda) {
    std::map<std::size_t, flow::ConceptCache> caches;
    for (const auto* row : rows) {
        if (!caches.count(row->concept_index)) {
            caches.emplace(row->concept_index, flow.build_concept_cache(encodings.at(row->concept_index)));
        }
    }
    LossParts parts;
    std::vector<Tensor> logits;
    std::vector<std::vector<std::int64_t>> labels;
    std::vector<std::string> concept_keys;
    for (const auto* row : rows) {
        auto r = integrate_row(flow, row->hidden, caches.at(row->concept_index), T);
        logits.push_back(steered_logits(base, r.final_state));
        labels.push_back(row->labels);
        parts.pooled.push_back(pool_velocity(r.velocities.back(), row->ids.size()));
        concept_keys.push_back(std::to_string(row->concept_index));
    }
    parts.lm = lm_loss(logits, labels);
    parts.div = diversity_loss(parts.pooled, concept_keys);
    parts.total = lambda == 0.0 ? parts.lm : add(parts.lm, scale(parts.div, lambda));
    return parts;
}

TrainState::TrainState(flow::FlowModel flow_model, const TrainConfig& config)
    : flow(std::move(flow_model)),
      optimizer(flow.parameters(), AdamWConfig{0.9, 0.999, 1e-8, config.weight_decay}),
      seed(config.seed) {}

std::mt19937_64 step_rng(std::uint64_t seed, std::size_t step) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
    return std::mt19937_64(seq);
}

std::vector<const PreparedExample*> sample_batch(const TrainData& data, std::size_t batch_size,
                                                 std::mt19937_64& rng) {
    std::vector<std::size_t> available;
    for (std::size_t c = 0; c < data.train_by_concept.size(); ++c) {
        if (!data.train_by_concept[c].empty()) available.push_back(c);
    }
    if (available.empty()) throw DataError("sample_batch: no training rows");
    std::uniform_int_distribution<std::size_t> pick_concept(0, available.size() - 1);
    std::vector<std::size_t> chosen;
    for (std::size_t b = 0; b < batch_size; ++b) chosen.push_back(available[pick_concept(rng)]);
    if (available.size() > 1 && batch_size > 1 &&
        std::all_of(chosen.begin(), chosen.end(), [&](auto c) { return c == chosen.front(); })) {
        std::uniform_int_distribution<std::size_t> other(0, available.size() - 2);
        std::size_t c = available[other(rng)];
        if (c == chosen.front()) c = available.back();
        chosen.back() = c;
    }
    std::vector<const PreparedExample*> rows;
    for (std::size_t c : chosen) {
        const auto& pool = data.train_by_concept[c];
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        rows.push_back(&data.train[pool[pick(rng)]]);
    }
    return rows;
}

StepStats train_step(TrainState& state, const lm::LanguageModel& base, const TrainData& data,
                     const TrainConfig& config) {
    auto rng = step_rng(state.seed, state.step);
    auto rows = sample_batch(data, config.batch_size, rng);
    std::uniform_real_distribution<double> draw_T(config.t_min, config.t_max);
    StepStats stats;
    stats.T = config.t_min == config.t_max ? config.t_min : draw_T(rng);
    stats.lr = lr_schedule(state.step, config.lr, config.warmup, config.max_steps);

    state.flow.set_trainable(true);
    state.optimizer.zero_grad();
    {
        Tape tape;
        LossParts parts = flow_loss(state.flow, base, rows, data.encodings, stats.T, config.lambda_div);
        stats.lm_loss = parts.lm.item();
        stats.div_loss = parts.div.item();
        if (!std::isfinite(parts.total.item())) {
            throw NumericError("non-finite loss at step " + std::to_string(state.step) + " (batch drawn for step " +
                               std::to_string(state.step) + ", seed " + std::to_string(state.seed) + ")");
        }
        tape.backward(parts.total);
    }
    auto params = state.optimizer.params();
    stats.grad_norm = clip_grad_norm(params, config.clip_norm);
    state.optimizer.step(stats.lr);
    state.optimizer.zero_grad();
    state.flow.set_trainable(false);
    ++state.step;
    stats.step = state.step;
    return stats;
}

double validation_loss(const flow::FlowModel& flow, const lm::LanguageModel& base,
                       const std::vector<PreparedExample>& rows, const std::vector<Tensor>& encodings, double T) {
    NoGradGuard guard;
    std::map<std::size_t, flow::ConceptCache> caches;
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& row : rows) {
        auto it = caches.find(row.concept_index);
        if (it == caches.end()) {
            it = caches.emplace(row.concept_index, flow.build_concept_cache(encodings.at(row.concept_index))).first;
        }
        auto r = integrate_row(flow, row.hidden, it->second, T);
        auto ce = masked_cross_entropy(steered_logits(base, r.final_state), row.labels);
        total += ce.loss.item() * static_cast<double>(ce.token_count);
        count += ce.token_count;
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

std::vector<Tensor> pooled_velocities(const flow::FlowModel& flow, const std::vector<PreparedExample>& rows,
                                      const std::vector<Tensor>& encodings, double T) {
    NoGradGuard guard;
    std::map<std::size_t, flow::ConceptCache> caches;
    std::vector<Tensor> out;
    for (const auto& row : rows) {
        auto it = caches.find(row.concept_index);
        if (it == caches.end()) {
            it = caches.emplace(row.concept_index, flow.build_concept_cache(encodings.at(row.concept_index))).first;
        }
        auto r = integrate_row(flow, row.hidden, it->second, T);
        out.push_back(pool_velocity(r.velocities.back(), row.ids.size()));
    }
    return out;
}

namespace {

std::vector<std::vector<double>> snapshot(const flow::FlowModel& flow) {
    std::vector<std::vector<double>> out;
    for (const auto& t : flow.parameters()) out.emplace_back(t.data().begin(), t.data().end());
    return out;
}

void restore(flow::FlowModel& flow, const std::vector<std::vector<double>>& snap) {
    auto params = flow.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].mutable_data();
        std::copy(snap[i].begin(), snap[i].end(), dst.begin());
    }
}

}  // namespace

TrainResult train_loop(TrainState& state, const lm::LanguageModel& base, const TrainData& data,
                       const TrainConfig& config, const std::filesystem::path& out_dir,
                       const StepCallback& callback) {
    config.validate();
    if (data.val.empty()) throw DataError("train_loop: empty validation split");
    std::ofstream log;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const auto log_path = out_dir / "train_log.csv";
        const bool resume = state.step > 0 && std::filesystem::exists(log_path);
        log.open(log_path, resume ? std::ios::app : std::ios::trunc);
        if (!log) throw DataError("cannot write " + log_path.string());
        if (!resume) log << "step,lm_loss,div_loss,T,lr\n";
    }
    TrainResult result;
    auto best = snapshot(state.flow);
    double last_val = state.best_val;
    while (state.step < config.max_steps) {
        StepStats s = train_step(state, base, data, config);
        result.log.push_back(s);
        ++result.steps_run;
        if (log) {
            log << s.step << ',' << io::format_double(s.lm_loss) << ',' << io::format_double(s.div_loss) << ','
                << io::format_double(s.T) << ',' << io::format_double(s.lr) << '\n';
        }
        const bool validate = s.step % config.val_interval == 0 || s.step == config.max_steps;
        double val = 0.0;
        if (validate) {
            val = validation_loss(state.flow, base, data.val, data.encodings, config.val_T);
            last_val = val;
            if (val < state.best_val) {
                state.best_val = val;
                state.best_step = s.step;
                state.bad_validations = 0;
                best = snapshot(state.flow);
                if (!out_dir.empty()) save_checkpoint(state, config, out_dir / "flow.ckpt");
            } else {
                ++state.bad_validations;
            }
            if (!out_dir.empty()) {
                log.flush();
                save_checkpoint(state, config, out_dir / "last.ckpt");
            }
        }
        if (callback) callback(s, validate ? &val : nullptr);
        if (validate && config.patience > 0 && state.bad_validations >= config.patience) {
            result.early_stopped = true;
            break;
        }
    }
    result.final_val = last_val;
    result.best_val = state.best_val;
    result.best_step = state.best_step;
    restore(state.flow, best);
    return result;
}

}  // namespace flas::train
