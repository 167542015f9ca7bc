#include "run_config.hpp"

#include "flas/errors.hpp"
#include "flas/io/container.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace flas::cli {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::size_t get_size(const KeyValues& kv, const std::string& key) {
    return static_cast<std::size_t>(io::parse_int(kv.at(key), key));
}

double get_double(const KeyValues& kv, const std::string& key) { return io::parse_double(kv.at(key), key); }

// Seeds that follow the top-level `seed` and are not separately settable.
constexpr const char* kDerivedSeeds[] = {"train.seed"};

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    // The zero-shot path needs the encoder deep enough to reach the hook layer.
    c.base.lm.encoder_depth = c.base.lm.steer_layer;
    c.train.lr = 3e-3;
    c.train.max_steps = 500;
    c.train.warmup = 50;
    c.train.val_interval = 100;
    return c;
}

KeyValues RunConfig::to_map() const {
    KeyValues kv;
    base.lm.write_header(kv, "lm.");
    flow.write_header(kv, "flow.");
    train.write_header(kv, "train.");
    for (const char* k : kDerivedSeeds) kv.erase(k);
    kv["corpus.n_concepts"] = std::to_string(base.corpus.n_concepts);
    kv["corpus.n_held_out"] = std::to_string(base.corpus.n_held_out);
    kv["corpus.examples_per_concept"] = std::to_string(base.corpus.examples_per_concept);
    kv["corpus.eval_prompt_fraction"] = io::format_double(base.corpus.eval_prompt_fraction);
    kv["pretrain.steps"] = std::to_string(base.pretrain.steps);
    kv["pretrain.batch_size"] = std::to_string(base.pretrain.batch_size);
    kv["pretrain.lr"] = io::format_double(base.pretrain.lr);
    kv["pretrain.warmup"] = std::to_string(base.pretrain.warmup);
    kv["pretrain.weight_decay"] = io::format_double(base.pretrain.weight_decay);
    kv["pretrain.clip_norm"] = io::format_double(base.pretrain.clip_norm);
    kv["baselines.per_side"] = std::to_string(baseline_per_side);
    kv["out_dir"] = out_dir.string();
    kv["cache_dir"] = cache_dir.string();
    kv["corpus_dir"] = corpus_dir.string();
    kv["seed"] = std::to_string(seed);
    return kv;
}

RunConfig RunConfig::from_map(const KeyValues& given) {
    KeyValues kv = defaults().to_map();
    for (const auto& [k, v] : given) {
        auto it = kv.find(k);
        if (it == kv.end()) throw ConfigError("unknown config key '" + k + "'");
        if (all_digits(it->second) && !all_digits(v))
            throw ConfigError("field '" + k + "': expected a non-negative integer, got '" + v + "'");
        it->second = v;
    }

    RunConfig c;
    c.seed = static_cast<std::uint64_t>(get_size(kv, "seed"));
    kv["train.seed"] = kv.at("seed");
    c.base.lm = lm::LMConfig::read_header(kv, "lm.");
    c.flow = flow::FlowConfig::read_header(kv, "flow.");
    c.train = train::TrainConfig::read_header(kv, "train.");

    auto& co = c.base.corpus;
    co.n_concepts = get_size(kv, "corpus.n_concepts");
    co.n_held_out = get_size(kv, "corpus.n_held_out");
    co.examples_per_concept = get_size(kv, "corpus.examples_per_concept");
    co.eval_prompt_fraction = get_double(kv, "corpus.eval_prompt_fraction");
    co.seed = c.seed;
    if (co.n_held_out >= co.n_concepts)
        throw ConfigError("field 'corpus.n_held_out' must be smaller than corpus.n_concepts");
    if (!(co.eval_prompt_fraction > 0.0 && co.eval_prompt_fraction < 1.0))
        throw ConfigError("field 'corpus.eval_prompt_fraction' must lie in (0, 1)");

    auto& pt = c.base.pretrain;
    pt.steps = get_size(kv, "pretrain.steps");
    pt.batch_size = get_size(kv, "pretrain.batch_size");
    pt.lr = get_double(kv, "pretrain.lr");
    pt.warmup = get_size(kv, "pretrain.warmup");
    pt.weight_decay = get_double(kv, "pretrain.weight_decay");
    pt.clip_norm = get_double(kv, "pretrain.clip_norm");
    pt.seed = c.seed;
    if (pt.batch_size == 0) throw ConfigError("field 'pretrain.batch_size' must be positive");
    if (!(pt.lr > 0.0)) throw ConfigError("field 'pretrain.lr' must be positive");
    c.base.init_seed = c.seed;

    c.baseline_per_side = get_size(kv, "baselines.per_side");
    if (c.baseline_per_side == 0) throw ConfigError("field 'baselines.per_side' must be positive");
    c.out_dir = kv.at("out_dir");
    c.cache_dir = kv.at("cache_dir");
    c.corpus_dir = kv.at("corpus_dir");
    if (c.out_dir.empty()) throw ConfigError("field 'out_dir' must not be empty");
    return c;
}

KeyValues read_kv_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path.string() + "'");
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const auto key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        if (kv.count(key)) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv[key] = trim(t.substr(eq + 1));
    }
    return kv;
}

void write_kv_file(const std::filesystem::path& path, const KeyValues& kv) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

RunConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
    KeyValues kv;
    if (!file.empty()) kv = read_kv_file(file);
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + o + "'");
        kv[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
    }
    return RunConfig::from_map(kv);
}

}  // namespace flas::cli
