#include "flas/training/base_setup.hpp"

#include "flas/io/container.hpp"

#include <cstdio>
#include <map>

namespace flas::train {

std::string base_cache_key(const BaseSetup& s) {
    std::map<std::string, std::string> h;
    s.lm.write_header(h);
    h["corpus.n_concepts"] = std::to_string(s.corpus.n_concepts);
    h["corpus.n_held_out"] = std::to_string(s.corpus.n_held_out);
    h["corpus.seed"] = std::to_string(s.corpus.seed);
    h["pretrain.steps"] = std::to_string(s.pretrain.steps);
    h["pretrain.batch_size"] = std::to_string(s.pretrain.batch_size);
    h["pretrain.lr"] = io::format_double(s.pretrain.lr);
    h["pretrain.warmup"] = std::to_string(s.pretrain.warmup);
    h["pretrain.weight_decay"] = io::format_double(s.pretrain.weight_decay);
    h["pretrain.clip_norm"] = io::format_double(s.pretrain.clip_norm);
    h["pretrain.seed"] = std::to_string(s.pretrain.seed);
    h["init_seed"] = std::to_string(s.init_seed);
    h["format"] = "2";
    std::uint64_t hash = 1469598103934665603ull;
    for (const auto& [k, v] : h) {
        for (char c : k + "=" + v + ";") {
            hash ^= static_cast<unsigned char>(c);
            hash *= 1099511628211ull;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

lm::LanguageModel load_or_pretrain_base(const BaseSetup& setup, const std::filesystem::path& cache_dir,
                                        const lm::ProgressFn& progress) {
    std::filesystem::path path;
    if (!cache_dir.empty()) {
        path = cache_dir / ("base-" + base_cache_key(setup) + ".weights");
        if (std::filesystem::exists(path)) return lm::LanguageModel::load(path);
    }
    lm::LanguageModel model(setup.lm, setup.init_seed);
    const auto corpus = generate_toy_corpus(setup.corpus);
    lm::pretrain(model, base_pretraining_sequences(corpus), setup.pretrain, progress);
    if (!path.empty()) {
        // Write then rename so concurrent readers never see a partial file.
        auto tmp = path;
        tmp += ".tmp" + std::to_string(reinterpret_cast<std::uintptr_t>(&model));
        model.save(tmp);
        std::filesystem::rename(tmp, path);
    }
    return model;
}

}  // namespace flas::train
