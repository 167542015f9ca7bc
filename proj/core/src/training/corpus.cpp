#include "flas/training/corpus.hpp"

#include "flas/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <random>

namespace flas::train {

namespace {

const std::string kConceptPrefix = "use the marker ";

std::string letters_from(char start) {
    std::string s;
    for (std::size_t i = 0; i < kAnswerLength; ++i) s.push_back(static_cast<char>('a' + (start - 'a' + i) % 26));
    return s;
}

std::string digits_from(char start) {
    std::string s;
    for (std::size_t i = 0; i < kAnswerLength; ++i) s.push_back(static_cast<char>('0' + (start - '0' + i) % 10));
    return s;
}

}  // namespace

std::string concept_description(char marker) { return kConceptPrefix + marker; }

char marker_from_concept(const std::string& concept_text) {
    if (concept_text.size() != kConceptPrefix.size() + 1 || concept_text.rfind(kConceptPrefix, 0) != 0) {
        throw DataError("not a marker concept: '" + concept_text + "'");
    }
    return concept_text.back();
}

std::string plain_answer(const std::string& prompt) {
    if (prompt.rfind("letters from ", 0) == 0 && prompt.size() == 14) return letters_from(prompt.back());
    if (prompt.rfind("digits from ", 0) == 0 && prompt.size() == 13) return digits_from(prompt.back());
    if (prompt.rfind("repeat ", 0) == 0 && prompt.size() == 9) {
        std::string s;
        while (s.size() < kAnswerLength) s += prompt.substr(7, 2);
        return s;
    }
    throw DataError("unknown task prompt: '" + prompt + "'");
}

std::string insert_markers(const std::string& plain, char marker) {
    std::string out;
    for (std::size_t i = 0; i < plain.size(); ++i) {
        out.push_back(plain[i]);
        if ((i + 1) % kMarkerPeriod == 0) out.push_back(marker);
    }
    return out;
}

bool satisfies_concept(const std::string& output, char marker) {
    std::size_t markers = 0;
    for (char c : output) markers += c == marker;
    const std::size_t answer = output.size() - markers;
    const std::size_t periods = answer / kMarkerPeriod;
    const std::size_t need = std::max<std::size_t>(1, (periods + 1) / 2);
    return markers >= need;
}

double checker_rate(const std::vector<std::string>& outputs, char marker) {
    if (outputs.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& o : outputs) ok += satisfies_concept(o, marker);
    return static_cast<double>(ok) / static_cast<double>(outputs.size());
}

std::vector<std::string> all_task_prompts() {
    std::vector<std::string> prompts;
    for (char c = 'a'; c <= 'z'; ++c) prompts.push_back(std::string("letters from ") + c);
    for (char c = '0'; c <= '9'; ++c) prompts.push_back(std::string("digits from ") + c);
    for (char c = 'a'; c <= 'y'; c += 2) prompts.push_back(std::string("repeat ") + c + static_cast<char>(c + 1));
    return prompts;
}

ToyCorpus generate_toy_corpus(const CorpusOptions& options) {
    if (options.n_concepts < 2) throw ConfigError("corpus: n_concepts must be >= 2");
    if (options.n_concepts > kMarkerPool.size()) {
        throw ConfigError("corpus: at most " + std::to_string(kMarkerPool.size()) + " marker concepts");
    }
    if (options.n_held_out >= options.n_concepts) throw ConfigError("corpus: n_held_out must be < n_concepts");
    if (options.examples_per_concept == 0) throw ConfigError("corpus: examples_per_concept must be >= 1");

    std::mt19937_64 rng(options.seed);
    ToyCorpus corpus;
    for (std::size_t i = 0; i < options.n_concepts; ++i) {
        corpus.concepts.push_back({i, kMarkerPool[i], concept_description(kMarkerPool[i])});
    }
    std::vector<std::size_t> order(options.n_concepts);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    corpus.held_out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(options.n_held_out));
    corpus.held_in.assign(order.begin() + static_cast<std::ptrdiff_t>(options.n_held_out), order.end());
    std::sort(corpus.held_in.begin(), corpus.held_in.end());
    std::sort(corpus.held_out.begin(), corpus.held_out.end());

    auto prompts = all_task_prompts();
    std::shuffle(prompts.begin(), prompts.end(), rng);
    const auto n_eval = std::max<std::size_t>(
        1, static_cast<std::size_t>(options.eval_prompt_fraction * static_cast<double>(prompts.size())));
    corpus.eval_prompts.assign(prompts.begin(), prompts.begin() + static_cast<std::ptrdiff_t>(n_eval));
    corpus.train_prompts.assign(prompts.begin() + static_cast<std::ptrdiff_t>(n_eval), prompts.end());

    auto example = [&](const MarkerConcept& c, const std::string& prompt) {
        return TrainingExample{prompt, insert_markers(plain_answer(prompt), c.marker), c.text};
    };
    for (std::size_t id : corpus.held_in) {
        const auto& c = corpus.concepts[id];
        std::uniform_int_distribution<std::size_t> pick(0, corpus.train_prompts.size() - 1);
        for (std::size_t k = 0; k < options.examples_per_concept; ++k) {
            // Cycle through all train prompts first, then sample.
            const auto& p = k < corpus.train_prompts.size() ? corpus.train_prompts[k] : corpus.train_prompts[pick(rng)];
            corpus.train.push_back(example(c, p));
        }
        for (const auto& p : corpus.eval_prompts) corpus.val.push_back(example(c, p));
    }
    for (std::size_t id : corpus.held_out) {
        for (const auto& p : corpus.eval_prompts) corpus.held_out_examples.push_back(example(corpus.concepts[id], p));
    }
    return corpus;
}

std::vector<std::vector<TokenId>> base_pretraining_sequences(const ToyCorpus& corpus) {
    std::vector<std::vector<TokenId>> seqs;
    for (const auto& p : all_task_prompts()) seqs.push_back(lm::format_example(p, plain_answer(p)).ids);
    for (const auto& c : corpus.concepts) {
        for (const auto& p : all_task_prompts()) {
            auto s = lm::tokenize(c.text + "\n" + p + "\n" + insert_markers(plain_answer(p), c.marker));
            std::vector<TokenId> ids{lm::tok::kBos};
            ids.insert(ids.end(), s.ids.begin(), s.ids.end());
            ids.push_back(lm::tok::kEos);
            seqs.push_back(std::move(ids));
        }
    }
    return seqs;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<TrainingExample>& examples) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& e : examples) {
        nlohmann::json j{{"prompt", e.prompt}, {"output", e.output}, {"concept", e.concept_text}};
        out << j.dump() << '\n';
    }
}

std::vector<TrainingExample> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read corpus " + path.string());
    std::vector<TrainingExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            TrainingExample e{j.at("prompt").get<std::string>(), j.at("output").get<std::string>(),
                              j.at("concept").get<std::string>()};
            if (e.output.empty()) throw DataError("empty output");
            if (e.concept_text.empty()) throw DataError("empty concept");
            out.push_back(std::move(e));
        } catch (const std::exception& ex) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

}  // namespace flas::train
