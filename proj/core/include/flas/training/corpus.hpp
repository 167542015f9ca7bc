#pragma once

#include "flas/base_lm/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flas::train {

struct TrainingExample {
    std::string prompt;
    std::string output;
    std::string concept_text;
};

// A marker-insertion concept: the response carries `marker` after every
// kMarkerPeriod answer characters.
struct MarkerConcept {
    std::size_t id = 0;
    char marker = '#';
    std::string text;
};

inline constexpr std::size_t kMarkerPeriod = 4;
inline constexpr std::size_t kAnswerLength = 12;
inline constexpr std::string_view kMarkerPool = "#@$%&*+=~^|<>!?;";

struct CorpusOptions {
    std::size_t n_concepts = 10;
    std::size_t n_held_out = 2;
    std::size_t examples_per_concept = 48;
    double eval_prompt_fraction = 0.25;
    std::uint64_t seed = 0;
};

struct ToyCorpus {
    std::vector<MarkerConcept> concepts;
    std::vector<std::size_t> held_in;   // concept ids
    std::vector<std::size_t> held_out;  // concept ids, disjoint from held_in
    std::vector<std::string> train_prompts;
    std::vector<std::string> eval_prompts;  // disjoint from train_prompts
    std::vector<TrainingExample> train;     // held-in concepts x train prompts
    std::vector<TrainingExample> val;       // held-in concepts x eval prompts
    std::vector<TrainingExample> held_out_examples;  // held-out concepts x eval prompts
};

std::string concept_description(char marker);
// Inverse of concept_description; throws DataError for other texts.
char marker_from_concept(const std::string& concept_text);

// The unmarked 12-character answer to a task prompt.
std::string plain_answer(const std::string& prompt);
std::string insert_markers(const std::string& plain, char marker);

// Mechanical concept checker: with L answer characters, at least
// max(1, ceil(floor(L/4)/2)) copies of the marker.
bool satisfies_concept(const std::string& output, char marker);
double checker_rate(const std::vector<std::string>& outputs, char marker);

std::vector<std::string> all_task_prompts();

ToyCorpus generate_toy_corpus(const CorpusOptions& options);

// Plain next-token material for the base model: every prompt with its
// unmarked answer in chat form, plus each concept description followed by a
// marked answer as free text.
std::vector<std::vector<TokenId>> base_pretraining_sequences(const ToyCorpus& corpus);

void write_jsonl(const std::filesystem::path& path, const std::vector<TrainingExample>& examples);
std::vector<TrainingExample> read_jsonl(const std::filesystem::path& path);

}  // namespace flas::train
