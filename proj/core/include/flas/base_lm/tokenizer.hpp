#pragma once

#include "flas/numcore/ops.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flas::lm {

// Byte-level vocabulary of 256 ids. Printable ASCII, tab and newline map to
// their own byte value; ids below 32 (other than 9 and 10) are reserved.
namespace tok {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kUser = 4;   // opens the prompt turn
inline constexpr TokenId kModel = 5;  // opens the response turn
inline constexpr std::size_t kVocabSize = 256;
}  // namespace tok

enum class Role : std::uint8_t { prompt, output, pad };

struct TokenSequence {
    std::vector<TokenId> ids;
    std::vector<Role> roles;

    std::size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }
    void push(TokenId id, Role role) {
        ids.push_back(id);
        roles.push_back(role);
    }
    // Validates ids < vocab and that pad positions form a suffix.
    void validate(std::size_t vocab_size) const;
};

bool in_alphabet(char c);

TokenSequence tokenize(std::string_view text, Role role = Role::prompt);
std::string detokenize(std::span<const TokenId> ids);

// [BOS][USER] prompt [MODEL]
TokenSequence format_prompt(std::string_view prompt);
// format_prompt(prompt) followed by output bytes and [EOS], all tagged output.
TokenSequence format_example(std::string_view prompt, std::string_view output);

inline constexpr std::size_t kMaxConceptLength = 64;

struct ConceptText {
    std::string text;
    std::vector<TokenId> ids;  // capped at kMaxConceptLength
};

ConceptText make_concept(std::string text, std::size_t max_len = kMaxConceptLength);

}  // namespace flas::lm
