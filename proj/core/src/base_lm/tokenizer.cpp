#include "flas/base_lm/tokenizer.hpp"

#include "flas/errors.hpp"

namespace flas::lm {

void TokenSequence::validate(std::size_t vocab_size) const {
    if (roles.size() != ids.size()) throw DataError("token sequence: role mask length mismatch");
    bool seen_pad = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab_size) {
            throw DataError("token id " + std::to_string(ids[i]) + " outside vocabulary");
        }
        if (roles[i] == Role::pad) {
            seen_pad = true;
        } else if (seen_pad) {
            throw DataError("token sequence: pad positions must form a suffix");
        }
    }
}

bool in_alphabet(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u == '\t' || u == '\n' || (u >= 32 && u <= 126);
}

TokenSequence tokenize(std::string_view text, Role role) {
    TokenSequence seq;
    seq.ids.reserve(text.size());
    seq.roles.reserve(text.size());
    for (char c : text) seq.push(in_alphabet(c) ? static_cast<TokenId>(static_cast<unsigned char>(c)) : tok::kUnk, role);
    return seq;
}

std::string detokenize(std::span<const TokenId> ids) {
    std::string out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
        if (id == tok::kUnk) {
            out.push_back('?');
        } else if (id >= 0 && id < 256 && in_alphabet(static_cast<char>(id))) {
            out.push_back(static_cast<char>(id));
        }
        // remaining reserved ids render as nothing
    }
    return out;
}

TokenSequence format_prompt(std::string_view prompt) {
    TokenSequence seq;
    seq.push(tok::kBos, Role::prompt);
    seq.push(tok::kUser, Role::prompt);
    for (char c : prompt) seq.push(in_alphabet(c) ? static_cast<TokenId>(c) : tok::kUnk, Role::prompt);
    seq.push(tok::kModel, Role::prompt);
    return seq;
}

TokenSequence format_example(std::string_view prompt, std::string_view output) {
    TokenSequence seq = format_prompt(prompt);
    for (char c : output) seq.push(in_alphabet(c) ? static_cast<TokenId>(c) : tok::kUnk, Role::output);
    seq.push(tok::kEos, Role::output);
    return seq;
}

ConceptText make_concept(std::string text, std::size_t max_len) {
    ConceptText c;
    c.ids = tokenize(text).ids;
    if (c.ids.empty()) throw DataError("concept text is empty");
    if (c.ids.size() > max_len) c.ids.resize(max_len);
    c.text = std::move(text);
    return c;
}

}  // namespace flas::lm
