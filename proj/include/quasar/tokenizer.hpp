#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quasar/model.hpp"

namespace quasar {

// Byte-level tokenizer: ids 0..255 are raw bytes, plus bos/eos specials.
// No external vocabulary files, fully reversible for any input.
struct ByteTokenizer {
    static constexpr Token kBos = 256;
    static constexpr Token kEos = 257;
    static constexpr int kVocabSize = 258;

    static std::vector<Token> encode(std::string_view text, bool add_bos = true);

    // specials are skipped; byte tokens map back verbatim
    static std::string decode(std::span<const Token> tokens);
};

}  // namespace quasar
