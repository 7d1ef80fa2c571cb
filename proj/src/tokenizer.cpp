#include "quasar/tokenizer.hpp"

#include "quasar/errors.hpp"

namespace quasar {

std::vector<Token> ByteTokenizer::encode(std::string_view text, bool add_bos) {
    std::vector<Token> out;
    out.reserve(text.size() + 1);
    if (add_bos) out.push_back(kBos);
    for (unsigned char c : text) out.push_back(static_cast<Token>(c));
    return out;
}

std::string ByteTokenizer::decode(std::span<const Token> tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (Token t : tokens) {
        if (t == kBos || t == kEos) continue;
        if (t < 0 || t > 255)
            throw vocab_error("decode: token " + std::to_string(t) + " is not a byte");
        out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    }
    return out;
}

}  // namespace quasar
