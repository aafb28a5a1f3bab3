#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace targetamp {

// Byte span into the source text, end exclusive.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const TokenSpan&) const = default;
};

struct Token {
    std::string text;
    TokenSpan span;
};

// Lowercased, Unicode-whitespace split, ASCII punctuation detached as
// single-character tokens.
std::vector<Token> tokenize(std::string_view text);

std::vector<std::string> token_strings(const std::vector<Token>& tokens);

class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kCls = 1;
    static constexpr int kUnk = 2;
    static constexpr int kReserved = 3;

    int id(const std::string& token) const;
    bool contains(const std::string& token) const;
    std::size_t size() const { return id_to_token_.size() + kReserved; }
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    void add(const std::string& token);

    // One token per line, line number = id - 3. Reserved ids are implicit.
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Deterministic vocabulary over the corpus; tokens below min_freq are dropped
// (they encode as [UNK]). Ids are assigned by descending frequency, ties
// broken lexicographically.
Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq);

struct TokenizedExample {
    std::vector<int> ids;            // ids[0] == [CLS], padded to max_len
    std::vector<std::uint8_t> attn_mask;  // prefix of 1s
    int label = 0;
    std::vector<TokenSpan> offsets;  // per kept non-special token

    std::size_t real_len() const;    // real positions including [CLS]
    std::size_t token_count() const { return real_len() - 1; }
};

TokenizedExample encode(const std::vector<Token>& tokens, const Vocab& vocab,
                        std::size_t max_len);

}  // namespace targetamp
