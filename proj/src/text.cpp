#include "targetamp/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "targetamp/errors.hpp"

namespace targetamp {

namespace {

// Decodes one UTF-8 code point; falls back to the raw byte on malformed input.
std::uint32_t decode_utf8(std::string_view s, std::size_t i, std::size_t& len) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
        len = 1;
        return c;
    }
    if ((c >> 5) == 0x6 && i + 1 < s.size()) {
        len = 2;
        return ((c & 0x1Fu) << 6) | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu);
    }
    if ((c >> 4) == 0xE && i + 2 < s.size()) {
        len = 3;
        return ((c & 0x0Fu) << 12) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 6) |
               (static_cast<unsigned char>(s[i + 2]) & 0x3Fu);
    }
    if ((c >> 3) == 0x1E && i + 3 < s.size()) {
        len = 4;
        return ((c & 0x07u) << 18) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 12) |
               ((static_cast<unsigned char>(s[i + 2]) & 0x3Fu) << 6) |
               (static_cast<unsigned char>(s[i + 3]) & 0x3Fu);
    }
    len = 1;
    return c;
}

bool is_unicode_space(std::uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_ascii_punct(std::uint32_t cp) {
    return cp < 0x80 && std::ispunct(static_cast<int>(cp));
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::string cur;
    std::size_t cur_begin = 0;
    auto flush = [&](std::size_t end) {
        if (!cur.empty()) {
            tokens.push_back({cur, {cur_begin, end}});
            cur.clear();
        }
    };
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t len = 1;
        const std::uint32_t cp = decode_utf8(text, i, len);
        if (is_unicode_space(cp)) {
            flush(i);
        } else if (is_ascii_punct(cp)) {
            flush(i);
            tokens.push_back({std::string(1, static_cast<char>(cp)), {i, i + 1}});
        } else {
            if (cur.empty()) cur_begin = i;
            if (cp < 0x80) {
                cur.push_back(static_cast<char>(std::tolower(static_cast<int>(cp))));
            } else {
                cur.append(text.substr(i, len));
            }
        }
        i += len;
    }
    flush(text.size());
    return tokens;
}

std::vector<std::string> token_strings(const std::vector<Token>& tokens) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.text);
    return out;
}

int Vocab::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const {
    return token_to_id_.count(token) > 0;
}

void Vocab::add(const std::string& token) {
    if (token_to_id_.count(token)) return;
    const int id = static_cast<int>(id_to_token_.size()) + kReserved;
    token_to_id_.emplace(token, id);
    id_to_token_.push_back(token);
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write vocab file: " + path.string());
    for (const auto& t : id_to_token_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot read vocab file: " + path.string());
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) v.add(line);
    }
    return v;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq) {
    if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& sentence : corpus)
        for (const auto& tok : tokenize(sentence)) ++counts[tok.text];

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, n] : counts)
        if (n >= min_freq) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocab v;
    for (const auto& [tok, n] : kept) v.add(tok);
    return v;
}

std::size_t TokenizedExample::real_len() const {
    std::size_t n = 0;
    for (auto m : attn_mask) n += m;
    return n;
}

TokenizedExample encode(const std::vector<Token>& tokens, const Vocab& vocab,
                        std::size_t max_len) {
    if (max_len < 2) throw config_error("encode: max_len must be at least 2");
    TokenizedExample ex;
    ex.ids.assign(max_len, Vocab::kPad);
    ex.attn_mask.assign(max_len, 0);
    ex.ids[0] = Vocab::kCls;
    ex.attn_mask[0] = 1;
    const std::size_t keep = std::min(tokens.size(), max_len - 1);
    for (std::size_t i = 0; i < keep; ++i) {
        ex.ids[i + 1] = vocab.id(tokens[i].text);
        ex.attn_mask[i + 1] = 1;
        ex.offsets.push_back(tokens[i].span);
    }
    return ex;
}

}  // namespace targetamp
