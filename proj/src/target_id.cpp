#include "targetamp/target_id.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "targetamp/errors.hpp"
#include "targetamp/text.hpp"

namespace targetamp {

const char* to_string(EntityClass cls) {
    switch (cls) {
        case EntityClass::Org: return "ORG";
        case EntityClass::Norp: return "NORP";
        case EntityClass::Gpe: return "GPE";
        case EntityClass::Loc: return "LOC";
        case EntityClass::Event: return "EVENT";
    }
    return "?";
}

std::optional<EntityClass> entity_class_from_string(const std::string& s) {
    if (s == "ORG") return EntityClass::Org;
    if (s == "NORP") return EntityClass::Norp;
    if (s == "GPE") return EntityClass::Gpe;
    if (s == "LOC") return EntityClass::Loc;
    if (s == "EVENT") return EntityClass::Event;
    return std::nullopt;
}

TargetMask TargetMask::zeros(std::size_t token_count) {
    TargetMask m;
    m.mask.assign(token_count, 0);
    m.classes.assign(token_count, std::nullopt);
    return m;
}

bool TargetMask::any() const {
    for (auto b : mask)
        if (b) return true;
    return false;
}

std::vector<std::size_t> TargetMask::explicit_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.push_back(i);
    return out;
}

void Gazetteer::add(const std::string& phrase, EntityClass cls) {
    std::vector<std::string> toks;
    for (const auto& t : tokenize(phrase)) toks.push_back(t.text);
    if (toks.empty()) throw std::invalid_argument("gazetteer: empty phrase");
    if (toks.size() > 3)
        throw std::invalid_argument("gazetteer: phrase longer than 3 tokens: " + phrase);
    phrases_[toks] = cls;
    max_phrase_tokens_ = std::max(max_phrase_tokens_, toks.size());
}

std::vector<std::pair<std::string, EntityClass>> Gazetteer::entries() const {
    std::vector<std::pair<std::string, EntityClass>> out;
    for (const auto& [toks, cls] : phrases_) {
        std::string joined;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (i) joined += ' ';
            joined += toks[i];
        }
        out.emplace_back(joined, cls);
    }
    return out;
}

TargetMask Gazetteer::tag(const std::vector<std::string>& tokens) const {
    TargetMask m = TargetMask::zeros(tokens.size());
    std::size_t i = 0;
    std::vector<std::string> window;
    while (i < tokens.size()) {
        std::size_t matched = 0;
        EntityClass matched_cls = EntityClass::Org;
        const std::size_t longest = std::min(max_phrase_tokens_, tokens.size() - i);
        for (std::size_t len = longest; len >= 1; --len) {
            window.assign(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                          tokens.begin() + static_cast<std::ptrdiff_t>(i + len));
            auto it = phrases_.find(window);
            if (it != phrases_.end()) {
                matched = len;
                matched_cls = it->second;
                break;
            }
        }
        if (matched > 0) {
            for (std::size_t j = i; j < i + matched; ++j) {
                m.mask[j] = 1;
                m.classes[j] = matched_cls;
            }
            i += matched;
        } else {
            ++i;
        }
    }
    return m;
}

Gazetteer Gazetteer::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot read lexicon file: " + path.string());
    Gazetteer g;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw data_error("lexicon line " + std::to_string(lineno) + ": missing TAB separator");
        const std::string phrase = line.substr(0, tab);
        const std::string cls_str = line.substr(tab + 1);
        const auto cls = entity_class_from_string(cls_str);
        if (!cls)
            throw data_error("lexicon line " + std::to_string(lineno) +
                             ": unknown entity class '" + cls_str + "'");
        g.add(phrase, *cls);
    }
    return g;
}

void Gazetteer::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write lexicon file: " + path.string());
    for (const auto& [phrase, cls] : entries()) out << phrase << '\t' << to_string(cls) << '\n';
}

TargetMask random_mask(std::size_t token_count, double rate, std::uint64_t seed) {
    if (rate < 0.0 || rate > 1.0)
        throw std::invalid_argument("random_mask: rate must lie in [0, 1]");
    TargetMask m = TargetMask::zeros(token_count);
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution flag(rate);
    for (std::size_t i = 0; i < token_count; ++i)
        if (rate >= 1.0 || (rate > 0.0 && flag(rng))) m.mask[i] = 1;
    return m;
}

std::vector<TargetMask> load_external_masks(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::size_t>>& id_and_token_count) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot read mask file: " + path.string());

    struct Entry {
        std::vector<std::size_t> targets;
        std::vector<std::optional<EntityClass>> classes;
    };
    std::map<std::string, Entry> by_id;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw data_error("mask file line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("id") || !j.contains("targets"))
            throw data_error("mask file line " + std::to_string(lineno) +
                             ": record needs 'id' and 'targets'");
        Entry e;
        for (const auto& t : j.at("targets")) e.targets.push_back(t.get<std::size_t>());
        if (j.contains("classes")) {
            for (const auto& c : j.at("classes")) {
                if (c.is_null()) {
                    e.classes.push_back(std::nullopt);
                    continue;
                }
                const auto cls = entity_class_from_string(c.get<std::string>());
                if (!cls)
                    throw data_error("mask file line " + std::to_string(lineno) +
                                     ": unknown entity class");
                e.classes.push_back(cls);
            }
            if (e.classes.size() != e.targets.size())
                throw data_error("mask file line " + std::to_string(lineno) +
                                 ": classes/targets length mismatch");
        }
        const std::string id = j.at("id").get<std::string>();
        if (!by_id.emplace(id, std::move(e)).second)
            throw data_error("mask file: duplicate id '" + id + "'");
    }

    std::vector<TargetMask> out;
    out.reserve(id_and_token_count.size());
    for (const auto& [id, token_count] : id_and_token_count) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw data_error("mask file: no record for example id '" + id + "'");
        TargetMask m = TargetMask::zeros(token_count);
        const Entry& e = it->second;
        for (std::size_t k = 0; k < e.targets.size(); ++k) {
            const std::size_t idx = e.targets[k];
            if (idx >= token_count)
                throw data_error("mask for example id '" + id + "': target index " +
                                 std::to_string(idx) + " exceeds token count " +
                                 std::to_string(token_count));
            m.mask[idx] = 1;
            if (!e.classes.empty()) m.classes[idx] = e.classes[k];
        }
        out.push_back(std::move(m));
    }
    return out;
}

void save_external_masks(const std::filesystem::path& path,
                         const std::vector<std::string>& ids,
                         const std::vector<TargetMask>& masks) {
    if (ids.size() != masks.size())
        throw std::invalid_argument("save_external_masks: ids/masks length mismatch");
    std::ofstream out(path);
    if (!out) throw data_error("cannot write mask file: " + path.string());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        nlohmann::json j;
        j["id"] = ids[i];
        auto targets = nlohmann::json::array();
        auto classes = nlohmann::json::array();
        bool any_class = false;
        for (std::size_t t : masks[i].explicit_indices()) {
            targets.push_back(t);
            if (masks[i].classes[t]) {
                classes.push_back(to_string(*masks[i].classes[t]));
                any_class = true;
            } else {
                classes.push_back(nullptr);
            }
        }
        j["targets"] = targets;
        if (any_class) j["classes"] = classes;
        out << j.dump() << '\n';
    }
}

}  // namespace targetamp
