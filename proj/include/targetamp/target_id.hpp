#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace targetamp {

// Retained entity label set: organizations; nationalities, religious and
// political groups; geo-political entities; other locations; named events.
enum class EntityClass { Org, Norp, Gpe, Loc, Event };

const char* to_string(EntityClass cls);
std::optional<EntityClass> entity_class_from_string(const std::string& s);

// Binary target mask over the real non-[CLS] tokens of one example. Position
// i of the mask corresponds to token i (0-based), i.e. encoder row i + 1.
struct TargetMask {
    std::vector<std::uint8_t> mask;
    std::vector<std::optional<EntityClass>> classes;  // aligned with mask

    static TargetMask zeros(std::size_t token_count);
    std::size_t token_count() const { return mask.size(); }
    bool any() const;
    // 0-based token indices with mask == 1, ascending.
    std::vector<std::size_t> explicit_indices() const;
    bool operator==(const TargetMask&) const = default;
};

// Surface-form lexicon standing in for a neural NER tagger. Phrases are
// lowercased, 1-3 tokens; longest match wins, ties broken by earliest start.
class Gazetteer {
public:
    void add(const std::string& phrase, EntityClass cls);
    bool empty() const { return phrases_.empty(); }
    std::size_t size() const { return phrases_.size(); }

    // Phrase/class pairs in deterministic (lexicographic) order.
    std::vector<std::pair<std::string, EntityClass>> entries() const;

    // Greedy longest-match left-to-right over lowercased tokens.
    TargetMask tag(const std::vector<std::string>& tokens) const;

    // UTF-8 lines "phrase<TAB>CLASS".
    static Gazetteer from_file(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::map<std::vector<std::string>, EntityClass> phrases_;
    std::size_t max_phrase_tokens_ = 0;
};

// Each real token flagged independently with probability `rate` under a
// generator seeded with `seed`. No class annotations.
TargetMask random_mask(std::size_t token_count, double rate, std::uint64_t seed);

// Line-delimited records {"id", "targets": [token indices], "classes"?}.
// Records must align 1:1 with the ids passed in; indices are validated
// against each example's token count.
std::vector<TargetMask> load_external_masks(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::size_t>>& id_and_token_count);

void save_external_masks(const std::filesystem::path& path,
                         const std::vector<std::string>& ids,
                         const std::vector<TargetMask>& masks);

}  // namespace targetamp
