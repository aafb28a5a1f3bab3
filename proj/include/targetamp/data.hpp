#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "targetamp/target_id.hpp"

namespace targetamp {

struct TargetSpan {
    std::size_t begin = 0;  // byte offsets into text, end exclusive
    std::size_t end = 0;
    EntityClass cls = EntityClass::Org;
    bool operator==(const TargetSpan&) const = default;
};

struct CorpusRecord {
    std::string id;
    std::string text;
    int label = 0;  // 1 = hate
    std::string dataset;
    std::vector<TargetSpan> target_spans;
    bool operator==(const CorpusRecord&) const = default;
};

// Line-delimited JSON records {id, text, label, dataset, target_spans?}.
std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::vector<CorpusRecord>& records,
                 const std::filesystem::path& path);

struct DatasetSplit {
    std::vector<CorpusRecord> train;
    std::vector<CorpusRecord> valid;
    std::vector<CorpusRecord> test;
};

// Seeded shuffle then contiguous cut, stratified per (dataset, label) group.
DatasetSplit make_splits(const std::vector<CorpusRecord>& records,
                         std::array<double, 3> fractions, std::uint64_t seed);

void save_split_manifest(const DatasetSplit& split, const std::filesystem::path& path);

// Concatenates corpora, prefixing every id with its dataset tag so raw id
// collisions across sources stay distinct.
std::vector<CorpusRecord> combine(const std::vector<std::vector<CorpusRecord>>& corpora);

// Deterministic templated corpus. Every sentence mentions exactly one lexicon
// entity and one non-entity cause noun; the harm vocabulary is shared across
// classes and the label depends only on whether the entity is the agent of
// the harm or a bystander to it.
std::vector<CorpusRecord> gen_synthetic(std::size_t size, std::uint64_t seed,
                                        const Gazetteer& lexicon);

// Entity inventory the synthetic templates are built around.
Gazetteer default_synthetic_lexicon();

}  // namespace targetamp
