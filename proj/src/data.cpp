#include "targetamp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "targetamp/errors.hpp"

namespace targetamp {

namespace {

using nlohmann::json;

// Strict validation: rejects truncated sequences, stray continuation bytes,
// overlong encodings, surrogates and code points past U+10FFFF.
bool valid_utf8(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t n = 0;
        std::uint32_t cp = 0;
        std::uint32_t min_cp = 0;
        if (b0 < 0x80) {
            ++i;
            continue;
        } else if ((b0 >> 5) == 0x6) {
            n = 1; cp = b0 & 0x1Fu; min_cp = 0x80;
        } else if ((b0 >> 4) == 0xE) {
            n = 2; cp = b0 & 0x0Fu; min_cp = 0x800;
        } else if ((b0 >> 3) == 0x1E) {
            n = 3; cp = b0 & 0x07u; min_cp = 0x10000;
        } else {
            return false;
        }
        if (i + n >= s.size()) return false;
        for (std::size_t k = 1; k <= n; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b >> 6) != 0x2) return false;
            cp = (cp << 6) | (b & 0x3Fu);
        }
        if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += n + 1;
    }
    return true;
}

[[noreturn]] void fail_line(const std::filesystem::path& path, std::size_t line,
                            const std::string& what) {
    throw data_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

json record_to_json(const CorpusRecord& r) {
    json j{{"id", r.id}, {"text", r.text}, {"label", r.label}, {"dataset", r.dataset}};
    if (!r.target_spans.empty()) {
        json spans = json::array();
        for (const auto& s : r.target_spans)
            spans.push_back({{"begin", s.begin}, {"end", s.end}, {"cls", to_string(s.cls)}});
        j["target_spans"] = spans;
    }
    return j;
}

}  // namespace

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open corpus file: " + path.string());

    std::vector<CorpusRecord> records;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail_line(path, line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) fail_line(path, line_no, "record is not a JSON object");
        for (const char* key : {"id", "text", "dataset"})
            if (!j.contains(key) || !j.at(key).is_string())
                fail_line(path, line_no, std::string("missing string field \"") + key + "\"");
        if (!j.contains("label") || !j.at("label").is_number_integer())
            fail_line(path, line_no, "missing integer field \"label\"");

        CorpusRecord r;
        r.id = j.at("id").get<std::string>();
        r.text = j.at("text").get<std::string>();
        r.label = j.at("label").get<int>();
        r.dataset = j.at("dataset").get<std::string>();
        if (r.id.empty()) fail_line(path, line_no, "empty id");
        if (r.label != 0 && r.label != 1)
            fail_line(path, line_no,
                      "label must be 0 or 1, got " + std::to_string(r.label) +
                          " for example \"" + r.id + "\"");
        if (!valid_utf8(r.text))
            fail_line(path, line_no, "text of example \"" + r.id + "\" is not valid UTF-8");
        if (!seen_ids.insert(r.id).second)
            fail_line(path, line_no, "duplicate example id \"" + r.id + "\"");

        if (j.contains("target_spans")) {
            if (!j.at("target_spans").is_array())
                fail_line(path, line_no, "\"target_spans\" must be an array");
            for (const auto& s : j.at("target_spans")) {
                TargetSpan span;
                span.begin = s.at("begin").get<std::size_t>();
                span.end = s.at("end").get<std::size_t>();
                const auto cls_name = s.at("cls").get<std::string>();
                const auto cls = entity_class_from_string(cls_name);
                if (!cls)
                    fail_line(path, line_no, "unknown entity class \"" + cls_name + "\"");
                span.cls = *cls;
                if (span.begin >= span.end || span.end > r.text.size())
                    fail_line(path, line_no,
                              "span [" + std::to_string(span.begin) + ", " +
                                  std::to_string(span.end) + ") out of range for example \"" +
                                  r.id + "\"");
                r.target_spans.push_back(span);
            }
        }
        records.push_back(std::move(r));
    }
    return records;
}

void save_corpus(const std::vector<CorpusRecord>& records,
                 const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open file for writing: " + path.string());
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

DatasetSplit make_splits(const std::vector<CorpusRecord>& records,
                         std::array<double, 3> fractions, std::uint64_t seed) {
    double sum = 0.0;
    for (const double f : fractions) {
        if (f < 0.0 || f > 1.0) throw config_error("split fractions must lie in [0, 1]");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw config_error("split fractions must sum to 1");

    // Group keys are ordered, so group traversal (and therefore rng
    // consumption) is independent of the input record order.
    std::map<std::pair<std::string, int>, std::vector<CorpusRecord>> groups;
    for (const auto& r : records) groups[{r.dataset, r.label}].push_back(r);

    std::mt19937_64 rng(seed);
    DatasetSplit split;
    for (auto& [key, group] : groups) {
        std::sort(group.begin(), group.end(),
                  [](const CorpusRecord& a, const CorpusRecord& b) { return a.id < b.id; });
        std::shuffle(group.begin(), group.end(), rng);
        const auto n = group.size();
        auto cut1 = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
        auto cut2 = static_cast<std::size_t>(
            std::llround((fractions[0] + fractions[1]) * static_cast<double>(n)));
        cut1 = std::min(cut1, n);
        cut2 = std::clamp(cut2, cut1, n);
        split.train.insert(split.train.end(), group.begin(), group.begin() + cut1);
        split.valid.insert(split.valid.end(), group.begin() + cut1, group.begin() + cut2);
        split.test.insert(split.test.end(), group.begin() + cut2, group.end());
    }
    if (split.train.empty() || split.valid.empty() || split.test.empty())
        throw config_error("a split came out empty; need more data or larger fractions");
    return split;
}

void save_split_manifest(const DatasetSplit& split, const std::filesystem::path& path) {
    json j;
    for (const auto& [name, part] :
         {std::pair{"train", &split.train}, {"valid", &split.valid}, {"test", &split.test}}) {
        json ids = json::array();
        for (const auto& r : *part) ids.push_back(r.id);
        j[name] = std::move(ids);
    }
    std::ofstream out(path);
    if (!out) throw data_error("cannot open file for writing: " + path.string());
    out << j.dump(2) << '\n';
}

std::vector<CorpusRecord> combine(const std::vector<std::vector<CorpusRecord>>& corpora) {
    std::vector<CorpusRecord> merged;
    std::unordered_set<std::string> seen;
    for (const auto& corpus : corpora) {
        for (auto r : corpus) {
            r.id = r.dataset + "/" + r.id;
            if (!seen.insert(r.id).second)
                throw data_error("duplicate id after combining: \"" + r.id + "\"");
            merged.push_back(std::move(r));
        }
    }
    return merged;
}

namespace {

// Template inventory. The same verbs, objects and cause nouns appear in both
// classes; only the slot the entity occupies differs. None of these words may
// collide with a lexicon phrase token, or tag() would find a second entity.
const std::vector<std::string> kGroupNouns = {"neighbors", "families", "drivers", "students",
                                              "workers",   "vendors",  "visitors"};
const std::vector<std::string> kCauseNouns = {"storm",  "flood",   "blackout", "drought",
                                              "rumors", "traffic", "landslide"};
const std::vector<std::string> kVerbs = {"ruined",    "wrecked",   "spoiled",
                                         "poisoned",  "sabotaged", "drained"};
const std::vector<std::string> kObjects = {"market",       "harbor",      "town square",
                                           "water supply", "garden plots", "night shift"};
const std::vector<std::string> kPreps = {"near", "despite", "after", "before"};
const std::vector<std::string> kFillers = {"", "honestly", "apparently", "once again"};
const std::vector<std::string> kTails = {"", "last week", "all summer", "this spring"};

struct SentencePieces {
    std::vector<std::string> words;
    std::size_t entity_first = 0;  // word index of first entity token
    std::size_t entity_count = 0;
};

void push_words(std::vector<std::string>& out, const std::string& phrase) {
    std::istringstream ss(phrase);
    std::string w;
    while (ss >> w) out.push_back(w);
}

}  // namespace

Gazetteer default_synthetic_lexicon() {
    Gazetteer g;
    g.add("german", EntityClass::Norp);
    g.add("kurdish", EntityClass::Norp);
    g.add("roma", EntityClass::Norp);
    g.add("catholic", EntityClass::Norp);
    g.add("mexican", EntityClass::Norp);
    g.add("nigerian", EntityClass::Norp);
    g.add("irish", EntityClass::Norp);
    g.add("texas", EntityClass::Gpe);
    g.add("france", EntityClass::Gpe);
    g.add("seoul", EntityClass::Gpe);
    g.add("cairo", EntityClass::Gpe);
    g.add("new york", EntityClass::Gpe);
    g.add("red cross", EntityClass::Org);
    g.add("city council", EntityClass::Org);
    g.add("labor union", EntityClass::Org);
    g.add("transit authority", EntityClass::Org);
    g.add("riverside", EntityClass::Loc);
    g.add("hillcrest", EntityClass::Loc);
    g.add("eastside", EntityClass::Loc);
    g.add("carnival", EntityClass::Event);
    g.add("marathon", EntityClass::Event);
    g.add("rodeo", EntityClass::Event);
    g.add("regatta", EntityClass::Event);
    return g;
}

std::vector<CorpusRecord> gen_synthetic(std::size_t size, std::uint64_t seed,
                                        const Gazetteer& lexicon) {
    if (lexicon.empty()) throw std::invalid_argument("gen_synthetic: lexicon is empty");
    const auto entities = lexicon.entries();

    std::mt19937_64 rng(seed);
    const auto pick = [&rng](const auto& v) -> const auto& {
        std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
        return v[d(rng)];
    };

    std::vector<CorpusRecord> records;
    records.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        const int label = static_cast<int>(i % 2);
        const auto& [entity_phrase, entity_cls] = pick(entities);
        const auto& group = pick(kGroupNouns);
        const auto& cause = pick(kCauseNouns);
        const auto& verb = pick(kVerbs);
        const auto& object = pick(kObjects);
        const auto& prep = pick(kPreps);
        const auto& filler = pick(kFillers);
        const auto& tail = pick(kTails);
        const bool peripheral_first = std::uniform_int_distribution<int>(0, 1)(rng) == 1;

        SentencePieces s;
        const auto push_entity_np = [&] {
            s.words.push_back("the");
            s.entity_first = s.words.size();
            push_words(s.words, entity_phrase);
            s.entity_count = s.words.size() - s.entity_first;
            s.words.push_back(group);
        };
        const auto push_cause_np = [&] {
            s.words.push_back("the");
            s.words.push_back(cause);
        };
        const auto push_agent = [&] { label == 1 ? push_entity_np() : push_cause_np(); };
        const auto push_bystander = [&] { label == 1 ? push_cause_np() : push_entity_np(); };

        if (!filler.empty()) push_words(s.words, filler);
        if (peripheral_first) {
            s.words.push_back(prep);
            push_bystander();
            s.words.push_back(",");
            push_agent();
            s.words.push_back(verb);
            s.words.push_back("the");
            push_words(s.words, object);
        } else {
            push_agent();
            s.words.push_back(verb);
            s.words.push_back("the");
            push_words(s.words, object);
            s.words.push_back(prep);
            push_bystander();
        }
        if (!tail.empty()) push_words(s.words, tail);

        CorpusRecord r;
        r.label = label;
        r.dataset = "synthetic";
        {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "syn-%06zu", i);
            r.id = buf;
        }
        TargetSpan span;
        span.cls = entity_cls;
        for (std::size_t w = 0; w < s.words.size(); ++w) {
            if (w > 0 && s.words[w] != ",") r.text += ' ';
            if (w == s.entity_first) span.begin = r.text.size();
            r.text += s.words[w];
            if (w == s.entity_first + s.entity_count - 1) span.end = r.text.size();
        }
        r.target_spans.push_back(span);
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace targetamp
