#pragma once

// Triple ingestion into five-field entity documents, plus exact collection
// statistics computed by a straight rescan of the corpus.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "erank/error.hpp"
#include "erank/io.hpp"

namespace erank {

enum class Field : std::uint8_t { names = 0, attributes, categories, similar_entities, related_entities };

inline constexpr std::size_t kFieldCount = 5;
inline constexpr std::array<Field, kFieldCount> kAllFields = {
    Field::names, Field::attributes, Field::categories, Field::similar_entities, Field::related_entities};

constexpr std::size_t field_index(Field f) { return static_cast<std::size_t>(f); }

/// Canonical on-disk names; these also appear in feature names.
constexpr std::string_view field_name(Field f) {
    constexpr std::array<std::string_view, kFieldCount> names = {"names", "attributes", "categories", "SimEn",
                                                                 "RelEn"};
    return names[field_index(f)];
}

inline std::optional<Field> parse_field(std::string_view name) {
    for (Field f : kAllFields)
        if (field_name(f) == name) return f;
    return std::nullopt;
}

/// Lowercased ASCII alphanumeric runs; everything else separates.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            cur.push_back(static_cast<char>(c));
        } else if (c >= 'A' && c <= 'Z') {
            cur.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

enum class TailKind : std::uint8_t { entity, literal };

struct Triple {
    std::string head;
    std::string relation;
    std::string tail;
    TailKind tail_kind = TailKind::entity;

    bool operator==(const Triple&) const = default;
};

namespace detail {
inline bool has_space(std::string_view s) {
    return s.find_first_of(" \t") != std::string_view::npos;
}
} // namespace detail

/// Parses `head<TAB>relation<TAB>tail`. A double-quoted tail is a literal.
/// Returns an error message instead of throwing so callers can keep going.
inline std::variant<Triple, std::string> parse_triple_line(std::string_view line) {
    auto parts = io::split_char(io::strip_cr(line), '\t');
    if (parts.size() != 3) return std::string("expected 3 tab-separated columns, got ") + std::to_string(parts.size());
    Triple t;
    t.head = std::string(parts[0]);
    t.relation = std::string(parts[1]);
    if (t.head.empty() || detail::has_space(t.head)) return std::string("head must be a non-empty id without spaces");
    if (t.relation.empty() || detail::has_space(t.relation))
        return std::string("relation must be a non-empty id without spaces");
    std::string_view tail = parts[2];
    if (!tail.empty() && tail.front() == '"') {
        if (tail.size() < 2 || tail.back() != '"') return std::string("unterminated literal");
        t.tail = std::string(tail.substr(1, tail.size() - 2));
        t.tail_kind = TailKind::literal;
    } else {
        if (tail.empty() || detail::has_space(tail)) return std::string("entity tail must be a non-empty id without spaces");
        t.tail = std::string(tail);
        t.tail_kind = TailKind::entity;
    }
    return t;
}

struct LineIssue {
    std::size_t line = 0;
    std::string message;
};

struct TripleReadResult {
    std::vector<Triple> triples;
    std::vector<LineIssue> malformed;
};

/// Blank lines and lines starting with '#' are ignored. Malformed lines are
/// reported with their 1-based number and skipped.
inline TripleReadResult read_triples(std::istream& in) {
    TripleReadResult res;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view sv = io::strip_cr(line);
        if (sv.empty() || sv.front() == '#') continue;
        auto parsed = parse_triple_line(sv);
        if (auto* t = std::get_if<Triple>(&parsed))
            res.triples.push_back(std::move(*t));
        else
            res.malformed.push_back({lineno, std::get<std::string>(parsed)});
    }
    return res;
}

inline void write_triples(std::ostream& out, std::span<const Triple> triples) {
    for (const auto& t : triples) {
        out << t.head << '\t' << t.relation << '\t';
        if (t.tail_kind == TailKind::literal)
            out << '"' << t.tail << '"';
        else
            out << t.tail;
        out << '\n';
    }
}

/// Relation -> field assignment. Rules are tried in order; a pattern ending
/// in '*' matches by prefix, anything else must match exactly.
class FieldMapping {
public:
    struct Rule {
        std::string pattern;
        Field field;
    };

    FieldMapping() = default;

    void add_rule(std::string pattern, Field field) {
        if (pattern.empty()) throw ConfigError("mapping rule with empty pattern");
        rules_.push_back({std::move(pattern), field});
    }
    void set_default_field(Field f) { default_field_ = f; }

    const std::vector<Rule>& rules() const { return rules_; }
    Field default_field() const { return default_field_; }

    static bool matches(std::string_view pattern, std::string_view relation) {
        if (pattern.ends_with('*')) return relation.starts_with(pattern.substr(0, pattern.size() - 1));
        return pattern == relation;
    }

    /// Unmatched literal-tailed relations go to the default field;
    /// unmatched entity-tailed ones go to SimEn for sameness/redirect
    /// relations and RelEn otherwise.
    Field resolve(std::string_view relation, TailKind kind) const {
        for (const auto& r : rules_)
            if (matches(r.pattern, relation)) return r.field;
        if (kind == TailKind::literal) return default_field_;
        return is_sameness_relation(relation) ? Field::similar_entities : Field::related_entities;
    }

    static bool is_sameness_relation(std::string_view relation) {
        std::string lower(relation);
        for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        for (std::string_view marker : {"sameas", "redirect", "disambiguat"})
            if (lower.find(marker) != std::string::npos) return true;
        return false;
    }

    /// `pattern<TAB>field` per line, `#default<TAB>field` sets the default,
    /// other '#' lines are comments. Any malformed line is an error.
    static FieldMapping parse(std::istream& in) {
        FieldMapping m;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string_view sv = io::strip_cr(line);
            if (sv.empty()) continue;
            auto parts = io::split_char(sv, '\t');
            const bool is_default = parts.size() == 2 && parts[0] == "#default";
            if (sv.front() == '#' && !is_default) continue;
            if (parts.size() != 2)
                throw DataError("mapping line " + std::to_string(lineno) + ": expected pattern<TAB>field");
            auto f = parse_field(parts[1]);
            if (!f)
                throw DataError("mapping line " + std::to_string(lineno) + ": unknown field '" +
                                std::string(parts[1]) + "'");
            if (is_default)
                m.set_default_field(*f);
            else
                m.add_rule(std::string(parts[0]), *f);
        }
        return m;
    }

private:
    std::vector<Rule> rules_;
    Field default_field_ = Field::attributes;
};

/// One entity as five token fields. Entity-valued tails are tokenized into
/// the field text and also kept verbatim in `links`.
struct EntityDoc {
    std::string id;
    std::array<std::vector<std::string>, kFieldCount> tokens;
    std::array<std::vector<std::string>, kFieldCount> links;

    const std::vector<std::string>& field(Field f) const { return tokens[field_index(f)]; }
    std::size_t length(Field f) const { return tokens[field_index(f)].size(); }
    std::size_t total_length() const {
        std::size_t n = 0;
        for (const auto& t : tokens) n += t.size();
        return n;
    }

    bool operator==(const EntityDoc&) const = default;
};

/// Documents sorted by id.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<EntityDoc> docs) : docs_(std::move(docs)) {
        std::sort(docs_.begin(), docs_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        for (std::size_t i = 1; i < docs_.size(); ++i)
            if (docs_[i].id == docs_[i - 1].id) throw DataError("duplicate entity id " + docs_[i].id);
    }

    std::span<const EntityDoc> docs() const { return docs_; }
    std::size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }

    const EntityDoc* find(std::string_view id) const {
        auto it = std::lower_bound(docs_.begin(), docs_.end(), id,
                                   [](const EntityDoc& d, std::string_view key) { return d.id < key; });
        if (it == docs_.end() || it->id != id) return nullptr;
        return &*it;
    }

    bool operator==(const Corpus&) const = default;

private:
    std::vector<EntityDoc> docs_;
};

inline Corpus ingest_triples(std::span<const Triple> triples, const FieldMapping& mapping) {
    std::map<std::string, EntityDoc, std::less<>> docs;
    for (const auto& t : triples) {
        if (t.head.empty() || t.relation.empty()) throw DataError("triple with empty head or relation");
        auto it = docs.find(t.head);
        if (it == docs.end()) {
            it = docs.emplace(t.head, EntityDoc{}).first;
            it->second.id = t.head;
        }
        EntityDoc& doc = it->second;
        const auto f = field_index(mapping.resolve(t.relation, t.tail_kind));
        for (auto& tok : tokenize(t.tail)) doc.tokens[f].push_back(std::move(tok));
        if (t.tail_kind == TailKind::entity) doc.links[f].push_back(t.tail);
    }
    std::vector<EntityDoc> out;
    out.reserve(docs.size());
    for (auto& [_, d] : docs) out.push_back(std::move(d));
    return Corpus(std::move(out));
}

// Corpus files are JSON lines, one entity per line, keys in fixed order.

inline nlohmann::ordered_json doc_to_json(const EntityDoc& d) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    nlohmann::ordered_json fields = nlohmann::ordered_json::object();
    nlohmann::ordered_json links = nlohmann::ordered_json::object();
    for (Field f : kAllFields) {
        fields[std::string(field_name(f))] = d.tokens[field_index(f)];
        links[std::string(field_name(f))] = d.links[field_index(f)];
    }
    j["fields"] = std::move(fields);
    j["links"] = std::move(links);
    return j;
}

inline EntityDoc doc_from_json(const nlohmann::json& j) {
    EntityDoc d;
    d.id = j.at("id").get<std::string>();
    for (Field f : kAllFields) {
        const std::string name(field_name(f));
        if (j.at("fields").contains(name)) d.tokens[field_index(f)] = j["fields"][name].get<std::vector<std::string>>();
        if (j.at("links").contains(name)) d.links[field_index(f)] = j["links"][name].get<std::vector<std::string>>();
    }
    return d;
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const auto& d : corpus.docs()) out << doc_to_json(d).dump() << '\n';
}

inline Corpus read_corpus(std::istream& in) {
    std::vector<EntityDoc> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (io::strip_cr(line).empty()) continue;
        try {
            docs.push_back(doc_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return Corpus(std::move(docs));
}

using TermPair = std::pair<std::string, std::string>;

struct FieldStats {
    std::uint64_t total_tokens = 0;                        // |C_f|
    std::map<std::string, std::uint64_t, std::less<>> cf;  // unigram collection frequency
    std::map<std::string, std::uint64_t, std::less<>> df;  // documents with tf > 0
    std::map<TermPair, std::uint64_t> ordered_cf;          // #1(t1,t2)
    std::map<TermPair, std::uint64_t> window_cf;           // #uwN, key stored with first <= second
};

/// Exact collection counts. Window statistics are for `window` only.
struct CollectionStats {
    std::size_t window = 8;
    std::size_t entity_count = 0;
    std::array<FieldStats, kFieldCount> fields;

    const FieldStats& field(Field f) const { return fields[field_index(f)]; }

    std::uint64_t total_tokens() const {
        std::uint64_t n = 0;
        for (const auto& f : fields) n += f.total_tokens;
        return n;
    }
    std::uint64_t cf(std::string_view term) const {
        std::uint64_t n = 0;
        for (const auto& f : fields)
            if (auto it = f.cf.find(term); it != f.cf.end()) n += it->second;
        return n;
    }
    std::uint64_t field_cf(Field f, std::string_view term) const {
        const auto& m = field(f).cf;
        auto it = m.find(term);
        return it == m.end() ? 0 : it->second;
    }
    std::uint64_t ordered_cf(Field f, const std::string& a, const std::string& b) const {
        const auto& m = field(f).ordered_cf;
        auto it = m.find({a, b});
        return it == m.end() ? 0 : it->second;
    }
    std::uint64_t window_cf(Field f, const std::string& a, const std::string& b) const {
        const auto& m = field(f).window_cf;
        auto it = m.find(a <= b ? TermPair{a, b} : TermPair{b, a});
        return it == m.end() ? 0 : it->second;
    }
};

inline CollectionStats collection_stats(const Corpus& corpus, std::size_t window = 8) {
    if (window < 2) throw ConfigError("window size must be >= 2");
    CollectionStats st;
    st.window = window;
    st.entity_count = corpus.size();
    for (const auto& doc : corpus.docs()) {
        for (Field f : kAllFields) {
            auto& fs = st.fields[field_index(f)];
            const auto& toks = doc.field(f);
            fs.total_tokens += toks.size();
            std::map<std::string_view, int> seen;
            for (const auto& t : toks) {
                ++fs.cf[t];
                if (seen.emplace(t, 1).second) ++fs.df[t];
            }
            for (std::size_t i = 0; i + 1 < toks.size(); ++i) ++fs.ordered_cf[{toks[i], toks[i + 1]}];
            for (std::size_t i = 0; i < toks.size(); ++i) {
                for (std::size_t j = i + 1; j < toks.size() && j - i < window; ++j) {
                    if (toks[i] == toks[j])
                        fs.window_cf[{toks[i], toks[j]}] += 2;
                    else if (toks[i] < toks[j])
                        ++fs.window_cf[{toks[i], toks[j]}];
                    else
                        ++fs.window_cf[{toks[j], toks[i]}];
                }
            }
        }
    }
    return st;
}

} // namespace erank
