#pragma once

// Entity-based query features: exact entity-mention match (ELR style) and
// embedding soft match, plus the query and embedding file formats.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "erank/corpus.hpp"
#include "erank/error.hpp"
#include "erank/index.hpp"
#include "erank/io.hpp"
#include "erank/textrank.hpp"

namespace erank {

struct Annotation {
    std::string entity;
    double score = 1.0;  // linker confidence s(e)

    bool operator==(const Annotation&) const = default;
};

struct QueryRecord {
    std::string id;
    std::string text;
    std::vector<std::string> tokens;
    std::vector<Annotation> annotations;

    void validate() const {
        std::set<std::string_view> seen;
        for (const auto& a : annotations) {
            if (!(a.score >= 0.0 && a.score <= 1.0))
                throw DataError("query " + id + ": annotation confidence outside [0,1] for " + a.entity);
            if (!seen.insert(a.entity).second) throw DataError("query " + id + ": duplicate annotation " + a.entity);
        }
    }
};

inline QueryRecord make_query(std::string id, std::string text, std::vector<Annotation> annotations = {}) {
    QueryRecord q{std::move(id), std::move(text), {}, std::move(annotations)};
    q.tokens = tokenize(q.text);
    q.validate();
    return q;
}

/// One JSON object per line: {"id":..., "text":..., "annotations":[{"entity":..., "score":...}]}.
inline std::vector<QueryRecord> read_queries(std::istream& in) {
    std::vector<QueryRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (io::strip_cr(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            std::vector<Annotation> anns;
            if (j.contains("annotations"))
                for (const auto& a : j["annotations"])
                    anns.push_back({a.at("entity").get<std::string>(), a.value("score", 1.0)});
            auto id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
            out.push_back(make_query(std::move(id), j.at("text").get<std::string>(), std::move(anns)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("query file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void write_queries(std::ostream& out, std::span<const QueryRecord> queries) {
    for (const auto& q : queries) {
        nlohmann::ordered_json j;
        j["id"] = q.id;
        j["text"] = q.text;
        j["annotations"] = nlohmann::ordered_json::array();
        for (const auto& a : q.annotations) j["annotations"].push_back({{"entity", a.entity}, {"score", a.score}});
        out << j.dump() << '\n';
    }
}

/// `qid<TAB>entity<TAB>score` lines; replaces the annotations of matching queries.
inline void merge_annotations(std::istream& in, std::vector<QueryRecord>& queries) {
    std::map<std::string, std::vector<Annotation>> by_query;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto sv = io::strip_cr(line);
        if (sv.empty() || sv.front() == '#') continue;
        auto parts = io::split_ws(sv);
        double s = 0;
        if (parts.size() != 3 || !io::parse_double(parts[2], s))
            throw DataError("annotation line " + std::to_string(lineno) + ": expected qid entity score");
        by_query[std::string(parts[0])].push_back({std::string(parts[1]), s});
    }
    for (auto& q : queries) {
        if (auto it = by_query.find(q.id); it != by_query.end()) {
            q.annotations = it->second;
            q.validate();
        }
    }
}

/// Fixed-dimension vectors keyed by id, in insertion order.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::size_t dim) : dim_(dim) {
        if (dim == 0) throw ConfigError("embedding dimension must be >= 1");
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

    std::size_t add(std::string id, std::span<const double> v) {
        if (v.size() != dim_)
            throw DataError("embedding store corrupt: vector for " + id + " has length " + std::to_string(v.size()) +
                            ", expected " + std::to_string(dim_));
        for (double x : v)
            if (!std::isfinite(x)) throw DataError("embedding store corrupt: non-finite component for " + id);
        if (index_.contains(id)) throw DataError("duplicate embedding id " + id);
        index_.emplace(id, ids_.size());
        ids_.push_back(std::move(id));
        data_.insert(data_.end(), v.begin(), v.end());
        return ids_.size() - 1;
    }

    std::optional<std::size_t> find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<double> mutable_row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

    std::optional<std::span<const double>> lookup(std::string_view id) const {
        auto i = find(id);
        if (!i) return std::nullopt;
        return row(*i);
    }

    bool operator==(const EmbeddingTable& o) const {
        return dim_ == o.dim_ && ids_ == o.ids_ && data_ == o.data_;
    }

    /// Header `<count> <dim>`, then `id v1 ... vdim` per line.
    void write(std::ostream& out) const {
        out << ids_.size() << ' ' << dim_ << '\n';
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            out << ids_[i];
            for (double x : row(i)) out << ' ' << io::format_double(x);
            out << '\n';
        }
    }

    static EmbeddingTable read(std::istream& in) {
        std::string line;
        if (!std::getline(in, line)) throw DataError("embedding file is empty");
        auto head = io::split_ws(io::strip_cr(line));
        std::size_t count = 0, dim = 0;
        if (head.size() != 2 || !io::parse_int(head[0], count) || !io::parse_int(head[1], dim) || dim == 0)
            throw DataError("embedding file: bad header, expected '<count> <dim>'");
        EmbeddingTable t(dim);
        std::vector<double> v(dim);
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            auto parts = io::split_ws(io::strip_cr(line));
            if (parts.empty()) continue;
            if (parts.size() != dim + 1)
                throw DataError("embedding store corrupt: line " + std::to_string(lineno) + " has " +
                                std::to_string(parts.size() - 1) + " components, expected " + std::to_string(dim));
            for (std::size_t k = 0; k < dim; ++k)
                if (!io::parse_double(parts[k + 1], v[k]))
                    throw DataError("embedding file line " + std::to_string(lineno) + ": bad number");
            t.add(std::string(parts[0]), v);
        }
        if (t.size() != count)
            throw DataError("embedding file: header count " + std::to_string(count) + " but " +
                            std::to_string(t.size()) + " rows");
        return t;
    }

private:
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<double> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddingStore {
    EmbeddingTable entities;
    EmbeddingTable relations;

    std::size_t dim() const { return entities.dim(); }

    void validate() const {
        if (entities.dim() == 0) throw DataError("embedding store not loaded");
        if (relations.size() > 0 && relations.dim() != entities.dim())
            throw DataError("embedding store corrupt: entity dim " + std::to_string(entities.dim()) +
                            " != relation dim " + std::to_string(relations.dim()));
    }

    bool operator==(const EmbeddingStore&) const = default;
};

/// Cosine similarity; 0 when either side is the zero vector.
inline double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DataError("embedding store corrupt: dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Sum over annotations of s(e) * cos(v_e, v_E). Missing vectors contribute 0.
inline double transe_feature(const QueryRecord& q, const EmbeddingStore& store, std::string_view entity) {
    store.validate();
    auto cand = store.entities.lookup(entity);
    if (!cand) return 0.0;
    double total = 0;
    for (const auto& a : q.annotations) {
        auto v = store.entities.lookup(a.entity);
        if (!v) continue;
        total += a.score * cosine(*v, *cand);
    }
    return total;
}

struct ElrParams {
    double mu = 100.0;
};

namespace detail {
inline std::uint64_t count_links(const EntityDoc& doc, std::string_view e) {
    std::uint64_t n = doc.id == e ? 1 : 0;
    for (Field f : {Field::similar_entities, Field::related_entities})
        n += static_cast<std::uint64_t>(std::count(doc.links[field_index(f)].begin(), doc.links[field_index(f)].end(), e));
    return n;
}
} // namespace detail

/// Sum over annotations of s(e) * log[(tfe + mu*cfe/|Ce|)/(|Ee| + mu)], where
/// the entity "vocabulary" of a candidate is its SimEn/RelEn links plus its
/// own id.
inline double elr_feature(const QueryRecord& q, const EntityDoc& doc, const FieldedIndex& ix,
                          const ElrParams& p = {}) {
    if (!(p.mu > 0)) throw ConfigError("ELR prior mu must be > 0");
    if (q.annotations.empty()) return 0.0;
    const std::uint64_t doc_len =
        doc.links[field_index(Field::similar_entities)].size() + doc.links[field_index(Field::related_entities)].size() + 1;
    const std::uint64_t coll_len = ix.total_links() + ix.entity_count();
    double total = 0;
    for (const auto& a : q.annotations) {
        const std::uint64_t tfe = detail::count_links(doc, a.entity);
        const std::uint64_t cfe = ix.link_cf(a.entity) + (ix.find(a.entity) ? 1 : 0);
        total += a.score * std::log(detail::smoothed_probability(tfe, cfe, doc_len, coll_len, p.mu));
    }
    return total;
}

} // namespace erank
