#pragma once

// Per (query, candidate) feature rows. Baseline layout, 26 values:
//   [0]      fsdm
//   [1..5]   sdm_<field>
//   [6..10]  bm25_<field>
//   [11..15] lm_<field>
//   [16..20] coord_<field>
//   [21..25] cos_<field>
// followed by `elr` and/or `transe` when enabled (in that order). Fields are
// always names, attributes, categories, SimEn, RelEn.

#include <algorithm>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "erank/corpus.hpp"
#include "erank/entmatch.hpp"
#include "erank/error.hpp"
#include "erank/index.hpp"
#include "erank/io.hpp"
#include "erank/textrank.hpp"

namespace erank {

enum class Variant { baseline, elr, transe, both };

inline constexpr std::size_t kBaselineFeatureCount = 26;

constexpr std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::elr: return "+ELR";
        case Variant::transe: return "+TransE";
        case Variant::both: return "+both";
    }
    return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
    for (Variant v : {Variant::baseline, Variant::elr, Variant::transe, Variant::both})
        if (variant_name(v) == s) return v;
    return std::nullopt;
}

/// File-name-safe spelling ("baseline", "elr", "transe", "both").
constexpr std::string_view variant_slug(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::elr: return "elr";
        case Variant::transe: return "transe";
        case Variant::both: return "both";
    }
    return "?";
}

constexpr bool uses_elr(Variant v) { return v == Variant::elr || v == Variant::both; }
constexpr bool uses_transe(Variant v) { return v == Variant::transe || v == Variant::both; }

constexpr std::size_t feature_count(Variant v) {
    return kBaselineFeatureCount + (uses_elr(v) ? 1 : 0) + (uses_transe(v) ? 1 : 0);
}

inline std::vector<std::string> feature_names(Variant v) {
    std::vector<std::string> names{"fsdm"};
    for (std::string_view prefix : {"sdm_", "bm25_", "lm_", "coord_", "cos_"})
        for (Field f : kAllFields) names.push_back(std::string(prefix) + std::string(field_name(f)));
    if (uses_elr(v)) names.emplace_back("elr");
    if (uses_transe(v)) names.emplace_back("transe");
    return names;
}

struct FeatureConfig {
    Variant variant = Variant::baseline;
    FsdmParams fsdm;
    SdmParams sdm;
    double lm_mu = 2500.0;
    Bm25Params bm25;
    ElrParams elr;
};

struct FeatureVector {
    std::string qid;
    std::string entity;
    std::vector<double> values;
    int label = 0;

    bool operator==(const FeatureVector&) const = default;
};

/// Rows ordered by (qid, entity).
inline bool row_before(const FeatureVector& a, const FeatureVector& b) {
    if (a.qid != b.qid) return a.qid < b.qid;
    return a.entity < b.entity;
}

inline FeatureVector extract_features(const FieldedIndex& ix, const QueryRecord& q, FieldedIndex::DocId d,
                                      const FeatureConfig& cfg, const EmbeddingStore* store = nullptr) {
    if (uses_transe(cfg.variant) && store == nullptr)
        throw ConfigError("variant " + std::string(variant_name(cfg.variant)) + " needs an embedding store");
    const std::span<const std::string> query = q.tokens;
    FeatureVector fv;
    fv.qid = q.id;
    fv.entity = ix.doc(d).id;
    fv.values.reserve(feature_count(cfg.variant));
    fv.values.push_back(fsdm_score(ix, query, d, cfg.fsdm));
    for (Field f : kAllFields) fv.values.push_back(sdm_score(ix, query, d, f, cfg.sdm));
    for (Field f : kAllFields) fv.values.push_back(bm25(ix, query, d, f, cfg.bm25));
    for (Field f : kAllFields) fv.values.push_back(detail::lm_sum(ix, query, d, f, cfg.lm_mu));
    for (Field f : kAllFields) fv.values.push_back(coordinate_match(ix, query, d, f));
    for (Field f : kAllFields) fv.values.push_back(cosine_sim(ix, query, d, f));
    if (uses_elr(cfg.variant)) fv.values.push_back(elr_feature(q, ix.doc(d), ix, cfg.elr));
    if (uses_transe(cfg.variant)) fv.values.push_back(transe_feature(q, *store, fv.entity));
    return fv;
}

inline FeatureVector extract_features(const FieldedIndex& ix, const QueryRecord& q, std::string_view entity,
                                      const FeatureConfig& cfg, const EmbeddingStore* store = nullptr) {
    return extract_features(ix, q, ix.require(entity), cfg, store);
}

/// `label qid:<id> 1:<v> 2:<v> ... #<entity-id>`; values use the shortest
/// decimal form that round-trips to the same double.
inline void write_feature_rows(std::ostream& out, std::span<const FeatureVector> rows) {
    for (const auto& r : rows) {
        if (r.qid.find_first_of(" \t") != std::string::npos) throw DataError("query id contains whitespace: " + r.qid);
        out << r.label << " qid:" << r.qid;
        for (std::size_t i = 0; i < r.values.size(); ++i) out << ' ' << (i + 1) << ':' << io::format_double(r.values[i]);
        out << " #" << r.entity << '\n';
    }
}

inline std::vector<FeatureVector> read_feature_rows(std::istream& in) {
    std::vector<FeatureVector> rows;
    std::string line;
    std::size_t lineno = 0;
    std::optional<std::size_t> width;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view sv = io::strip_cr(line);
        if (sv.empty()) continue;
        const auto err = [&](const std::string& m) {
            return DataError("feature file line " + std::to_string(lineno) + ": " + m);
        };
        auto hash = sv.find('#');
        if (hash == std::string_view::npos) throw err("missing #<entity-id>");
        FeatureVector r;
        r.entity = std::string(sv.substr(hash + 1));
        auto parts = io::split_ws(sv.substr(0, hash));
        if (parts.size() < 2 || !io::parse_int(parts[0], r.label) || !parts[1].starts_with("qid:"))
            throw err("expected '<label> qid:<id> ...'");
        r.qid = std::string(parts[1].substr(4));
        for (std::size_t i = 2; i < parts.size(); ++i) {
            auto colon = parts[i].find(':');
            std::size_t idx = 0;
            double v = 0;
            if (colon == std::string_view::npos || !io::parse_int(parts[i].substr(0, colon), idx) ||
                !io::parse_double(parts[i].substr(colon + 1), v))
                throw err("bad feature token '" + std::string(parts[i]) + "'");
            if (idx != i - 1) throw err("feature indices must be 1..n in order");
            r.values.push_back(v);
        }
        if (width && *width != r.values.size()) throw err("inconsistent feature count");
        width = r.values.size();
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace erank
