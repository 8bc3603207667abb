#pragma once

// Text match scoring over a FieldedIndex: Dirichlet-smoothed unigram LM,
// SDM per field, FSDM across fields, BM25, coordinate match and tf*idf
// cosine, plus FSDM candidate generation.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "erank/corpus.hpp"
#include "erank/error.hpp"
#include "erank/index.hpp"

namespace erank {

/// Probability used in place of mu*cf/|C| when an n-gram never occurs in the
/// collection field.
inline constexpr double kFloorEpsilon = 1e-9;

struct SdmParams {
    double lambda_t = 0.8;
    double lambda_o = 0.1;
    double lambda_u = 0.1;
    double mu = 2500.0;

    void validate() const {
        if (lambda_t < 0 || lambda_o < 0 || lambda_u < 0) throw ConfigError("SDM lambdas must be non-negative");
        if (std::abs(lambda_t + lambda_o + lambda_u - 1.0) > 1e-9) throw ConfigError("SDM lambdas must sum to 1");
        if (!(mu > 0)) throw ConfigError("Dirichlet prior mu must be > 0");
    }
};

using FieldWeights = std::array<double, kFieldCount>;

inline constexpr FieldWeights kUniformFieldWeights = {0.2, 0.2, 0.2, 0.2, 0.2};

struct FsdmParams {
    double lambda_t = 0.8;
    double lambda_o = 0.1;
    double lambda_u = 0.1;
    FieldWeights mu = {2500.0, 2500.0, 2500.0, 2500.0, 2500.0};
    FieldWeights weights_t = kUniformFieldWeights;
    FieldWeights weights_o = kUniformFieldWeights;
    FieldWeights weights_u = kUniformFieldWeights;

    void validate() const {
        SdmParams{lambda_t, lambda_o, lambda_u, 1.0}.validate();
        for (double m : mu)
            if (!(m > 0)) throw ConfigError("FSDM field priors must be > 0");
        for (const auto* w : {&weights_t, &weights_o, &weights_u}) {
            double s = 0;
            for (double x : *w) {
                if (x < 0) throw ConfigError("FSDM field weights must be non-negative");
                s += x;
            }
            if (std::abs(s - 1.0) > 1e-9) throw ConfigError("FSDM field weights must sum to 1");
        }
    }

    /// All weight on one field, for every clique type.
    static FsdmParams one_hot(Field f, double mu_f, double lt = 0.8, double lo = 0.1, double lu = 0.1) {
        FsdmParams p;
        p.lambda_t = lt;
        p.lambda_o = lo;
        p.lambda_u = lu;
        p.mu.fill(mu_f);
        FieldWeights w{};
        w[field_index(f)] = 1.0;
        p.weights_t = p.weights_o = p.weights_u = w;
        return p;
    }
};

namespace detail {

/// Dirichlet-smoothed n-gram probability within one entity field.
inline double smoothed_probability(std::uint64_t tf, std::uint64_t cf, std::uint64_t field_len,
                                   std::uint64_t coll_len, double mu) {
    const double denom = static_cast<double>(field_len) + mu;
    if (cf == 0) return kFloorEpsilon / denom;
    return (static_cast<double>(tf) + mu * static_cast<double>(cf) / static_cast<double>(coll_len)) / denom;
}

inline double unigram_probability(const FieldedIndex& ix, FieldedIndex::DocId d, Field f, std::string_view term,
                                  double mu) {
    const auto s = ix.unigram_stats(d, f, term);
    return smoothed_probability(s.tf, s.cf, s.field_length, s.collection_length, mu);
}

inline double ordered_probability(const FieldedIndex& ix, FieldedIndex::DocId d, Field f, std::string_view a,
                                  std::string_view b, double mu) {
    const auto s = ix.ordered_bigram_stats(d, f, a, b);
    return smoothed_probability(s.tf, s.cf, ix.field_length(d, f), ix.collection_length(f), mu);
}

inline double window_probability(const FieldedIndex& ix, FieldedIndex::DocId d, Field f, std::string_view a,
                                 std::string_view b, double mu) {
    const auto s = ix.unordered_window_stats(d, f, a, b);
    return smoothed_probability(s.tf, s.cf, ix.field_length(d, f), ix.collection_length(f), mu);
}

inline void require_query(std::span<const std::string> query) {
    if (query.empty()) throw UndefinedError("score undefined for an empty query");
}

inline double combine(double lt, double st, double lo, double so, double lu, double su) {
    return lt * st + lo * so + lu * su;
}

/// Sum of log unigram probabilities; never throws on empty fields.
inline double lm_sum(const FieldedIndex& ix, std::span<const std::string> query, FieldedIndex::DocId d, Field f,
                     double mu) {
    double s = 0;
    for (const auto& q : query) s += std::log(unigram_probability(ix, d, f, q, mu));
    return s;
}

} // namespace detail

/// log[(tf + mu*cf/|C_f|) / (|E_f| + mu)], floored when cf = 0.
inline double lm_unigram(const FieldedIndex& ix, FieldedIndex::DocId d, Field f, std::string_view term, double mu) {
    if (!(mu > 0)) throw ConfigError("Dirichlet prior mu must be > 0");
    if (ix.collection_length(f) == 0)
        throw UndefinedError("field '" + std::string(field_name(f)) + "' is empty across the collection");
    return std::log(detail::unigram_probability(ix, d, f, term, mu));
}

inline double lm_unigram(const FieldedIndex& ix, std::string_view entity, Field f, std::string_view term, double mu) {
    return lm_unigram(ix, ix.require(entity), f, term, mu);
}

inline double sdm_score(const FieldedIndex& ix, std::span<const std::string> query, FieldedIndex::DocId d, Field f,
                        const SdmParams& p) {
    detail::require_query(query);
    p.validate();
    double st = 0, so = 0, su = 0;
    for (const auto& q : query) st += std::log(detail::unigram_probability(ix, d, f, q, p.mu));
    for (std::size_t i = 0; i + 1 < query.size(); ++i) {
        so += std::log(detail::ordered_probability(ix, d, f, query[i], query[i + 1], p.mu));
        su += std::log(detail::window_probability(ix, d, f, query[i], query[i + 1], p.mu));
    }
    return detail::combine(p.lambda_t, st, p.lambda_o, so, p.lambda_u, su);
}

inline double sdm_score(const FieldedIndex& ix, std::span<const std::string> query, std::string_view entity, Field f,
                        const SdmParams& p) {
    return sdm_score(ix, query, ix.require(entity), f, p);
}

/// Each clique's per-field probabilities are mixed with the field weights
/// and the log is taken once per clique.
inline double fsdm_score(const FieldedIndex& ix, std::span<const std::string> query, FieldedIndex::DocId d,
                         const FsdmParams& p) {
    detail::require_query(query);
    p.validate();
    double st = 0, so = 0, su = 0;
    for (const auto& q : query) {
        double mix = 0;
        for (Field f : kAllFields)
            mix += p.weights_t[field_index(f)] * detail::unigram_probability(ix, d, f, q, p.mu[field_index(f)]);
        st += std::log(mix);
    }
    for (std::size_t i = 0; i + 1 < query.size(); ++i) {
        double mix_o = 0, mix_u = 0;
        for (Field f : kAllFields) {
            const double mu = p.mu[field_index(f)];
            mix_o += p.weights_o[field_index(f)] * detail::ordered_probability(ix, d, f, query[i], query[i + 1], mu);
            mix_u += p.weights_u[field_index(f)] * detail::window_probability(ix, d, f, query[i], query[i + 1], mu);
        }
        so += std::log(mix_o);
        su += std::log(mix_u);
    }
    return detail::combine(p.lambda_t, st, p.lambda_o, so, p.lambda_u, su);
}

inline double fsdm_score(const FieldedIndex& ix, std::span<const std::string> query, std::string_view entity,
                         const FsdmParams& p) {
    return fsdm_score(ix, query, ix.require(entity), p);
}

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    void validate() const {
        if (k1 < 0) throw ConfigError("BM25 k1 must be >= 0");
        if (b < 0 || b > 1) throw ConfigError("BM25 b must be in [0, 1]");
    }
};

inline double bm25(const FieldedIndex& ix, std::span<const std::string> query, FieldedIndex::DocId d, Field f,
                   const Bm25Params& p = {}) {
    p.validate();
    if (ix.collection_length(f) == 0) return 0.0;
    const double avglen = ix.average_length(f);
    const double len_norm = 1.0 - p.b + p.b * static_cast<double>(ix.field_length(d, f)) / avglen;
    double score = 0;
    for (const auto& q : query) {
        const auto tf = static_cast<double>(ix.tf(d, f, q));
        if (tf == 0) continue;
        score += ix.idf(f, q) * (tf * (p.k1 + 1.0)) / (tf + p.k1 * len_norm);
    }
    return score;
}

inline double bm25(const FieldedIndex& ix, std::span<const std::string> query, std::string_view entity, Field f,
                   const Bm25Params& p = {}) {
    return bm25(ix, query, ix.require(entity), f, p);
}

/// Distinct query terms present in the field.
inline double coordinate_match(const FieldedIndex& ix, std::span<const std::string> query, FieldedIndex::DocId d,
                               Field f) {
    std::vector<std::string_view> distinct(query.begin(), query.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    int n = 0;
    for (auto t : distinct)
        if (ix.tf(d, f, t) > 0) ++n;
    return n;
}

inline double coordinate_match(const FieldedIndex& ix, std::span<const std::string> query, std::string_view entity,
                               Field f) {
    return coordinate_match(ix, query, ix.require(entity), f);
}

/// Cosine between tf*idf vectors of the query and the field.
inline double cosine_sim(const FieldedIndex& ix, std::span<const std::string> query, FieldedIndex::DocId d, Field f) {
    std::map<std::string_view, double> qtf;
    for (const auto& q : query) qtf[q] += 1.0;
    double dot = 0, qnorm = 0;
    for (const auto& [term, count] : qtf) {
        const double w = ix.idf(f, term);
        const double qv = count * w;
        qnorm += qv * qv;
        dot += qv * static_cast<double>(ix.tf(d, f, term)) * w;
    }
    const double dnorm = ix.tfidf_norm(d, f);
    if (qnorm == 0 || dnorm == 0) return 0.0;
    return dot / (std::sqrt(qnorm) * dnorm);
}

inline double cosine_sim(const FieldedIndex& ix, std::span<const std::string> query, std::string_view entity,
                         Field f) {
    return cosine_sim(ix, query, ix.require(entity), f);
}

struct Candidate {
    std::string entity;
    FieldedIndex::DocId doc = 0;
    double score = 0;
};

/// Descending score, ascending entity id on ties.
inline bool candidate_before(const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entity < b.entity;
}

/// Top-k entities by FSDM among those sharing at least one query term.
inline std::vector<Candidate> generate_candidates(const FieldedIndex& ix, std::span<const std::string> query,
                                                  const FsdmParams& p, std::size_t k = 100) {
    detail::require_query(query);
    if (k < 1) throw ConfigError("candidate depth k must be >= 1");
    p.validate();
    std::vector<Candidate> out;
    for (auto d : ix.matching_docs(query)) out.push_back({ix.doc(d).id, d, fsdm_score(ix, query, d, p)});
    std::sort(out.begin(), out.end(), candidate_before);
    if (out.size() > k) out.resize(k);
    return out;
}

} // namespace erank
