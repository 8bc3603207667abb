#pragma once

// Generator for clustered synthetic knowledge bases. Entities come in
// clusters with dense intra-cluster links, a hub per cluster, and a topic
// word. Every entity's abstract carries its own topic plus a few foreign
// topics, so all candidates retrieved for a topic look alike textually;
// only graph proximity to the annotated hub tells the relevant ones apart.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "erank/corpus.hpp"
#include "erank/entmatch.hpp"
#include "erank/error.hpp"
#include "erank/evalkit.hpp"
#include "erank/random.hpp"

namespace erank {

struct SyntheticSpec {
    std::size_t clusters = 40;
    std::size_t cluster_size = 5;
    std::size_t foreign_topics = 2;   // per entity abstract
    std::size_t noise_edges = 280;    // cross-cluster entity links
    std::size_t filler_min = 12;
    std::size_t filler_max = 24;
    std::size_t vocabulary = 300;
    std::uint64_t seed = 42;
};

struct SyntheticKb {
    std::vector<Triple> triples;
    std::vector<QueryRecord> queries;
    Qrels qrels;
    std::string mapping;  // field mapping file contents
};

namespace detail {

inline std::string pseudo_word(Rng& rng, std::size_t syllables) {
    static constexpr const char* onset[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "pl"};
    static constexpr const char* nucleus[] = {"a", "e", "i", "o", "u", "ai", "ou"};
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
        w += onset[rng.uniform_index(std::size(onset))];
        w += nucleus[rng.uniform_index(std::size(nucleus))];
    }
    return w;
}

inline std::vector<std::string> distinct_words(Rng& rng, std::size_t n, std::size_t syllables,
                                               std::set<std::string>& taken) {
    std::vector<std::string> out;
    while (out.size() < n) {
        auto w = pseudo_word(rng, syllables);
        if (taken.insert(w).second) out.push_back(std::move(w));
    }
    return out;
}

inline std::string entity_id(std::size_t i) {
    std::string n = std::to_string(i);
    return "kb:E" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n;
}

} // namespace detail

inline SyntheticKb make_synthetic_kb(const SyntheticSpec& spec) {
    if (spec.clusters < 2 || spec.cluster_size < 2) throw ConfigError("synthetic KB needs >= 2 clusters of >= 2");
    if (spec.foreign_topics >= spec.clusters) throw ConfigError("too many foreign topics for the cluster count");
    if (spec.filler_min > spec.filler_max) throw ConfigError("filler_min > filler_max");

    Rng rng(spec.seed);
    std::set<std::string> taken;
    const auto topics = detail::distinct_words(rng, spec.clusters, 3, taken);
    const auto filler = detail::distinct_words(rng, spec.vocabulary, 2, taken);
    const auto categories = detail::distinct_words(rng, 12, 2, taken);
    const std::size_t n = spec.clusters * spec.cluster_size;
    const auto cluster_of = [&](std::size_t e) { return e / spec.cluster_size; };
    const auto hub = [&](std::size_t c) { return c * spec.cluster_size; };

    SyntheticKb kb;
    kb.mapping =
        "# relation<TAB>field\n"
        "rdfs:label\tnames\n"
        "kb:category\tcategories\n"
        "rdfs:comment\tattributes\n"
        "#default\tattributes\n";

    const auto words = [&](std::size_t count) {
        std::vector<std::string> w;
        for (std::size_t i = 0; i < count; ++i) w.push_back(filler[rng.uniform_index(filler.size())]);
        return w;
    };
    const auto join = [](const std::vector<std::string>& w) {
        std::string s;
        for (const auto& x : w) s += (s.empty() ? "" : " ") + x;
        return s;
    };

    for (std::size_t e = 0; e < n; ++e) {
        const auto id = detail::entity_id(e);
        kb.triples.push_back({id, "rdfs:label", join(words(2)), TailKind::literal});
        kb.triples.push_back(
            {id, "kb:category", categories[rng.uniform_index(categories.size())], TailKind::literal});

        std::vector<std::string> abs = words(spec.filler_min + rng.uniform_index(spec.filler_max - spec.filler_min + 1));
        std::vector<std::size_t> topic_ids{cluster_of(e)};
        while (topic_ids.size() < 1 + spec.foreign_topics) {
            const auto t = rng.uniform_index(spec.clusters);
            if (std::find(topic_ids.begin(), topic_ids.end(), t) == topic_ids.end()) topic_ids.push_back(t);
        }
        for (auto t : topic_ids) {
            const std::size_t reps = 1 + rng.uniform_index(2);
            for (std::size_t r = 0; r < reps; ++r)
                abs.insert(abs.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(abs.size() + 1)), topics[t]);
        }
        kb.triples.push_back({id, "rdfs:comment", join(abs), TailKind::literal});
    }

    for (std::size_t c = 0; c < spec.clusters; ++c) {
        for (std::size_t a = 0; a < spec.cluster_size; ++a) {
            const std::size_t ea = c * spec.cluster_size + a;
            for (std::size_t b = 0; b < spec.cluster_size; ++b)
                if (a != b)
                    kb.triples.push_back(
                        {detail::entity_id(ea), "kb:relatedTo", detail::entity_id(c * spec.cluster_size + b),
                         TailKind::entity});
            if (ea != hub(c)) {
                kb.triples.push_back({detail::entity_id(ea), "kb:partOf", detail::entity_id(hub(c)), TailKind::entity});
                kb.triples.push_back({detail::entity_id(hub(c)), "kb:hasPart", detail::entity_id(ea), TailKind::entity});
            }
        }
    }
    for (std::size_t k = 0; k < spec.noise_edges; ++k) {
        const std::size_t a = rng.uniform_index(n);
        std::size_t b = rng.uniform_index(n);
        while (cluster_of(b) == cluster_of(a)) b = rng.uniform_index(n);
        kb.triples.push_back({detail::entity_id(a), "kb:mentions", detail::entity_id(b), TailKind::entity});
    }

    for (std::size_t c = 0; c < spec.clusters; ++c) {
        std::string qid = std::to_string(c + 1);
        qid = "Q" + std::string(qid.size() < 2 ? 2 - qid.size() : 0, '0') + qid;
        const double conf = 0.8 + 0.2 * rng.uniform_real();
        const std::string text = topics[c] + " " + filler[rng.uniform_index(filler.size())];
        kb.queries.push_back(make_query(qid, text, {{detail::entity_id(hub(c)), conf}}));
        for (std::size_t a = 0; a < spec.cluster_size; ++a)
            kb.qrels.set(qid, detail::entity_id(c * spec.cluster_size + a), 1);
    }
    return kb;
}

} // namespace erank
