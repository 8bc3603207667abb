#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "erank/corpus.hpp"
#include "erank/error.hpp"
#include "erank/io.hpp"

namespace erank {

struct UnigramStats {
    std::uint64_t tf = 0;                 // tf_{t,E_f}
    std::uint64_t cf = 0;                 // cf_{t,f}
    std::uint64_t field_length = 0;       // |E_f|
    std::uint64_t collection_length = 0;  // |C_f|

    bool operator==(const UnigramStats&) const = default;
};

struct BigramStats {
    std::uint64_t tf = 0;
    std::uint64_t cf = 0;

    bool operator==(const BigramStats&) const = default;
};

namespace detail {

/// Positions p in `first` with p+1 in `second`. Both sorted ascending.
inline std::uint64_t count_ordered(std::span<const std::uint32_t> first, std::span<const std::uint32_t> second) {
    std::uint64_t n = 0;
    std::size_t j = 0;
    for (std::uint32_t p : first) {
        while (j < second.size() && second[j] < p + 1) ++j;
        if (j < second.size() && second[j] == p + 1) ++n;
    }
    return n;
}

/// Pairs (p, q), p in `first`, q in `second`, p != q, |p - q| < window.
inline std::uint64_t count_window(std::span<const std::uint32_t> first, std::span<const std::uint32_t> second,
                                  std::size_t window, bool same_term) {
    std::uint64_t n = 0;
    std::size_t lo = 0, hi = 0;
    const auto w = static_cast<std::int64_t>(window);
    for (std::uint32_t p : first) {
        const std::int64_t pp = p;
        while (lo < second.size() && static_cast<std::int64_t>(second[lo]) <= pp - w) ++lo;
        if (hi < lo) hi = lo;
        while (hi < second.size() && static_cast<std::int64_t>(second[hi]) < pp + w) ++hi;
        n += hi - lo;
        if (same_term) --n;  // p itself is in [lo, hi)
    }
    return n;
}

} // namespace detail

/// Immutable positional index over the five entity fields. Bigram collection
/// frequencies are computed on first request and memoized behind a mutex, so
/// concurrent readers see the same answers a full precomputation would give.
class FieldedIndex {
public:
    using TermId = std::uint32_t;
    using DocId = std::uint32_t;

    struct Posting {
        DocId doc;
        std::vector<std::uint32_t> positions;
    };

    static constexpr std::size_t kDefaultWindow = 8;

    FieldedIndex() : cache_(std::make_unique<Cache>()) {}
    FieldedIndex(FieldedIndex&&) noexcept = default;
    FieldedIndex& operator=(FieldedIndex&&) noexcept = default;

    static FieldedIndex build(Corpus corpus, std::size_t window = kDefaultWindow) {
        if (window < 2) throw ConfigError("index window size must be >= 2, got " + std::to_string(window));
        FieldedIndex ix;
        ix.window_ = window;
        ix.corpus_ = std::move(corpus);
        const auto docs = ix.corpus_.docs();
        for (std::size_t fi = 0; fi < kFieldCount; ++fi) ix.fields_[fi].lengths.assign(docs.size(), 0);

        for (DocId d = 0; d < docs.size(); ++d) {
            for (std::size_t fi = 0; fi < kFieldCount; ++fi) {
                auto& fd = ix.fields_[fi];
                const auto& toks = docs[d].tokens[fi];
                fd.lengths[d] = toks.size();
                fd.total += toks.size();
                for (std::uint32_t pos = 0; pos < toks.size(); ++pos) {
                    const TermId t = ix.intern(toks[pos]);
                    if (fd.postings.size() <= t) fd.postings.resize(ix.terms_.size());
                    auto& plist = fd.postings[t];
                    if (plist.empty() || plist.back().doc != d) plist.push_back({d, {}});
                    plist.back().positions.push_back(pos);
                }
            }
            for (Field f : {Field::similar_entities, Field::related_entities}) {
                for (const auto& e : docs[d].links[field_index(f)]) {
                    ++ix.link_cf_[e];
                    ++ix.total_links_;
                }
            }
        }
        for (auto& fd : ix.fields_) {
            fd.postings.resize(ix.terms_.size());
            fd.cf.assign(ix.terms_.size(), 0);
            for (TermId t = 0; t < fd.postings.size(); ++t)
                for (const auto& p : fd.postings[t]) fd.cf[t] += p.positions.size();
        }
        ix.compute_norms();
        return ix;
    }

    std::size_t window() const { return window_; }
    const Corpus& corpus() const { return corpus_; }
    std::size_t entity_count() const { return corpus_.size(); }
    const EntityDoc& doc(DocId d) const { return corpus_.docs()[d]; }

    std::optional<DocId> find(std::string_view entity) const {
        const auto docs = corpus_.docs();
        auto it = std::lower_bound(docs.begin(), docs.end(), entity,
                                   [](const EntityDoc& e, std::string_view key) { return e.id < key; });
        if (it == docs.end() || it->id != entity) return std::nullopt;
        return static_cast<DocId>(it - docs.begin());
    }

    DocId require(std::string_view entity) const {
        auto d = find(entity);
        if (!d) throw LookupError("entity not in index: " + std::string(entity));
        return *d;
    }

    std::optional<TermId> term_id(std::string_view term) const {
        auto it = vocab_.find(std::string(term));
        if (it == vocab_.end()) return std::nullopt;
        return it->second;
    }

    std::uint64_t field_length(DocId d, Field f) const { return fields_[field_index(f)].lengths[d]; }
    std::uint64_t collection_length(Field f) const { return fields_[field_index(f)].total; }

    double average_length(Field f) const {
        return entity_count() == 0 ? 0.0
                                   : static_cast<double>(collection_length(f)) / static_cast<double>(entity_count());
    }

    std::uint64_t cf(Field f, std::string_view term) const {
        auto t = term_id(term);
        return t ? fields_[field_index(f)].cf[*t] : 0;
    }

    std::uint64_t df(Field f, std::string_view term) const {
        auto t = term_id(term);
        return t ? fields_[field_index(f)].postings[*t].size() : 0;
    }

    /// Robertson idf with +1 inside the log, so never negative.
    double idf(Field f, std::string_view term) const {
        const double n = static_cast<double>(entity_count());
        const double d = static_cast<double>(df(f, term));
        return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
    }

    std::span<const std::uint32_t> positions(DocId d, Field f, std::string_view term) const {
        auto t = term_id(term);
        if (!t) return {};
        return positions(d, f, *t);
    }

    std::uint64_t tf(DocId d, Field f, std::string_view term) const { return positions(d, f, term).size(); }

    UnigramStats unigram_stats(DocId d, Field f, std::string_view term) const {
        return {tf(d, f, term), cf(f, term), field_length(d, f), collection_length(f)};
    }
    UnigramStats unigram_stats(std::string_view entity, Field f, std::string_view term) const {
        return unigram_stats(require(entity), f, term);
    }

    BigramStats ordered_bigram_stats(DocId d, Field f, std::string_view t1, std::string_view t2) const {
        auto a = term_id(t1), b = term_id(t2);
        if (!a || !b) return {};
        return {detail::count_ordered(positions(d, f, *a), positions(d, f, *b)),
                cached_cf(Kind::ordered, f, *a, *b)};
    }
    BigramStats ordered_bigram_stats(std::string_view entity, Field f, std::string_view t1,
                                     std::string_view t2) const {
        return ordered_bigram_stats(require(entity), f, t1, t2);
    }

    BigramStats unordered_window_stats(DocId d, Field f, std::string_view t1, std::string_view t2) const {
        auto a = term_id(t1), b = term_id(t2);
        if (!a || !b) return {};
        if (*b < *a) std::swap(a, b);
        return {detail::count_window(positions(d, f, *a), positions(d, f, *b), window_, *a == *b),
                cached_cf(Kind::window, f, *a, *b)};
    }
    BigramStats unordered_window_stats(std::string_view entity, Field f, std::string_view t1,
                                       std::string_view t2) const {
        return unordered_window_stats(require(entity), f, t1, t2);
    }

    /// L2 norm of the entity field's tf*idf vector.
    double tfidf_norm(DocId d, Field f) const { return fields_[field_index(f)].norms[d]; }

    /// Entity-link occurrence counts over SimEn + RelEn.
    std::uint64_t link_cf(std::string_view entity) const {
        auto it = link_cf_.find(entity);
        return it == link_cf_.end() ? 0 : it->second;
    }
    std::uint64_t total_links() const { return total_links_; }

    /// Documents containing at least one of `terms` in any field, ascending.
    std::vector<DocId> matching_docs(std::span<const std::string> terms) const {
        std::vector<DocId> out;
        for (const auto& term : terms) {
            auto t = term_id(term);
            if (!t) continue;
            for (const auto& fd : fields_)
                for (const auto& p : fd.postings[*t]) out.push_back(p.doc);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    // Persistence: a header line followed by the corpus in JSON lines. The
    // postings are a pure function of (corpus, window), so rebuilding on load
    // is lossless.
    static constexpr std::string_view kFormatTag = "erank-index";
    static constexpr int kFormatVersion = 1;

    void save(std::ostream& out) const {
        out << kFormatTag << '\t' << kFormatVersion << "\twindow=" << window_ << "\tentities=" << entity_count()
            << '\n';
        write_corpus(out, corpus_);
    }

    static FieldedIndex load(std::istream& in) {
        std::string header;
        if (!std::getline(in, header)) throw DataError("index file is empty");
        auto parts = io::split_char(io::strip_cr(header), '\t');
        int version = 0;
        std::size_t window = 0, entities = 0;
        if (parts.size() != 4 || parts[0] != kFormatTag || !io::parse_int(parts[1], version) ||
            !parts[2].starts_with("window=") || !io::parse_int(parts[2].substr(7), window) ||
            !parts[3].starts_with("entities=") || !io::parse_int(parts[3].substr(9), entities))
            throw DataError("not an erank index file (bad header)");
        if (version != kFormatVersion) throw DataError("unsupported index format version " + std::to_string(version));
        Corpus corpus = read_corpus(in);
        if (corpus.size() != entities)
            throw DataError("index file truncated: header says " + std::to_string(entities) + " entities, found " +
                            std::to_string(corpus.size()));
        return build(std::move(corpus), window);
    }

private:
    enum class Kind : std::uint8_t { ordered, window };

    struct FieldData {
        std::vector<std::vector<Posting>> postings;  // by term id, postings sorted by doc
        std::vector<std::uint64_t> cf;
        std::vector<std::uint64_t> lengths;
        std::vector<double> norms;
        std::uint64_t total = 0;
    };

    struct Cache {
        std::mutex mu;
        std::map<std::tuple<Kind, std::size_t, TermId, TermId>, std::uint64_t> values;
    };

    TermId intern(const std::string& term) {
        auto [it, inserted] = vocab_.emplace(term, static_cast<TermId>(terms_.size()));
        if (inserted) terms_.push_back(term);
        return it->second;
    }

    std::span<const std::uint32_t> positions(DocId d, Field f, TermId t) const {
        const auto& plist = fields_[field_index(f)].postings[t];
        auto it = std::lower_bound(plist.begin(), plist.end(), d, [](const Posting& p, DocId key) { return p.doc < key; });
        if (it == plist.end() || it->doc != d) return {};
        return it->positions;
    }

    std::uint64_t cached_cf(Kind kind, Field f, TermId a, TermId b) const {
        const auto key = std::make_tuple(kind, field_index(f), a, b);
        {
            std::lock_guard lock(cache_->mu);
            if (auto it = cache_->values.find(key); it != cache_->values.end()) return it->second;
        }
        std::uint64_t total = 0;
        const auto& fd = fields_[field_index(f)];
        const auto& pa = fd.postings[a];
        const auto& pb = fd.postings[b];
        std::size_t j = 0;
        for (const auto& p : pa) {
            while (j < pb.size() && pb[j].doc < p.doc) ++j;
            if (j == pb.size()) break;
            if (pb[j].doc != p.doc) continue;
            total += kind == Kind::ordered ? detail::count_ordered(p.positions, pb[j].positions)
                                           : detail::count_window(p.positions, pb[j].positions, window_, a == b);
        }
        std::lock_guard lock(cache_->mu);
        cache_->values.emplace(key, total);
        return total;
    }

    void compute_norms() {
        const auto docs = corpus_.docs();
        for (Field f : kAllFields) {
            auto& fd = fields_[field_index(f)];
            fd.norms.assign(docs.size(), 0.0);
            for (TermId t = 0; t < fd.postings.size(); ++t) {
                if (fd.postings[t].empty()) continue;
                const double w = idf(f, terms_[t]);
                for (const auto& p : fd.postings[t]) {
                    const double v = static_cast<double>(p.positions.size()) * w;
                    fd.norms[p.doc] += v * v;
                }
            }
            for (auto& n : fd.norms) n = std::sqrt(n);
        }
    }

    std::size_t window_ = kDefaultWindow;
    Corpus corpus_;
    std::unordered_map<std::string, TermId> vocab_;
    std::vector<std::string> terms_;
    std::array<FieldData, kFieldCount> fields_;
    std::map<std::string, std::uint64_t, std::less<>> link_cf_;
    std::uint64_t total_links_ = 0;
    std::unique_ptr<Cache> cache_;
};

} // namespace erank
