#pragma once

// TransE: entities and relations in one vector space with h + r ~ t, trained
// by SGD on the margin ranking loss [margin + d(pos) - d(neg)]_+ against
// uniformly corrupted triples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "erank/corpus.hpp"
#include "erank/entmatch.hpp"
#include "erank/error.hpp"
#include "erank/random.hpp"

namespace erank {

enum class Norm { l1, l2 };

struct TransEConfig {
    std::size_t dim = 100;
    double margin = 1.0;
    double learning_rate = 0.001;
    std::size_t epochs = 1000;
    std::size_t negatives = 1;
    Norm norm = Norm::l2;
    std::uint64_t seed = 42;
    /// 1 = deterministic single writer. >1 = parallel SGD with striped row
    /// locks; results then depend on scheduling.
    std::size_t threads = 1;

    void validate() const {
        if (dim < 1) throw ConfigError("TransE dim must be >= 1");
        if (!(margin > 0)) throw ConfigError("TransE margin must be > 0");
        if (!(learning_rate > 0)) throw ConfigError("TransE learning rate must be > 0");
        if (negatives < 1) throw ConfigError("TransE needs at least one negative per positive");
        if (threads < 1) throw ConfigError("TransE threads must be >= 1");
    }
};

struct IndexedTriple {
    std::uint32_t head;
    std::uint32_t relation;
    std::uint32_t tail;

    bool operator==(const IndexedTriple&) const = default;
};

/// Positive triples over sorted entity and relation vocabularies.
class TripleSet {
public:
    TripleSet() = default;

    /// Literal-tailed triples are ignored.
    static TripleSet from_triples(std::span<const Triple> triples) {
        std::set<std::string> ents, rels;
        for (const auto& t : triples) {
            if (t.tail_kind != TailKind::entity) continue;
            ents.insert(t.head);
            ents.insert(t.tail);
            rels.insert(t.relation);
        }
        TripleSet s;
        s.entities_.assign(ents.begin(), ents.end());
        s.relations_.assign(rels.begin(), rels.end());
        for (const auto& t : triples) {
            if (t.tail_kind != TailKind::entity) continue;
            s.triples_.push_back({s.entity_index(t.head), s.relation_index(t.relation), s.entity_index(t.tail)});
        }
        return s;
    }

    const std::vector<std::string>& entities() const { return entities_; }
    const std::vector<std::string>& relations() const { return relations_; }
    std::span<const IndexedTriple> triples() const { return triples_; }
    std::size_t size() const { return triples_.size(); }
    bool empty() const { return triples_.empty(); }

    std::uint32_t entity_index(std::string_view id) const { return lookup(entities_, id, "entity"); }
    std::uint32_t relation_index(std::string_view id) const { return lookup(relations_, id, "relation"); }

private:
    static std::uint32_t lookup(const std::vector<std::string>& v, std::string_view id, const char* what) {
        auto it = std::lower_bound(v.begin(), v.end(), id);
        if (it == v.end() || *it != id) throw LookupError(std::string("unknown ") + what + ": " + std::string(id));
        return static_cast<std::uint32_t>(it - v.begin());
    }

    std::vector<std::string> entities_;
    std::vector<std::string> relations_;
    std::vector<IndexedTriple> triples_;
};

namespace detail {

inline double distance(std::span<const double> h, std::span<const double> r, std::span<const double> t, Norm norm) {
    double acc = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double x = h[i] + r[i] - t[i];
        acc += norm == Norm::l1 ? std::abs(x) : x * x;
    }
    return norm == Norm::l1 ? acc : std::sqrt(acc);
}

/// d||h + r - t|| / dh, with the zero vector as subgradient at 0.
inline void distance_gradient(std::span<const double> h, std::span<const double> r, std::span<const double> t,
                              Norm norm, std::span<double> out) {
    if (norm == Norm::l1) {
        for (std::size_t i = 0; i < h.size(); ++i) {
            const double x = h[i] + r[i] - t[i];
            out[i] = x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
        }
        return;
    }
    const double d = distance(h, r, t, norm);
    for (std::size_t i = 0; i < h.size(); ++i) out[i] = d > 0 ? (h[i] + r[i] - t[i]) / d : 0.0;
}

inline void normalize_l2(std::span<double> v) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n == 0) return;
    for (double& x : v) x /= n;
}

} // namespace detail

/// ||v_h + v_r - v_t|| under `norm`.
inline double energy(const EmbeddingStore& store, std::string_view h, std::string_view r, std::string_view t,
                     Norm norm = Norm::l2) {
    auto vh = store.entities.lookup(h);
    auto vr = store.relations.lookup(r);
    auto vt = store.entities.lookup(t);
    if (!vh) throw LookupError("no embedding for entity " + std::string(h));
    if (!vr) throw LookupError("no embedding for relation " + std::string(r));
    if (!vt) throw LookupError("no embedding for entity " + std::string(t));
    return detail::distance(*vh, *vr, *vt, norm);
}

inline double energy(const EmbeddingStore& store, const IndexedTriple& x, Norm norm = Norm::l2) {
    return detail::distance(store.entities.row(x.head), store.relations.row(x.relation), store.entities.row(x.tail),
                            norm);
}

inline double hinge_loss(double d_pos, double d_neg, double margin) { return std::max(0.0, margin + d_pos - d_neg); }

struct Corruption {
    IndexedTriple triple;
    bool replaced_head = false;
};

/// Replaces head or tail (fair coin) by a different, uniformly drawn entity.
inline Corruption corrupt(const IndexedTriple& x, std::size_t entity_count, Rng& rng) {
    if (entity_count < 2) throw ConfigError("corruption needs at least 2 entities");
    Corruption c{x, rng.coin()};
    auto& slot = c.replaced_head ? c.triple.head : c.triple.tail;
    auto pick = static_cast<std::uint32_t>(rng.uniform_index(entity_count - 1));
    if (pick >= slot) ++pick;
    slot = pick;
    return c;
}

/// One SGD step on a (positive, negative) pair. Returns the hinge loss
/// before the step; when it is 0 nothing is touched. No projection here;
/// train_transe() projects all entity rows once per epoch.
inline double sgd_step(EmbeddingStore& store, const IndexedTriple& pos, const IndexedTriple& neg,
                       const TransEConfig& cfg) {
    auto& E = store.entities;
    auto& R = store.relations;
    const double dp = energy(store, pos, cfg.norm);
    const double dn = energy(store, neg, cfg.norm);
    const double loss = hinge_loss(dp, dn, cfg.margin);
    if (loss <= 0) return 0.0;

    const std::size_t dim = E.dim();
    std::vector<double> gp(dim), gn(dim);
    detail::distance_gradient(E.row(pos.head), R.row(pos.relation), E.row(pos.tail), cfg.norm, gp);
    detail::distance_gradient(E.row(neg.head), R.row(neg.relation), E.row(neg.tail), cfg.norm, gn);

    const double lr = cfg.learning_rate;
    auto ph = E.mutable_row(pos.head), pt = E.mutable_row(pos.tail);
    auto nh = E.mutable_row(neg.head), nt = E.mutable_row(neg.tail);
    auto pr = R.mutable_row(pos.relation), nr = R.mutable_row(neg.relation);
    for (std::size_t i = 0; i < dim; ++i) {
        ph[i] -= lr * gp[i];
        pr[i] -= lr * gp[i];
        pt[i] += lr * gp[i];
        nh[i] += lr * gn[i];
        nr[i] += lr * gn[i];
        nt[i] -= lr * gn[i];
    }
    return loss;
}

/// Uniform in [-6/sqrt(dim), 6/sqrt(dim)]; entity rows then unit-normalized.
inline EmbeddingStore initialize_embeddings(const TripleSet& set, const TransEConfig& cfg, Rng& rng) {
    EmbeddingStore store{EmbeddingTable(cfg.dim), EmbeddingTable(cfg.dim)};
    const double bound = 6.0 / std::sqrt(static_cast<double>(cfg.dim));
    std::vector<double> v(cfg.dim);
    for (const auto& e : set.entities()) {
        for (auto& x : v) x = rng.uniform_real(-bound, bound);
        detail::normalize_l2(v);
        store.entities.add(e, v);
    }
    for (const auto& r : set.relations()) {
        for (auto& x : v) x = rng.uniform_real(-bound, bound);
        store.relations.add(r, v);
    }
    return store;
}

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

inline EmbeddingStore train_transe(const TripleSet& set, const TransEConfig& cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (set.empty()) throw ConfigError("TransE needs a non-empty triple set");
    if (set.entities().size() < 2) throw ConfigError("TransE needs at least 2 entities");
    Rng rng(cfg.seed);
    EmbeddingStore store = initialize_embeddings(set, cfg, rng);
    const auto positives = set.triples();
    const std::size_t n_ent = set.entities().size();
    std::vector<std::size_t> order(positives.size());

    constexpr std::size_t kStripes = 64;
    std::vector<std::mutex> ent_locks(kStripes), rel_locks(kStripes);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(std::span<std::size_t>(order));
        double total = 0;

        if (cfg.threads == 1) {
            for (auto i : order)
                for (std::size_t k = 0; k < cfg.negatives; ++k)
                    total += sgd_step(store, positives[i], corrupt(positives[i], n_ent, rng).triple, cfg);
        } else {
            const std::uint64_t epoch_seed = rng.next();
            std::vector<double> partial(cfg.threads, 0.0);
            std::vector<std::thread> workers;
            for (std::size_t w = 0; w < cfg.threads; ++w) {
                workers.emplace_back([&, w] {
                    Rng local(splitmix64(epoch_seed + w));
                    for (std::size_t j = w; j < order.size(); j += cfg.threads) {
                        const auto& pos = positives[order[j]];
                        for (std::size_t k = 0; k < cfg.negatives; ++k) {
                            const auto neg = corrupt(pos, n_ent, local).triple;
                            std::set<std::size_t> es{pos.head % kStripes, pos.tail % kStripes, neg.head % kStripes,
                                                     neg.tail % kStripes};
                            std::vector<std::unique_lock<std::mutex>> held;
                            held.emplace_back(rel_locks[pos.relation % kStripes]);
                            for (auto s : es) held.emplace_back(ent_locks[s]);
                            partial[w] += sgd_step(store, pos, neg, cfg);
                        }
                    }
                });
            }
            for (auto& t : workers) t.join();
            for (double p : partial) total += p;
        }
        for (std::size_t e = 0; e < n_ent; ++e) detail::normalize_l2(store.entities.mutable_row(e));
        if (on_epoch) on_epoch(epoch, total / static_cast<double>(positives.size() * cfg.negatives));
    }
    return store;
}

} // namespace erank
