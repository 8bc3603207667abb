#include <gtest/gtest.h>

#include <cmath>

#include "erank/transe.hpp"

using namespace erank;

namespace {

EmbeddingStore manual_store(std::vector<std::pair<std::string, std::vector<double>>> ents,
                            std::vector<std::pair<std::string, std::vector<double>>> rels) {
    const std::size_t dim = ents.front().second.size();
    EmbeddingStore s{EmbeddingTable(dim), EmbeddingTable(dim)};
    for (auto& [id, v] : ents) s.entities.add(id, v);
    for (auto& [id, v] : rels) s.relations.add(id, v);
    return s;
}

std::vector<Triple> cycle(std::size_t n) {
    std::vector<Triple> ts;
    for (std::size_t i = 0; i < n; ++i)
        ts.push_back({"n" + std::to_string(i), "next", "n" + std::to_string((i + 1) % n), TailKind::entity});
    return ts;
}

double norm2(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Mean energy of the positives and of every tail-wrong triple.
std::pair<double, double> separation(const TripleSet& set, const EmbeddingStore& store) {
    double pos = 0, neg = 0;
    std::size_t n_neg = 0;
    for (const auto& t : set.triples()) {
        pos += energy(store, t);
        for (std::uint32_t e = 0; e < set.entities().size(); ++e) {
            if (e == t.tail) continue;
            neg += energy(store, IndexedTriple{t.head, t.relation, e});
            ++n_neg;
        }
    }
    return {pos / static_cast<double>(set.size()), neg / static_cast<double>(n_neg)};
}

TransEConfig cycle_config() {
    TransEConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 200;
    cfg.learning_rate = 0.01;
    cfg.margin = 2.0;
    cfg.negatives = 10;
    return cfg;
}

} // namespace

TEST(Energy, HandValues) {
    const auto s = manual_store({{"h", {1, 0}}, {"t", {0, 1}}}, {{"r", {0, 0}}});
    EXPECT_NEAR(energy(s, "h", "r", "t", Norm::l2), std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(energy(s, "h", "r", "t", Norm::l1), 2.0, 1e-12);
    EXPECT_THROW(energy(s, "h", "nope", "t"), LookupError);
    EXPECT_THROW(energy(s, "ghost", "r", "t"), LookupError);
    EXPECT_THROW(energy(s, "h", "r", "ghost"), LookupError);
}

TEST(Energy, ZeroExactlyForTranslation) {
    const auto s = manual_store({{"h", {0.5, -1}}, {"t", {1.5, 1}}, {"u", {1.5, 1.0001}}}, {{"r", {1, 2}}});
    for (Norm n : {Norm::l1, Norm::l2}) {
        EXPECT_DOUBLE_EQ(energy(s, "h", "r", "t", n), 0.0);
        EXPECT_GT(energy(s, "h", "r", "u", n), 0.0);
    }
}

TEST(Hinge, Values) {
    EXPECT_DOUBLE_EQ(hinge_loss(1.0, 3.0, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(hinge_loss(1.0, 1.5, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(hinge_loss(2.0, 2.0, 1.0), 1.0);
}

TEST(Corruption, TwoEntityVocabularyAlwaysSwaps) {
    Rng rng(1);
    const IndexedTriple x{0, 0, 1};
    for (int i = 0; i < 200; ++i) {
        const auto c = corrupt(x, 2, rng);
        if (c.replaced_head) {
            EXPECT_EQ(c.triple, (IndexedTriple{1, 0, 1}));
        } else {
            EXPECT_EQ(c.triple, (IndexedTriple{0, 0, 0}));
        }
    }
}

TEST(Corruption, ChangesExactlyOneSlotUniformly) {
    Rng rng(2);
    const IndexedTriple x{3, 5, 7};
    constexpr int kDraws = 10000;
    constexpr std::size_t kEntities = 10;
    int heads = 0;
    std::vector<int> hist(kEntities, 0);
    for (int i = 0; i < kDraws; ++i) {
        const auto c = corrupt(x, kEntities, rng);
        EXPECT_EQ(c.triple.relation, 5u);
        if (c.replaced_head) {
            ++heads;
            EXPECT_EQ(c.triple.tail, 7u);
            EXPECT_NE(c.triple.head, 3u);
            ++hist[c.triple.head];
        } else {
            EXPECT_EQ(c.triple.head, 3u);
            EXPECT_NE(c.triple.tail, 7u);
        }
        EXPECT_LT(c.triple.head, kEntities);
        EXPECT_LT(c.triple.tail, kEntities);
    }
    EXPECT_NEAR(static_cast<double>(heads) / kDraws, 0.5, 0.05);
    EXPECT_EQ(hist[3], 0);
    for (std::size_t e = 0; e < kEntities; ++e)
        if (e != 3) {
            EXPECT_NEAR(hist[e], heads / 9.0, heads / 9.0 * 0.25) << e;
        }
}

TEST(Corruption, NeedsTwoEntities) {
    Rng rng(3);
    EXPECT_THROW(corrupt(IndexedTriple{0, 0, 0}, 1, rng), ConfigError);
}

TEST(TripleSetTest, VocabulariesSortedAndLiteralsIgnored) {
    std::vector<Triple> ts{{"b", "r2", "a", TailKind::entity},
                           {"a", "r1", "c", TailKind::entity},
                           {"a", "label", "text", TailKind::literal}};
    const auto s = TripleSet::from_triples(ts);
    EXPECT_EQ(s.entities(), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(s.relations(), (std::vector<std::string>{"r1", "r2"}));
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.triples()[0], (IndexedTriple{1, 1, 0}));
    EXPECT_THROW(s.entity_index("text"), LookupError);
    EXPECT_THROW(s.relation_index("label"), LookupError);
}

TEST(SgdStep, InactiveHingeLeavesStoreUntouched) {
    auto s = manual_store({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {-5, 5}}}, {{"r", {-1, 1}}});
    const auto before = s;
    TransEConfig cfg;
    cfg.margin = 1.0;
    cfg.learning_rate = 0.1;
    // pos (a, r, b) has energy 0, neg (a, r, c) is far away
    EXPECT_DOUBLE_EQ(sgd_step(s, {0, 0, 1}, {0, 0, 2}, cfg), 0.0);
    EXPECT_EQ(s, before);
}

TEST(SgdStep, ActiveHingeLowersLoss) {
    auto s = manual_store({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {0.9, 1.1}}}, {{"r", {0, 0}}});
    TransEConfig cfg;
    cfg.margin = 1.0;
    cfg.learning_rate = 0.05;
    const IndexedTriple pos{0, 0, 1}, neg{0, 0, 2};
    const double first = sgd_step(s, pos, neg, cfg);
    EXPECT_GT(first, 0.0);
    const double after = hinge_loss(energy(s, pos), energy(s, neg), cfg.margin);
    EXPECT_LT(after, first);
}

TEST(Train, ZeroEpochsIsInitialization) {
    auto cfg = cycle_config();
    cfg.epochs = 0;
    const auto set = TripleSet::from_triples(cycle(5));
    const auto store = train_transe(set, cfg);
    const double bound = 6.0 / std::sqrt(16.0);
    for (std::size_t e = 0; e < store.entities.size(); ++e) EXPECT_NEAR(norm2(store.entities.row(e)), 1.0, 1e-12);
    for (double x : store.relations.row(0)) EXPECT_LE(std::abs(x), bound);
    EXPECT_GT(norm2(store.relations.row(0)), 1.0);  // not projected; 16 draws of scale 1.5 land well above 1
}

TEST(Train, EntitiesUnitNormAfterEveryEpoch) {
    auto cfg = cycle_config();
    cfg.epochs = 5;
    const auto set = TripleSet::from_triples(cycle(6));
    std::vector<double> losses;
    const auto store = train_transe(set, cfg, [&](std::size_t epoch, double loss) {
        EXPECT_EQ(epoch, losses.size());
        losses.push_back(loss);
    });
    ASSERT_EQ(losses.size(), 5u);
    for (std::size_t e = 0; e < store.entities.size(); ++e) EXPECT_NEAR(norm2(store.entities.row(e)), 1.0, 1e-12);
    for (double l : losses) EXPECT_GE(l, 0.0);
}

TEST(Train, BitReproducibleSingleThread) {
    const auto set = TripleSet::from_triples(cycle(8));
    auto cfg = cycle_config();
    cfg.epochs = 30;
    const auto a = train_transe(set, cfg);
    const auto b = train_transe(set, cfg);
    EXPECT_EQ(a, b);
    cfg.seed = 43;
    EXPECT_FALSE(train_transe(set, cfg) == a);
}

TEST(Train, CycleSeparatesTrueFromCorrupt) {
    const auto set = TripleSet::from_triples(cycle(8));
    auto cfg = cycle_config();
    const auto [pos0, neg0] = separation(set, train_transe(set, [&] {
                                                 auto c = cfg;
                                                 c.epochs = 0;
                                                 return c;
                                             }()));
    const auto [pos, neg] = separation(set, train_transe(set, cfg));
    EXPECT_LT(pos, neg);
    EXPECT_LT(pos / neg, pos0 / neg0);
}

TEST(Train, ParallelModeStillSeparates) {
    const auto set = TripleSet::from_triples(cycle(8));
    auto cfg = cycle_config();
    cfg.threads = 4;
    const auto store = train_transe(set, cfg);
    const auto [pos, neg] = separation(set, store);
    EXPECT_LT(pos, neg);
    for (std::size_t e = 0; e < store.entities.size(); ++e) EXPECT_NEAR(norm2(store.entities.row(e)), 1.0, 1e-12);
}

TEST(Train, ConfigValidation) {
    const auto set = TripleSet::from_triples(cycle(4));
    auto bad = [&](auto mutate) {
        auto cfg = cycle_config();
        mutate(cfg);
        EXPECT_THROW(train_transe(set, cfg), ConfigError);
    };
    bad([](TransEConfig& c) { c.dim = 0; });
    bad([](TransEConfig& c) { c.margin = 0; });
    bad([](TransEConfig& c) { c.learning_rate = -1; });
    bad([](TransEConfig& c) { c.negatives = 0; });
    bad([](TransEConfig& c) { c.threads = 0; });
    EXPECT_THROW(train_transe(TripleSet{}, cycle_config()), ConfigError);
    const auto selfloop = TripleSet::from_triples(std::vector<Triple>{{"a", "r", "a", TailKind::entity}});
    EXPECT_THROW(train_transe(selfloop, cycle_config()), ConfigError);
}
