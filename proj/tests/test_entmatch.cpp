#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "erank/entmatch.hpp"
#include "oracles.hpp"

using namespace erank;

namespace {

constexpr double kMu = 100.0;

// e1 links to e2 twice and to e3 once; e2 links back to e1; e3 has no links.
FieldedIndex link_fixture() {
    std::vector<EntityDoc> docs(3);
    docs[0].id = "e1";
    docs[0].links[field_index(Field::related_entities)] = {"e2", "e3"};
    docs[0].links[field_index(Field::similar_entities)] = {"e2"};
    docs[1].id = "e2";
    docs[1].links[field_index(Field::related_entities)] = {"e1"};
    docs[2].id = "e3";
    for (auto& d : docs) d.tokens[field_index(Field::names)] = {"x"};
    return FieldedIndex::build(Corpus(std::move(docs)));
}

EmbeddingStore store_2d(std::vector<std::pair<std::string, std::vector<double>>> rows) {
    EmbeddingStore s;
    s.entities = EmbeddingTable(2);
    for (auto& [id, v] : rows) s.entities.add(id, v);
    return s;
}

} // namespace

TEST(Elr, NoAnnotationsIsZero) {
    const auto ix = link_fixture();
    const auto q = make_query("q", "anything");
    for (const auto& d : ix.corpus().docs()) EXPECT_DOUBLE_EQ(elr_feature(q, d, ix, {kMu}), 0.0);
}

TEST(Elr, SelfIdOnlyEntity) {
    const auto ix = link_fixture();
    const auto q = make_query("q", "x", {{"e3", 1.0}});
    // e3 has no links, so its entity vocabulary is only itself; e3 occurs once elsewhere (in e1)
    const double collection = 4.0 + 3.0;  // four links plus one self id per entity
    const double want = std::log((1.0 + kMu * 2.0 / collection) / (1.0 + kMu));
    EXPECT_NEAR(elr_feature(q, *ix.corpus().find("e3"), ix, {kMu}), want, 1e-12);
}

TEST(Elr, CountsLinksAcrossBothEntityFields) {
    const auto ix = link_fixture();
    const auto q = make_query("q", "x", {{"e2", 1.0}});
    const double collection = 7.0;
    const double cf = 3.0;  // two links from e1, plus e2's own id
    const double want = std::log((2.0 + kMu * cf / collection) / (4.0 + kMu));
    EXPECT_NEAR(elr_feature(q, *ix.corpus().find("e1"), ix, {kMu}), want, 1e-12);
}

TEST(Elr, LinearInConfidence) {
    const auto ix = link_fixture();
    const auto& d = *ix.corpus().find("e1");
    const double a = elr_feature(make_query("q", "x", {{"e2", 1.0}}), d, ix, {kMu});
    const double b = elr_feature(make_query("q", "x", {{"e3", 1.0}}), d, ix, {kMu});
    const double mixed = elr_feature(make_query("q", "x", {{"e2", 0.3}, {"e3", 0.7}}), d, ix, {kMu});
    EXPECT_NEAR(mixed, 0.3 * a + 0.7 * b, 1e-12);
}

TEST(Elr, UnknownAnnotationIsFloored) {
    const auto ix = link_fixture();
    const auto q = make_query("q", "x", {{"ghost", 1.0}});
    const double v = elr_feature(q, *ix.corpus().find("e1"), ix, {kMu});
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, std::log(kFloorEpsilon / (4.0 + kMu)), 1e-12);
}

TEST(Elr, LinkedCandidateBeatsUnlinked) {
    const auto ix = link_fixture();
    const auto q = make_query("q", "x", {{"e2", 0.9}});
    EXPECT_GT(elr_feature(q, *ix.corpus().find("e1"), ix, {kMu}), elr_feature(q, *ix.corpus().find("e3"), ix, {kMu}));
    EXPECT_THROW(elr_feature(q, *ix.corpus().find("e1"), ix, {0.0}), ConfigError);
}

TEST(TransEFeature, IdenticalVectorIsConfidence) {
    const auto s = store_2d({{"a", {0.3, 0.4}}, {"b", {0.3, 0.4}}});
    EXPECT_NEAR(transe_feature(make_query("q", "x", {{"a", 1.0}}), s, "b"), 1.0, 1e-12);
    EXPECT_NEAR(transe_feature(make_query("q", "x", {{"a", 0.25}}), s, "b"), 0.25, 1e-12);
}

TEST(TransEFeature, MissingVectorsContributeNothing) {
    const auto s = store_2d({{"a", {1, 0}}, {"b", {0, 1}}});
    EXPECT_DOUBLE_EQ(transe_feature(make_query("q", "x", {{"a", 1.0}}), s, "nobody"), 0.0);
    EXPECT_DOUBLE_EQ(transe_feature(make_query("q", "x", {{"ghost", 1.0}}), s, "a"), 0.0);
    EXPECT_DOUBLE_EQ(transe_feature(make_query("q", "x"), s, "a"), 0.0);
}

TEST(TransEFeature, OpposingAnnotationsCancel) {
    const auto s = store_2d({{"up", {0, 1}}, {"down", {0, -1}}, {"cand", {0, 2}}});
    EXPECT_NEAR(transe_feature(make_query("q", "x", {{"up", 0.5}, {"down", 0.5}}), s, "cand"), 0.0, 1e-12);
}

TEST(TransEFeature, ScaleInvariant) {
    Rng rng(31);
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> a{rng.uniform_real() - 0.5, rng.uniform_real() - 0.5};
        const std::vector<double> b{rng.uniform_real() - 0.5, rng.uniform_real() - 0.5};
        const double k = 0.1 + 10 * rng.uniform_real();
        const auto s1 = store_2d({{"a", a}, {"b", b}});
        const auto s2 = store_2d({{"a", a}, {"b", {b[0] * k, b[1] * k}}});
        const auto q = make_query("q", "x", {{"a", 0.7}});
        EXPECT_NEAR(transe_feature(q, s1, "b"), transe_feature(q, s2, "b"), 1e-12);
        EXPECT_LE(std::abs(transe_feature(q, s1, "b")), 0.7 + 1e-12);
    }
}

TEST(TransEFeature, ZeroVectorGivesZero) {
    const auto s = store_2d({{"a", {0, 0}}, {"b", {1, 1}}});
    EXPECT_DOUBLE_EQ(transe_feature(make_query("q", "x", {{"a", 1.0}}), s, "b"), 0.0);
}

TEST(TransEFeature, CorruptStores) {
    EXPECT_THROW(cosine(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), DataError);
    EmbeddingStore empty;
    EXPECT_THROW(transe_feature(make_query("q", "x"), empty, "a"), DataError);
    EmbeddingStore mixed = store_2d({{"a", {1, 0}}});
    mixed.relations = EmbeddingTable(3);
    mixed.relations.add("r", std::vector<double>{1, 0, 0});
    EXPECT_THROW(transe_feature(make_query("q", "x"), mixed, "a"), DataError);
}

TEST(Queries, ParseJsonLines) {
    std::istringstream in(
        "{\"id\": \"Q1\", \"text\": \"Harry Potter\", \"annotations\": [{\"entity\": \"e1\", \"score\": 0.5}]}\n"
        "\n"
        "{\"id\": 7, \"text\": \"no links\"}\n");
    const auto qs = read_queries(in);
    ASSERT_EQ(qs.size(), 2u);
    EXPECT_EQ(qs[0].tokens, (std::vector<std::string>{"harry", "potter"}));
    EXPECT_EQ(qs[0].annotations, (std::vector<Annotation>{{"e1", 0.5}}));
    EXPECT_EQ(qs[1].id, "7");
    EXPECT_TRUE(qs[1].annotations.empty());

    std::stringstream buf;
    write_queries(buf, qs);
    const auto back = read_queries(buf);
    EXPECT_EQ(back[0].annotations, qs[0].annotations);
    EXPECT_EQ(back[1].text, "no links");
}

TEST(Queries, RejectsBadRecords) {
    for (const char* bad : {"not json\n", "{\"text\": \"missing id\"}\n", "{\"id\": \"q\"}\n",
                            "{\"id\": \"q\", \"text\": \"t\", \"annotations\": [{\"entity\": \"e\", \"score\": 1.5}]}\n",
                            "{\"id\": \"q\", \"text\": \"t\", \"annotations\": [{\"entity\": \"e\"}, {\"entity\": \"e\"}]}\n"}) {
        std::istringstream in(bad);
        EXPECT_THROW(read_queries(in), DataError) << bad;
    }
}

TEST(Queries, MergeAnnotationsReplacesPerQuery) {
    std::vector<QueryRecord> qs{make_query("q1", "a", {{"old", 1.0}}), make_query("q2", "b", {{"keep", 0.4}})};
    std::istringstream in("# qid entity score\nq1\te1\t0.9\nq1 e2 0.1\nq9\te3\t1\n");
    merge_annotations(in, qs);
    EXPECT_EQ(qs[0].annotations, (std::vector<Annotation>{{"e1", 0.9}, {"e2", 0.1}}));
    EXPECT_EQ(qs[1].annotations, (std::vector<Annotation>{{"keep", 0.4}}));

    std::istringstream bad("q1\te1\n");
    EXPECT_THROW(merge_annotations(bad, qs), DataError);
    std::istringstream out_of_range("q1\te1\t-0.5\n");
    EXPECT_THROW(merge_annotations(out_of_range, qs), DataError);
}

TEST(EmbeddingFile, WriteAndRead) {
    EmbeddingTable t(3);
    t.add("kb:A", std::vector<double>{0.1, -0.2, 1.0 / 3.0});
    t.add("kb:B", std::vector<double>{0, 1e-17, -5});
    std::stringstream buf;
    t.write(buf);
    EXPECT_EQ(EmbeddingTable::read(buf), t);
}

TEST(EmbeddingFile, Errors) {
    for (const char* bad : {"", "2\n", "1 0\n", "1 2\na 1\n", "1 2\na 1 x\n", "2 2\na 1 2\n", "2 2\na 1 2\na 3 4\n",
                            "1 2\na nan 1\n"}) {
        std::istringstream in(bad);
        EXPECT_THROW(EmbeddingTable::read(in), DataError) << bad;
    }
    EXPECT_THROW(EmbeddingTable(0), ConfigError);
    EmbeddingTable t(2);
    EXPECT_THROW(t.add("a", std::vector<double>{1}), DataError);
}
