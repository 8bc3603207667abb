// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "erank/erank.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace erank;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail = what;
        pass = pass && ok;
    }
};

using Check = std::function<Outcome()>;

// ---------------------------------------------------------------- 1
Outcome reduction_identities() {
    Outcome o;
    Rng rng(101);
    std::size_t comparisons = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const auto ix = FieldedIndex::build(oracle::random_corpus(rng, 40, 30));
        const auto q = oracle::random_query(rng);
        for (FieldedIndex::DocId d = 0; d < ix.entity_count(); ++d) {
            for (Field f : kAllFields) {
                if (ix.collection_length(f) == 0) continue;
                SdmParams unigram_only{1.0, 0.0, 0.0, 2500.0};
                double sum = 0;
                for (const auto& t : q) sum += lm_unigram(ix, d, f, t, 2500.0);
                o.require(sdm_score(ix, q, d, f, unigram_only) == sum, "sdm(1,0,0) != sum lm");
                const auto one_hot = FsdmParams::one_hot(f, 2500.0);
                const double a = fsdm_score(ix, q, d, one_hot);
                const double b = sdm_score(ix, q, d, f, SdmParams{});
                o.require(std::abs(a - b) <= 1e-12, "one-hot fsdm differs from sdm by " + io::format_double(a - b));
                ++comparisons;
            }
        }
    }
    if (o.pass) o.detail = std::to_string(comparisons) + " (doc, field) pairs";
    return o;
}

// ---------------------------------------------------------------- 2
Outcome counting_oracle() {
    Outcome o;
    Rng rng(202);
    std::size_t checks = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t w = 2 + rng.uniform_index(9);
        auto corpus = oracle::random_corpus(rng, 100, 50, 6);
        const auto ref = oracle::collection(corpus, w);
        const auto ix = FieldedIndex::build(corpus, w);
        for (FieldedIndex::DocId d = 0; d < ix.entity_count(); ++d) {
            const auto& doc = ix.doc(d);
            for (Field f : kAllFields) {
                const auto local = oracle::scan(doc.field(f), w);
                for (int a = 0; a < 7; ++a) {
                    const std::string ta = "w" + std::to_string(a);
                    const auto u = ix.unigram_stats(d, f, ta);
                    o.require(u.tf == local.tf(ta) && u.cf == ref.cf(f, ta) && u.field_length == doc.field(f).size() &&
                                  u.collection_length == ref.length(f),
                              "unigram mismatch");
                    for (int b = 0; b < 7; ++b) {
                        const std::string tb = "w" + std::to_string(b);
                        const auto ob = ix.ordered_bigram_stats(d, f, ta, tb);
                        const auto ub = ix.unordered_window_stats(d, f, ta, tb);
                        o.require(ob.tf == oracle::Counts::get(local.ordered, ta, tb) &&
                                      ob.cf == ref.cf_ordered(f, ta, tb),
                                  "ordered mismatch in trial " + std::to_string(trial));
                        o.require(ub.tf == oracle::Counts::get(local.window, ta, tb) &&
                                      ub.cf == ref.cf_window(f, ta, tb),
                                  "window mismatch in trial " + std::to_string(trial));
                        checks += 3;
                    }
                }
            }
        }
    }
    if (o.pass) o.detail = std::to_string(checks) + " statistics over 50 corpora";
    return o;
}

// ---------------------------------------------------------------- 3
Outcome candidate_oracle() {
    Outcome o;
    Rng rng(303);
    for (int trial = 0; trial < 25; ++trial) {
        auto corpus = oracle::random_corpus(rng, 40, 20, 5);
        const auto ix = FieldedIndex::build(corpus);
        const auto q = oracle::random_query(rng, 5, 3);
        FsdmParams p;
        if (trial % 2 == 1) {
            p.weights_t = {0.5, 0.2, 0.1, 0.1, 0.1};
            p.mu = {100, 50, 20, 10, 10};
        }
        const std::size_t k = 1 + rng.uniform_index(30);
        const auto got = generate_candidates(ix, q, p, k);
        const auto want = oracle::exhaustive_candidates(corpus, q, p, k);
        o.require(got.size() == want.size(), "candidate count differs");
        for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i)
            o.require(got[i].entity == want[i].id && got[i].score == want[i].score,
                      "rank " + std::to_string(i) + " differs in trial " + std::to_string(trial));
    }
    if (o.pass) o.detail = "25 corpora, exact scores and order";
    return o;
}

// ---------------------------------------------------------------- 4
Outcome metric_oracle() {
    Outcome o;
    Rng rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        Qrels qrels;
        RunResult run;
        std::map<std::string, std::set<std::string>> rel;
        const std::size_t nq = 1 + rng.uniform_index(8);
        for (std::size_t q = 0; q < nq; ++q) {
            const std::string qid = "q" + std::to_string(q);
            RankedList list;
            const std::size_t pool = 5 + rng.uniform_index(150);
            for (std::size_t e = 0; e < pool; ++e) {
                const std::string eid = "d" + std::to_string(e);
                if (rng.uniform_real() < 0.2) {
                    qrels.set(qid, eid, 1 + static_cast<int>(rng.uniform_index(2)));
                    rel[qid].insert(eid);
                }
                if (rng.uniform_real() < 0.8) list.push_back({eid, std::floor(rng.uniform_real() * 10)});
            }
            if (rel[qid].empty()) {
                qrels.set(qid, "d0", 1);
                rel[qid].insert("d0");
            }
            run.set(qid, list);
        }
        for (const auto& [qid, list] : run.lists()) {
            std::vector<std::string> ranking;
            for (const auto& s : list) ranking.push_back(s.entity);
            const double ap = *average_precision(list, qrels, qid, 100);
            o.require(ap == oracle::average_precision(ranking, rel[qid], 100), "AP mismatch");
            for (std::size_t k : {1, 5, 10, 20})
                o.require(precision_at_k(list, qrels, qid, k) == oracle::precision(ranking, rel[qid], k),
                          "P@k mismatch");
        }
        o.require(permutation_test(run, run, qrels, Metric::map()) == 1.0, "identical runs do not give p = 1");
    }
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> d(8 + rng.uniform_index(13));
        for (auto& x : d) x = rng.uniform_real(-0.3, 0.5);
        const double exact = oracle::exhaustive_permutation(d);
        PermutationOptions ex;
        ex.mode = PermutationMode::exhaustive;
        PermutationOptions sam;
        sam.mode = PermutationMode::sampled;
        sam.iterations = 100000;
        sam.seed = 1000 + static_cast<std::uint64_t>(trial);
        o.require(permutation_test(d, ex) == exact, "exhaustive p differs from enumeration");
        o.require(std::abs(permutation_test(d, sam) - exact) <= 0.01, "sampled p off by more than 0.01");
    }
    if (o.pass) o.detail = "20 run/qrels pairs, 10 permutation sets";
    return o;
}

// ---------------------------------------------------------------- 5
Outcome transe_properties() {
    Outcome o;
    EmbeddingStore s{EmbeddingTable(3), EmbeddingTable(3)};
    s.entities.add("h", std::vector<double>{0.5, -0.25, 1.0});
    s.entities.add("t", std::vector<double>{1.0, 0.5, 0.75});
    s.entities.add("u", std::vector<double>{1.0, 0.5, 0.7500001});
    s.relations.add("r", std::vector<double>{0.5, 0.75, -0.25});
    for (Norm n : {Norm::l1, Norm::l2}) {
        o.require(energy(s, "h", "r", "t", n) <= 1e-9, "translation energy not zero");
        o.require(energy(s, "h", "r", "u", n) > 1e-9, "non-translation energy at zero");
    }

    TransEConfig cfg;
    cfg.dim = 3;
    cfg.margin = 0.5;
    const IndexedTriple pos{0, 0, 1};
    const IndexedTriple far{0, 0, 0};
    auto touched = s;
    const double loss = sgd_step(touched, pos, far, cfg);
    o.require(loss == 0.0 && touched.entities == s.entities && touched.relations == s.relations,
              "inactive hinge changed parameters");

    std::vector<Triple> cycle;
    for (int i = 0; i < 8; ++i)
        cycle.push_back({"n" + std::to_string(i), "next", "n" + std::to_string((i + 1) % 8), TailKind::entity});
    const auto set = TripleSet::from_triples(cycle);
    TransEConfig tc;
    tc.dim = 16;
    tc.epochs = 200;
    tc.seed = 42;
    tc.learning_rate = 0.01;
    tc.margin = 2.0;
    tc.negatives = 10;
    const auto store = train_transe(set, tc);
    double true_e = 0;
    for (const auto& t : set.triples()) true_e += energy(store, t);
    true_e /= static_cast<double>(set.size());
    Rng rng(7);
    double corrupt_e = 0;
    for (int i = 0; i < 100; ++i)
        corrupt_e += energy(store, corrupt(set.triples()[rng.uniform_index(set.size())], 8, rng).triple);
    corrupt_e /= 100;
    const double ratio = true_e / corrupt_e;
    o.require(ratio <= 0.5, "cycle energy ratio " + io::format_fixed(ratio, 3) + " > 0.5 (true " +
                                io::format_fixed(true_e, 3) + ", corrupt " + io::format_fixed(corrupt_e, 3) + ")");
    if (o.pass) o.detail = "cycle energy ratio " + io::format_fixed(ratio, 3);
    return o;
}

// ---------------------------------------------------------------- 6
Outcome ltr_properties() {
    Outcome o;
    Rng rng(606);
    std::vector<FeatureVector> rows;
    Qrels qrels;
    for (int q = 0; q < 12; ++q) {
        const std::string qid = "q" + std::to_string(q);
        for (int e = 0; e < 15; ++e) {
            const int label = rng.uniform_real() < 0.3 ? 1 : 0;
            FeatureVector fv{qid, "e" + std::to_string(e), {}, label};
            fv.values = {rng.uniform_real(), static_cast<double>(label), rng.uniform_real(), rng.uniform_real()};
            if (label) qrels.set(qid, fv.entity, 1);
            rows.push_back(fv);
        }
    }
    const auto ca = coordinate_ascent_train(rows, qrels);
    for (std::size_t i = 1; i < ca.trace.size(); ++i)
        o.require(ca.trace[i] >= ca.trace[i - 1], "training MAP trace decreased");
    o.require(ca.training_map == 1.0, "label feature not learned: MAP " + io::format_double(ca.training_map));

    std::vector<FeatureVector> sep;
    Qrels sq;
    for (int q = 0; q < 8; ++q) {
        const std::string qid = "s" + std::to_string(q);
        for (int e = 0; e < 10; ++e) {
            const int label = e % 3 == 0 ? 1 : 0;
            const double x = rng.uniform_real();
            sep.push_back({qid, "e" + std::to_string(e), {x, label ? 1.0 + x : x - 1.0, rng.uniform_real()}, label});
            if (label) sq.set(qid, "e" + std::to_string(e), 1);
        }
    }
    const auto svm = ranksvm_train(sep, sq);
    const auto viol = pair_violations(svm, preference_pairs(sep, sq));
    o.require(viol == 0, std::to_string(viol) + " RankSVM pair violations");
    if (o.pass) o.detail = std::to_string(ca.trace.size()) + "-step trace, 0 violations";
    return o;
}

// ----------------------------------------------------------- 7 and 9
fs::path data_dir() { return fs::path(ERANK_DATA_DIR) / "synthetic_kb"; }

fs::path scratch_root() {
    static const fs::path root = fs::temp_directory_path() / ("erank-acceptance-" + std::to_string(::getpid()));
    return root;
}

fs::path write_config(const std::string& name) {
    const auto dir = data_dir();
    nlohmann::ordered_json j;
    j["paths"] = {{"triples", (dir / "triples.nt").string()}, {"mapping", (dir / "mapping.tsv").string()},
                  {"queries", (dir / "queries.jsonl").string()}, {"qrels", (dir / "qrels.txt").string()},
                  {"workdir", (scratch_root() / name).string()}};
    j["variants"] = {"baseline", "+TransE"};
    j["seed"] = 42;
    j["threads"] = 1;
    const auto path = scratch_root() / (name + ".json");
    io::write_file(path, j.dump(2));
    return path;
}

bool run_pipeline(const fs::path& config) {
    const std::string cmd = std::string("\"") + ERANK_CLI_PATH + "\" pipeline --config \"" + config.string() +
                            "\" > \"" + config.string() + ".log\" 2>&1";
    return std::system(cmd.c_str()) == 0;
}

double merged_map(const fs::path& run_file, const Qrels& qrels) {
    auto in = io::open_in(run_file);
    const auto run = RunResult::read(in);
    double total = 0;
    std::size_t n = 0;
    for (const auto& q : qrels.query_ids()) {
        std::set<std::string> rel;
        for (const auto& [e, g] : qrels.judgments().at(q))
            if (g > 0) rel.insert(e);
        if (rel.empty()) continue;
        std::vector<std::string> ranking;
        if (const auto* list = run.find(q))
            for (const auto& s : *list) ranking.push_back(s.entity);
        total += oracle::average_precision(ranking, rel, 100);
        ++n;
    }
    return total / static_cast<double>(n);
}

Outcome end_to_end() {
    Outcome o;
    const auto cfg = write_config("e2e");
    if (!run_pipeline(cfg)) {
        o.require(false, "pipeline failed, see " + cfg.string() + ".log");
        return o;
    }
    auto qin = io::open_in(data_dir() / "qrels.txt");
    const auto qrels = Qrels::read(qin);
    const auto work = scratch_root() / "e2e";
    const double base = merged_map(work / "run.baseline.txt", qrels);
    const double transe = merged_map(work / "run.transe.txt", qrels);
    o.require(transe >= base + 0.02, "+TransE " + io::format_fixed(transe, 4) + " vs baseline " +
                                         io::format_fixed(base, 4));
    if (o.pass) o.detail = "MAP baseline " + io::format_fixed(base, 4) + ", +TransE " + io::format_fixed(transe, 4);
    return o;
}

Outcome determinism() {
    Outcome o;
    const auto a = write_config("det_a");
    const auto b = write_config("det_b");
    if (!run_pipeline(a) || !run_pipeline(b)) {
        o.require(false, "pipeline failed");
        return o;
    }
    std::size_t compared = 0;
    for (const char* name : {"candidates.run", "run.baseline.txt", "run.transe.txt"}) {
        const auto fa = io::read_file(scratch_root() / "det_a" / name);
        const auto fb = io::read_file(scratch_root() / "det_b" / name);
        o.require(!fa.empty() && fa == fb, std::string(name) + " differs between runs");
        ++compared;
    }
    if (o.pass) o.detail = std::to_string(compared) + " run files byte-identical";
    return o;
}

// ---------------------------------------------------------------- 8
Outcome report_fidelity() {
    Outcome o;
    const auto a = format_relative_improvement(0.2454, 0.2597);
    const auto b = format_relative_improvement(0.1998, 0.2270);
    o.require(a == "+5.83%", "got " + a);
    o.require(b == "+13.61%", "got " + b);
    Rng rng(808);
    for (int trial = 0; trial < 200; ++trial) {
        const Variant v = static_cast<Variant>(trial % 4);
        const auto names = feature_names(v);
        std::vector<double> w(names.size());
        for (auto& x : w) x = rng.uniform_real(-1, 1) * (rng.uniform_real() < 0.3 ? 0.0 : 1.0);
        w[0] = 0.5;
        double sum = 0;
        for (const auto& [_, pct] : weight_distribution(names, w, default_feature_group)) sum += pct;
        o.require(std::abs(sum - 100.0) <= 1e-9, "weight percentages sum to " + io::format_double(sum));
    }
    if (o.pass) o.detail = a + ", " + b;
    return o;
}

} // namespace

int main() {
    fs::create_directories(scratch_root());
    const std::vector<std::pair<std::string, Check>> criteria = {
        {"reduction identities", reduction_identities},
        {"counting oracle", counting_oracle},
        {"candidate-generation oracle", candidate_oracle},
        {"metric oracle", metric_oracle},
        {"TransE properties", transe_properties},
        {"LTR properties", ltr_properties},
        {"designed end-to-end check", end_to_end},
        {"report fidelity", report_fidelity},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += out.pass ? 0 : 1;
        std::cout << (out.pass ? "PASS" : "FAIL") << "  criterion " << (i + 1) << ": " << criteria[i].first << " ("
                  << out.detail << "; " << io::format_fixed(secs, 2) << "s)" << std::endl;
    }
    std::error_code ec;
    fs::remove_all(scratch_root(), ec);
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
              << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
