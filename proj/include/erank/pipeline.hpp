#pragma once

// Experiment orchestration behind the `erank` CLI. Each stage reads its
// inputs from the config paths or the workdir and writes plain-file
// artifacts into the workdir, each with a `<file>.meta.json` provenance
// sidecar carrying the config hash.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "erank/corpus.hpp"
#include "erank/entmatch.hpp"
#include "erank/error.hpp"
#include "erank/evalkit.hpp"
#include "erank/features.hpp"
#include "erank/index.hpp"
#include "erank/io.hpp"
#include "erank/ltr.hpp"
#include "erank/parallel.hpp"
#include "erank/report.hpp"
#include "erank/textrank.hpp"
#include "erank/transe.hpp"

namespace erank {

namespace fs = std::filesystem;

struct ExperimentPaths {
    fs::path triples;
    fs::path mapping;      // optional
    fs::path queries;
    fs::path annotations;  // optional, `qid entity score` lines
    fs::path qrels;
    fs::path workdir;
};

struct EvalSettings {
    std::size_t cutoff = 100;
    std::size_t permutation_iterations = 100000;
    double alpha = 0.05;
    double tie_epsilon = 1e-6;
};

enum class TrainerKind { coordinate_ascent, ranksvm };

struct ExperimentConfig {
    ExperimentPaths paths;
    Variant variant = Variant::baseline;
    std::vector<Variant> variants;  // run order; defaults to {variant}
    std::uint64_t seed = 42;
    std::size_t threads = 1;

    std::size_t window = FieldedIndex::kDefaultWindow;
    std::size_t candidates_k = 100;
    FsdmParams candidate_fsdm;
    FeatureConfig features;
    TransEConfig transe;

    TrainerKind trainer = TrainerKind::coordinate_ascent;
    CoordinateAscentConfig coordinate_ascent;
    RankSvmConfig ranksvm;
    FeatureNormalization normalization = FeatureNormalization::none;
    std::size_t folds = 5;
    std::uint64_t fold_seed = 42;

    EvalSettings eval;
    std::vector<std::pair<std::string, fs::path>> compare_runs;  // explicit `compare` inputs

    nlohmann::ordered_json resolved;  // fully defaulted config
    std::string hash;                 // FNV-1a 64 of `resolved` without threads, hex
};

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
};

namespace detail {

inline FieldWeights read_weights(const nlohmann::json& j, const FieldWeights& fallback) {
    if (j.is_null()) return fallback;
    if (j.is_number()) {
        FieldWeights w{};
        w.fill(j.get<double>());
        return w;
    }
    if (j.is_array()) {
        auto v = j.get<std::vector<double>>();
        if (v.size() != kFieldCount) throw ConfigError("field weight arrays need exactly 5 entries");
        FieldWeights w{};
        std::copy(v.begin(), v.end(), w.begin());
        return w;
    }
    FieldWeights w = fallback;
    for (Field f : kAllFields)
        if (j.contains(std::string(field_name(f)))) w[field_index(f)] = j[std::string(field_name(f))].get<double>();
    return w;
}

inline nlohmann::ordered_json weights_json(const FieldWeights& w) { return nlohmann::ordered_json(w); }

inline void read_lambdas(const nlohmann::json& j, double& t, double& o, double& u) {
    if (j.is_null()) return;
    auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("lambda needs three entries [T, O, U]");
    t = v[0];
    o = v[1];
    u = v[2];
}

inline FsdmParams read_fsdm(const nlohmann::json& j) {
    FsdmParams p;
    if (j.is_null()) return p;
    read_lambdas(j.value("lambda", nlohmann::json()), p.lambda_t, p.lambda_o, p.lambda_u);
    p.mu = read_weights(j.value("mu", nlohmann::json()), p.mu);
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        p.weights_t = read_weights(w.value("T", nlohmann::json()), p.weights_t);
        p.weights_o = read_weights(w.value("O", nlohmann::json()), p.weights_o);
        p.weights_u = read_weights(w.value("U", nlohmann::json()), p.weights_u);
    }
    p.validate();
    return p;
}

inline nlohmann::ordered_json fsdm_json(const FsdmParams& p) {
    nlohmann::ordered_json j;
    j["lambda"] = {p.lambda_t, p.lambda_o, p.lambda_u};
    j["mu"] = weights_json(p.mu);
    j["weights"] = {{"T", weights_json(p.weights_t)}, {"O", weights_json(p.weights_o)}, {"U", weights_json(p.weights_u)}};
    return j;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline nlohmann::json section(const nlohmann::json& j, const char* key) {
    if (j.contains(key) && j[key].is_object()) return j[key];
    return nlohmann::json::object();
}

} // namespace detail

/// Parses a JSON config with full defaulting. Relative paths resolve against
/// the config file's directory.
inline ExperimentConfig parse_config(const nlohmann::json& j, const fs::path& base_dir,
                                     const ConfigOverrides& ov = {}) {
    using detail::get_or;
    using detail::section;
    ExperimentConfig c;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");

    const auto paths = section(j, "paths");
    const auto resolve = [&](const char* key, bool required) -> fs::path {
        auto s = get_or<std::string>(paths, key, "");
        if (s.empty()) {
            if (required) throw ConfigError(std::string("config: paths.") + key + " is required");
            return {};
        }
        fs::path p(s);
        return p.is_absolute() ? p : (base_dir / p).lexically_normal();
    };
    c.paths.triples = resolve("triples", true);
    c.paths.mapping = resolve("mapping", false);
    c.paths.queries = resolve("queries", true);
    c.paths.annotations = resolve("annotations", false);
    c.paths.qrels = resolve("qrels", true);
    c.paths.workdir = resolve("workdir", true);
    for (const auto* p : {&c.paths.triples, &c.paths.mapping, &c.paths.queries, &c.paths.annotations, &c.paths.qrels})
        if (!p->empty() && !fs::exists(*p)) throw DataError("config references missing file " + p->string());

    const auto vname = get_or<std::string>(j, "variant", "baseline");
    auto v = parse_variant(vname);
    if (!v) throw ConfigError("unknown variant '" + vname + "' (baseline, +ELR, +TransE, +both)");
    c.variant = *v;
    for (const auto& s : get_or<std::vector<std::string>>(j, "variants", {})) {
        auto pv = parse_variant(s);
        if (!pv) throw ConfigError("unknown variant '" + s + "'");
        if (std::find(c.variants.begin(), c.variants.end(), *pv) == c.variants.end()) c.variants.push_back(*pv);
    }
    if (c.variants.empty()) c.variants.push_back(c.variant);

    c.seed = ov.seed.value_or(get_or<std::uint64_t>(j, "seed", 42));
    c.threads = ov.threads.value_or(get_or<std::size_t>(j, "threads", 0));
    if (c.threads == 0) c.threads = default_threads();

    const auto index = section(j, "index");
    c.window = get_or<std::size_t>(index, "window", FieldedIndex::kDefaultWindow);
    if (c.window < 2) throw ConfigError("index.window must be >= 2");

    const auto cand = section(j, "candidates");
    c.candidates_k = get_or<std::size_t>(cand, "k", 100);
    if (c.candidates_k < 1) throw ConfigError("candidates.k must be >= 1");
    c.candidate_fsdm = detail::read_fsdm(j.value("fsdm", nlohmann::json()));

    const auto feat = section(j, "features");
    c.features.fsdm = j.contains("feature_fsdm") ? detail::read_fsdm(j["feature_fsdm"]) : c.candidate_fsdm;
    const auto sdm = section(j, "sdm");
    detail::read_lambdas(sdm.value("lambda", nlohmann::json()), c.features.sdm.lambda_t, c.features.sdm.lambda_o,
                         c.features.sdm.lambda_u);
    c.features.sdm.mu = get_or<double>(sdm, "mu", 2500.0);
    c.features.sdm.validate();
    c.features.lm_mu = get_or<double>(section(j, "lm"), "mu", 2500.0);
    if (!(c.features.lm_mu > 0)) throw ConfigError("lm.mu must be > 0");
    const auto bm = section(j, "bm25");
    c.features.bm25.k1 = get_or<double>(bm, "k1", 1.2);
    c.features.bm25.b = get_or<double>(bm, "b", 0.75);
    c.features.bm25.validate();
    c.features.elr.mu = get_or<double>(section(j, "elr"), "mu", 100.0);
    if (!(c.features.elr.mu > 0)) throw ConfigError("elr.mu must be > 0");
    (void)feat;

    const auto te = section(j, "transe");
    c.transe.dim = get_or<std::size_t>(te, "dim", 100);
    c.transe.margin = get_or<double>(te, "margin", 1.0);
    c.transe.learning_rate = get_or<double>(te, "learning_rate", 0.001);
    c.transe.epochs = get_or<std::size_t>(te, "epochs", 1000);
    c.transe.negatives = get_or<std::size_t>(te, "negatives", 1);
    const auto norm = get_or<std::string>(te, "norm", "L2");
    if (norm != "L1" && norm != "L2") throw ConfigError("transe.norm must be L1 or L2");
    c.transe.norm = norm == "L1" ? Norm::l1 : Norm::l2;
    c.transe.seed = get_or<std::uint64_t>(te, "seed", c.seed);
    c.transe.threads = get_or<std::size_t>(te, "threads", 1);
    c.transe.validate();

    const auto ltr = section(j, "ltr");
    const auto tname = get_or<std::string>(ltr, "trainer", "coordinate_ascent");
    if (tname == "coordinate_ascent")
        c.trainer = TrainerKind::coordinate_ascent;
    else if (tname == "ranksvm")
        c.trainer = TrainerKind::ranksvm;
    else
        throw ConfigError("ltr.trainer must be coordinate_ascent or ranksvm");
    const auto nname = get_or<std::string>(ltr, "normalize", "none");
    auto nm = parse_normalization(nname);
    if (!nm) throw ConfigError("ltr.normalize must be none or zscore");
    c.normalization = *nm;
    c.folds = get_or<std::size_t>(ltr, "folds", 5);
    c.fold_seed = get_or<std::uint64_t>(ltr, "fold_seed", c.seed);
    const auto ca = section(ltr, "coordinate_ascent");
    c.coordinate_ascent.restarts = get_or<std::size_t>(ca, "restarts", 5);
    c.coordinate_ascent.max_passes = get_or<std::size_t>(ca, "max_passes", 25);
    c.coordinate_ascent.tolerance = get_or<double>(ca, "tolerance", 1e-4);
    c.coordinate_ascent.seed = get_or<std::uint64_t>(ca, "seed", c.seed);
    const auto svm = section(ltr, "ranksvm");
    c.ranksvm.c = get_or<double>(svm, "C", 1.0);
    c.ranksvm.epochs = get_or<std::size_t>(svm, "epochs", 100);
    c.ranksvm.learning_rate = get_or<double>(svm, "learning_rate", 0.1);
    c.ranksvm.seed = get_or<std::uint64_t>(svm, "seed", c.seed);

    const auto ev = section(j, "eval");
    c.eval.cutoff = get_or<std::size_t>(ev, "cutoff", 100);
    c.coordinate_ascent.cutoff = c.eval.cutoff;
    c.eval.permutation_iterations = get_or<std::size_t>(ev, "permutation_iterations", 100000);
    c.eval.alpha = get_or<double>(ev, "alpha", 0.05);
    c.eval.tie_epsilon = get_or<double>(ev, "tie_epsilon", 1e-6);

    if (j.contains("compare") && j["compare"].contains("runs")) {
        for (const auto& r : j["compare"]["runs"]) {
            fs::path p(r.at("path").get<std::string>());
            if (!p.is_absolute()) p = (base_dir / p).lexically_normal();
            c.compare_runs.emplace_back(r.at("name").get<std::string>(), p);
        }
    }

    // Canonical, fully defaulted form.
    nlohmann::ordered_json r;
    r["paths"] = {{"triples", c.paths.triples.string()},   {"mapping", c.paths.mapping.string()},
                  {"queries", c.paths.queries.string()},   {"annotations", c.paths.annotations.string()},
                  {"qrels", c.paths.qrels.string()},       {"workdir", c.paths.workdir.string()}};
    r["variant"] = variant_name(c.variant);
    r["variants"] = nlohmann::ordered_json::array();
    for (auto vv : c.variants) r["variants"].push_back(variant_name(vv));
    r["seed"] = c.seed;
    r["index"] = {{"window", c.window}};
    r["candidates"] = {{"k", c.candidates_k}};
    r["fsdm"] = detail::fsdm_json(c.candidate_fsdm);
    r["feature_fsdm"] = detail::fsdm_json(c.features.fsdm);
    r["sdm"] = {{"lambda", {c.features.sdm.lambda_t, c.features.sdm.lambda_o, c.features.sdm.lambda_u}},
                {"mu", c.features.sdm.mu}};
    r["lm"] = {{"mu", c.features.lm_mu}};
    r["bm25"] = {{"k1", c.features.bm25.k1}, {"b", c.features.bm25.b}};
    r["elr"] = {{"mu", c.features.elr.mu}};
    r["transe"] = {{"dim", c.transe.dim},         {"margin", c.transe.margin},
                   {"learning_rate", c.transe.learning_rate}, {"epochs", c.transe.epochs},
                   {"negatives", c.transe.negatives}, {"norm", norm},
                   {"seed", c.transe.seed},       {"threads", c.transe.threads}};
    r["ltr"] = {{"trainer", tname},
                {"normalize", nname},
                {"folds", c.folds},
                {"fold_seed", c.fold_seed},
                {"coordinate_ascent",
                 {{"restarts", c.coordinate_ascent.restarts},
                  {"max_passes", c.coordinate_ascent.max_passes},
                  {"tolerance", c.coordinate_ascent.tolerance},
                  {"seed", c.coordinate_ascent.seed}}},
                {"ranksvm",
                 {{"C", c.ranksvm.c},
                  {"epochs", c.ranksvm.epochs},
                  {"learning_rate", c.ranksvm.learning_rate},
                  {"seed", c.ranksvm.seed}}}};
    r["eval"] = {{"cutoff", c.eval.cutoff},
                 {"permutation_iterations", c.eval.permutation_iterations},
                 {"alpha", c.eval.alpha},
                 {"tie_epsilon", c.eval.tie_epsilon}};
    r["compare"] = {{"runs", nlohmann::ordered_json::array()}};
    for (const auto& [n, p] : c.compare_runs) r["compare"]["runs"].push_back({{"name", n}, {"path", p.string()}});
    c.hash = detail::hex64(io::fnv1a64(r.dump()));
    r["threads"] = c.threads;
    c.resolved = std::move(r);
    return c;
}

inline ExperimentConfig load_config(const fs::path& path, const ConfigOverrides& ov = {}) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("config " + path.string() + ": " + e.what());
    }
    return parse_config(j, fs::absolute(path).parent_path(), ov);
}

/// Workdir layout, one place.
struct Artifacts {
    fs::path dir;

    fs::path corpus() const { return dir / "corpus.jsonl"; }
    fs::path index() const { return dir / "index.erx"; }
    fs::path entity_embeddings() const { return dir / "entity.emb"; }
    fs::path relation_embeddings() const { return dir / "relation.emb"; }
    fs::path transe_log() const { return dir / "transe_log.txt"; }
    fs::path candidates() const { return dir / "candidates.run"; }
    fs::path features(Variant v) const { return dir / ("features." + std::string(variant_slug(v)) + ".txt"); }
    fs::path folds() const { return dir / "folds.json"; }
    fs::path model(Variant v, std::size_t fold) const {
        return dir / ("model." + std::string(variant_slug(v)) + ".fold" + std::to_string(fold) + ".json");
    }
    fs::path run(Variant v) const { return dir / ("run." + std::string(variant_slug(v)) + ".txt"); }
    fs::path eval_text(Variant v) const { return dir / ("eval." + std::string(variant_slug(v)) + ".txt"); }
    fs::path eval_json(Variant v) const { return dir / ("eval." + std::string(variant_slug(v)) + ".json"); }
    fs::path report_text() const { return dir / "report.txt"; }
    fs::path report_json() const { return dir / "report.json"; }
    fs::path weights_text(Variant v) const { return dir / ("weights." + std::string(variant_slug(v)) + ".txt"); }
    fs::path weights_json(Variant v) const { return dir / ("weights." + std::string(variant_slug(v)) + ".json"); }

    static fs::path meta(const fs::path& artifact) { return artifact.string() + ".meta.json"; }
};

class Pipeline {
public:
    explicit Pipeline(ExperimentConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log), art_{cfg_.paths.workdir} {
        fs::create_directories(art_.dir);
    }

    const ExperimentConfig& config() const { return cfg_; }
    const Artifacts& artifacts() const { return art_; }

    static const std::vector<std::string>& subcommands() {
        static const std::vector<std::string> names = {"ingest", "index",   "embed",   "candidates", "features", "train",
                                                       "rerank", "eval",    "compare", "weights",    "pipeline"};
        return names;
    }

    void run(std::string_view name) {
        if (name == "ingest") return ingest();
        if (name == "index") return index();
        if (name == "embed") return embed();
        if (name == "candidates") return candidates();
        if (name == "features") return features();
        if (name == "train") return train();
        if (name == "rerank") return rerank_stage();
        if (name == "eval") return eval();
        if (name == "compare") return compare();
        if (name == "weights") return weights();
        if (name == "pipeline") return pipeline();
        throw UsageError("unknown subcommand '" + std::string(name) + "'");
    }

    void pipeline() {
        ingest();
        index();
        const bool need_embeddings =
            std::any_of(cfg_.variants.begin(), cfg_.variants.end(), [](Variant v) { return uses_transe(v); });
        if (need_embeddings) embed();
        candidates();
        features();
        train();
        rerank_stage();
        eval();
        if (cfg_.variants.size() > 1 || !cfg_.compare_runs.empty()) compare();
        weights();
    }

    void ingest() {
        auto in = io::open_in(cfg_.paths.triples);
        auto read = read_triples(in);
        for (const auto& issue : read.malformed)
            log_ << "warning: " << cfg_.paths.triples.string() << ":" << issue.line << ": " << issue.message << '\n';
        FieldMapping mapping;
        if (!cfg_.paths.mapping.empty()) {
            auto min = io::open_in(cfg_.paths.mapping);
            mapping = FieldMapping::parse(min);
        }
        const Corpus corpus = ingest_triples(read.triples, mapping);
        std::ostringstream out;
        write_corpus(out, corpus);
        emit(art_.corpus(), "ingest", out.str(),
             {{"triples", read.triples.size()}, {"malformed_lines", read.malformed.size()}, {"entities", corpus.size()}});
        log_ << "ingest: " << read.triples.size() << " triples, " << read.malformed.size() << " malformed, "
             << corpus.size() << " entities\n";
    }

    void index() {
        auto in = require(art_.corpus(), "ingest");
        auto ix = FieldedIndex::build(read_corpus(in), cfg_.window);
        std::ostringstream out;
        ix.save(out);
        emit(art_.index(), "index", out.str(), {{"entities", ix.entity_count()}, {"window", ix.window()}});
        log_ << "index: " << ix.entity_count() << " entities, window " << ix.window() << '\n';
    }

    void embed() {
        auto in = io::open_in(cfg_.paths.triples);
        auto read = read_triples(in);
        const auto set = TripleSet::from_triples(read.triples);
        std::ostringstream trace;
        auto store = train_transe(set, cfg_.transe, [&](std::size_t epoch, double loss) {
            const std::string line = "epoch " + std::to_string(epoch + 1) + " mean_loss " + io::format_fixed(loss, 6);
            log_ << line << '\n';
            trace << line << '\n';
        });
        std::ostringstream ent, rel;
        store.entities.write(ent);
        store.relations.write(rel);
        const nlohmann::ordered_json info = {{"entities", store.entities.size()},
                                             {"relations", store.relations.size()},
                                             {"triples", set.size()},
                                             {"dim", store.dim()}};
        emit(art_.entity_embeddings(), "embed", ent.str(), info);
        emit(art_.relation_embeddings(), "embed", rel.str(), info);
        emit(art_.transe_log(), "embed", trace.str(), info);
    }

    void candidates() {
        const auto ix = load_index();
        const auto queries = load_queries();
        std::vector<RankedList> lists(queries.size());
        parallel_for(queries.size(), cfg_.threads, [&](std::size_t i) {
            const auto& q = queries[i];
            if (q.tokens.empty()) throw DataError("query " + q.id + " has no searchable tokens");
            for (const auto& c : generate_candidates(ix, q.tokens, cfg_.candidate_fsdm, cfg_.candidates_k))
                lists[i].push_back({c.entity, c.score});
        });
        RunResult run;
        for (std::size_t i = 0; i < queries.size(); ++i)
            if (!lists[i].empty()) run.set_ranked(queries[i].id, std::move(lists[i]));
        std::ostringstream out;
        run.write(out, "fsdm");
        emit(art_.candidates(), "candidates", out.str(), {{"queries", run.size()}, {"k", cfg_.candidates_k}});
        log_ << "candidates: " << run.size() << " queries\n";
    }

    void features() {
        const auto ix = load_index();
        const auto queries = load_queries();
        const auto qrels = load_qrels();
        auto cin = require(art_.candidates(), "candidates");
        const auto cands = RunResult::read(cin);
        std::optional<EmbeddingStore> store;
        for (Variant v : cfg_.variants) {
            if (uses_transe(v) && !store) store = load_embeddings();
            FeatureConfig fc = cfg_.features;
            fc.variant = v;
            std::vector<std::vector<FeatureVector>> per_query(queries.size());
            parallel_for(queries.size(), cfg_.threads, [&](std::size_t i) {
                const auto& q = queries[i];
                const auto* list = cands.find(q.id);
                if (!list) return;
                for (const auto& c : *list) {
                    auto fv = extract_features(ix, q, c.entity, fc, store ? &*store : nullptr);
                    fv.label = qrels.grade(q.id, c.entity);
                    per_query[i].push_back(std::move(fv));
                }
            });
            std::vector<FeatureVector> rows;
            for (auto& pq : per_query)
                for (auto& r : pq) rows.push_back(std::move(r));
            std::sort(rows.begin(), rows.end(), row_before);
            std::ostringstream out;
            write_feature_rows(out, rows);
            const auto names = feature_names(v);
            emit(art_.features(v), "features", out.str(),
                 {{"variant", variant_name(v)}, {"rows", rows.size()}, {"features", names}});
            log_ << "features " << variant_name(v) << ": " << rows.size() << " rows x " << names.size() << '\n';
        }
    }

    void train() {
        const auto qrels = load_qrels();
        const auto plan = fold_plan();
        emit(art_.folds(), "train", plan.to_json().dump(2) + "\n", {{"k", plan.k}});
        for (Variant v : cfg_.variants) {
            const auto rows = load_rows(v);
            const auto cv = cross_validate(rows, qrels, plan, trainer(v), cfg_.threads);
            for (std::size_t f = 0; f < plan.k; ++f) {
                std::ostringstream out;
                cv.models[f].write(out);
                emit(art_.model(v, f), "train", out.str(),
                     {{"variant", variant_name(v)}, {"fold", f}, {"train_queries", cv.train_queries[f].size()}});
            }
            log_ << "train " << variant_name(v) << ": " << plan.k << " fold models\n";
        }
    }

    void rerank_stage() {
        auto fin = require(art_.folds(), "train");
        const auto plan = FoldPlan::from_json(nlohmann::json::parse(fin));
        for (Variant v : cfg_.variants) {
            const auto rows = load_rows(v);
            std::vector<std::vector<FeatureVector>> held_out(plan.k);
            for (const auto& r : rows) held_out[plan.fold_of(r.qid)].push_back(r);
            RunResult merged;
            for (std::size_t f = 0; f < plan.k; ++f) {
                auto min = require(art_.model(v, f), "train");
                const auto model = LinearModel::read(min);
                if (model.feature_names != feature_names(v))
                    throw DataError("model " + art_.model(v, f).string() + " does not match the " +
                                    std::string(variant_name(v)) + " feature layout; rerun `erank train`");
                const auto fold_run = erank::rerank(model, held_out[f]);
                for (const auto& [q, list] : fold_run.lists()) merged.set_ranked(q, list);
            }
            std::ostringstream out;
            merged.write(out, "erank-" + std::string(variant_slug(v)));
            emit(art_.run(v), "rerank", out.str(), {{"variant", variant_name(v)}, {"queries", merged.size()}});
            log_ << "rerank " << variant_name(v) << ": " << merged.size() << " queries\n";
        }
    }

    void eval() {
        const auto qrels = load_qrels();
        for (Variant v : cfg_.variants) {
            auto in = require(art_.run(v), "rerank");
            const auto run = RunResult::read(in);
            nlohmann::ordered_json j;
            j["variant"] = variant_name(v);
            std::string text;
            for (const auto& m : metrics()) {
                const auto pq = per_query(run, qrels, m);
                for (const auto& q : pq.skipped)
                    log_ << "warning: query " << q << " has no relevant judgments; excluded\n";
                j["metrics"][m.name()] = pq.mean();
                j["per_query"][m.name()] = pq.values;
                j["evaluated_queries"] = pq.values.size();
                text += m.name() + "\t" + io::format_fixed(pq.mean(), 4) + "\n";
            }
            emit(art_.eval_text(v), "eval", text, {{"variant", variant_name(v)}});
            emit(art_.eval_json(v), "eval", j.dump(2) + "\n", {{"variant", variant_name(v)}});
            log_ << "eval " << variant_name(v) << ":\n" << text;
        }
    }

    void compare() {
        const auto qrels = load_qrels();
        std::vector<SystemRun> systems;
        if (!cfg_.compare_runs.empty()) {
            for (const auto& [name, path] : cfg_.compare_runs) {
                auto in = io::open_in(path);
                systems.push_back({name, RunResult::read(in)});
            }
        } else {
            for (Variant v : cfg_.variants) {
                auto in = require(art_.run(v), "rerank");
                systems.push_back({std::string(variant_name(v)), RunResult::read(in)});
            }
        }
        ReportOptions opt;
        opt.metrics = metrics();
        opt.alpha = cfg_.eval.alpha;
        opt.tie_epsilon = cfg_.eval.tie_epsilon;
        opt.permutation.iterations = cfg_.eval.permutation_iterations;
        opt.permutation.seed = cfg_.seed;
        opt.permutation.threads = cfg_.threads;
        const auto rep = build_report(systems, qrels, opt);
        emit(art_.report_text(), "compare", rep.to_text(), {{"systems", systems.size()}});
        emit(art_.report_json(), "compare", rep.to_json().dump(2) + "\n", {{"systems", systems.size()}});
        log_ << rep.to_text();
    }

    void weights() {
        auto fin = require(art_.folds(), "train");
        const auto plan = FoldPlan::from_json(nlohmann::json::parse(fin));
        for (Variant v : cfg_.variants) {
            nlohmann::ordered_json j;
            j["variant"] = variant_name(v);
            j["folds"] = nlohmann::ordered_json::array();
            std::map<std::string, double> mean;
            std::size_t counted = 0;
            for (std::size_t f = 0; f < plan.k; ++f) {
                auto min = require(art_.model(v, f), "train");
                const auto model = LinearModel::read(min);
                double l1 = 0;
                for (double w : model.weights) l1 += std::abs(w);
                if (l1 == 0) {
                    j["folds"].push_back(nullptr);
                    continue;
                }
                const auto dist = weight_distribution(model.feature_names, model.weights, default_feature_group);
                j["folds"].push_back(dist);
                for (const auto& [g, p] : dist) mean[g] += p;
                ++counted;
            }
            std::string text = "group\tpercent\n";
            for (auto& [g, p] : mean) {
                p /= static_cast<double>(std::max<std::size_t>(counted, 1));
                text += g + "\t" + io::format_fixed(p, 2) + "\n";
            }
            j["mean"] = mean;
            emit(art_.weights_text(v), "weights", text, {{"variant", variant_name(v)}});
            emit(art_.weights_json(v), "weights", j.dump(2) + "\n", {{"variant", variant_name(v)}});
            log_ << "weights " << variant_name(v) << ":\n" << text;
        }
    }

private:
    std::vector<Metric> metrics() const {
        return {Metric::map(cfg_.eval.cutoff), Metric::precision(10), Metric::precision(20)};
    }

    std::ifstream require(const fs::path& p, std::string_view stage) const {
        if (!fs::exists(p))
            throw DataError("missing " + p.string() + "; run `erank " + std::string(stage) + "` first");
        return io::open_in(p);
    }

    void emit(const fs::path& p, std::string_view stage, const std::string& content,
              nlohmann::ordered_json info = nlohmann::ordered_json::object()) const {
        io::write_file(p, content);
        nlohmann::ordered_json meta;
        meta["artifact"] = p.filename().string();
        meta["stage"] = stage;
        meta["config_hash"] = cfg_.hash;
        meta["content_hash"] = detail::hex64(io::fnv1a64(content));
        meta["info"] = std::move(info);
        io::write_file(Artifacts::meta(p), meta.dump(2) + "\n");
    }

    FieldedIndex load_index() const {
        auto in = require(art_.index(), "index");
        auto ix = FieldedIndex::load(in);
        if (ix.window() != cfg_.window)
            throw DataError("index was built with window " + std::to_string(ix.window()) + ", config says " +
                            std::to_string(cfg_.window) + "; rerun `erank index`");
        return ix;
    }

    std::vector<QueryRecord> load_queries() const {
        auto in = io::open_in(cfg_.paths.queries);
        auto qs = read_queries(in);
        if (!cfg_.paths.annotations.empty()) {
            auto ain = io::open_in(cfg_.paths.annotations);
            merge_annotations(ain, qs);
        }
        std::sort(qs.begin(), qs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        for (std::size_t i = 1; i < qs.size(); ++i)
            if (qs[i].id == qs[i - 1].id) throw DataError("duplicate query id " + qs[i].id);
        return qs;
    }

    Qrels load_qrels() const {
        auto in = io::open_in(cfg_.paths.qrels);
        return Qrels::read(in);
    }

    EmbeddingStore load_embeddings() const {
        auto ein = require(art_.entity_embeddings(), "embed");
        auto rin = require(art_.relation_embeddings(), "embed");
        EmbeddingStore s{EmbeddingTable::read(ein), EmbeddingTable::read(rin)};
        s.validate();
        return s;
    }

    std::vector<FeatureVector> load_rows(Variant v) const {
        auto in = require(art_.features(v), "features");
        auto rows = read_feature_rows(in);
        for (const auto& r : rows)
            if (r.values.size() != feature_count(v))
                throw DataError(art_.features(v).string() + " has " + std::to_string(r.values.size()) +
                                " features, variant " + std::string(variant_name(v)) + " needs " +
                                std::to_string(feature_count(v)) + "; rerun `erank features`");
        return normalize_rows(std::move(rows), cfg_.normalization);
    }

    FoldPlan fold_plan() const {
        std::vector<std::string> ids;
        for (const auto& q : load_queries()) ids.push_back(q.id);
        return make_folds(ids, cfg_.folds, cfg_.fold_seed);
    }

    Trainer trainer(Variant v) const {
        const auto names = feature_names(v);
        if (cfg_.trainer == TrainerKind::ranksvm) {
            const auto c = cfg_.ranksvm;
            return [c, names](std::span<const FeatureVector> rows, const Qrels& q) {
                return ranksvm_train(rows, q, c, names);
            };
        }
        const auto c = cfg_.coordinate_ascent;
        return [this, c, names](std::span<const FeatureVector> rows, const Qrels& q) {
            auto res = coordinate_ascent_train(rows, q, c, names);
            if (res.warning) {
                std::lock_guard lock(log_mutex_);
                log_ << "warning: " << *res.warning << '\n';
            }
            return res.model;
        };
    }

    ExperimentConfig cfg_;
    std::ostream& log_;
    mutable std::mutex log_mutex_;
    Artifacts art_;
};

} // namespace erank
