#pragma once

// Linear learning to rank: Coordinate Ascent on training MAP, pairwise
// RankSVM by stochastic subgradient descent, and k-fold cross validation
// over a shared query partition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "erank/error.hpp"
#include "erank/evalkit.hpp"
#include "erank/features.hpp"
#include "erank/random.hpp"

namespace erank {

struct LinearModel {
    std::vector<std::string> feature_names;
    std::vector<double> weights;
    std::string trainer;

    void validate() const {
        if (feature_names.size() != weights.size()) throw ConfigError("model names/weights length mismatch");
        for (double w : weights)
            if (!std::isfinite(w)) throw ConfigError("model has a non-finite weight");
    }

    static constexpr std::string_view kFormatTag = "erank-linear-model";

    void write(std::ostream& out) const {
        nlohmann::ordered_json j;
        j["format"] = kFormatTag;
        j["version"] = 1;
        j["trainer"] = trainer;
        j["features"] = feature_names;
        j["weights"] = weights;
        out << j.dump(2) << '\n';
    }

    static LinearModel read(std::istream& in) {
        try {
            auto j = nlohmann::json::parse(in);
            if (j.value("format", "") != kFormatTag) throw DataError("not an erank model file");
            LinearModel m{j.at("features").get<std::vector<std::string>>(), j.at("weights").get<std::vector<double>>(),
                          j.value("trainer", "")};
            m.validate();
            return m;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("model file: ") + e.what());
        }
    }

    bool operator==(const LinearModel&) const = default;
};

inline double score(std::span<const double> weights, std::span<const double> values) {
    if (weights.size() != values.size())
        throw ConfigError("feature layout mismatch: model has " + std::to_string(weights.size()) + " weights, row has " +
                          std::to_string(values.size()) + " values");
    double s = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * values[i];
    return s;
}

inline double score(const LinearModel& m, const FeatureVector& fv) { return score(m.weights, fv.values); }

/// Scores rows with the model and ranks each query (ties by entity id).
inline RunResult rerank(const LinearModel& m, std::span<const FeatureVector> rows) {
    std::map<std::string, RankedList> lists;
    for (const auto& r : rows) lists[r.qid].push_back({r.entity, score(m, r)});
    RunResult run;
    for (auto& [q, l] : lists) run.set(q, std::move(l));
    return run;
}

enum class FeatureNormalization { none, zscore };

inline std::optional<FeatureNormalization> parse_normalization(std::string_view s) {
    if (s == "none") return FeatureNormalization::none;
    if (s == "zscore") return FeatureNormalization::zscore;
    return std::nullopt;
}

/// Per-query z-scoring of every feature column; constant columns become 0.
/// Queries are normalized independently, so this never leaks across folds.
inline std::vector<FeatureVector> normalize_rows(std::vector<FeatureVector> rows, FeatureNormalization mode) {
    if (mode == FeatureNormalization::none || rows.empty()) return rows;
    std::map<std::string, std::vector<std::size_t>> by_q;
    for (std::size_t i = 0; i < rows.size(); ++i) by_q[rows[i].qid].push_back(i);
    const std::size_t n = rows.front().values.size();
    for (const auto& [_, idx] : by_q) {
        for (std::size_t j = 0; j < n; ++j) {
            double mean = 0;
            for (auto i : idx) mean += rows[i].values[j];
            mean /= static_cast<double>(idx.size());
            double var = 0;
            for (auto i : idx) var += (rows[i].values[j] - mean) * (rows[i].values[j] - mean);
            const double sd = std::sqrt(var / static_cast<double>(idx.size()));
            for (auto i : idx) rows[i].values[j] = sd > 0 ? (rows[i].values[j] - mean) / sd : 0.0;
        }
    }
    return rows;
}

struct FoldPlan {
    std::size_t k = 5;
    std::map<std::string, std::size_t, std::less<>> assignment;

    std::size_t fold_of(std::string_view qid) const {
        auto it = assignment.find(qid);
        if (it == assignment.end()) throw LookupError("query " + std::string(qid) + " not in fold plan");
        return it->second;
    }

    std::vector<std::size_t> fold_sizes() const {
        std::vector<std::size_t> sizes(k, 0);
        for (const auto& [_, f] : assignment) ++sizes[f];
        return sizes;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["k"] = k;
        j["assignment"] = nlohmann::ordered_json::object();
        for (const auto& [q, f] : assignment) j["assignment"][q] = f;
        return j;
    }

    static FoldPlan from_json(const nlohmann::json& j) {
        FoldPlan p;
        p.k = j.at("k").get<std::size_t>();
        for (const auto& [q, f] : j.at("assignment").items()) p.assignment[q] = f.get<std::size_t>();
        return p;
    }
};

/// Sort ids, seeded shuffle, then deal round-robin.
inline FoldPlan make_folds(std::vector<std::string> query_ids, std::size_t k = 5, std::uint64_t seed = 42) {
    if (k < 2) throw ConfigError("cross validation needs k >= 2");
    std::sort(query_ids.begin(), query_ids.end());
    query_ids.erase(std::unique(query_ids.begin(), query_ids.end()), query_ids.end());
    if (query_ids.size() < k)
        throw ConfigError("need at least " + std::to_string(k) + " queries for " + std::to_string(k) +
                          " folds, got " + std::to_string(query_ids.size()));
    Rng rng(seed);
    rng.shuffle(std::span<std::string>(query_ids));
    FoldPlan plan;
    plan.k = k;
    for (std::size_t i = 0; i < query_ids.size(); ++i) plan.assignment[query_ids[i]] = i % k;
    return plan;
}

namespace detail {

/// Rows of one query plus what MAP needs.
struct QueryBlock {
    std::string qid;
    std::vector<const FeatureVector*> rows;
    std::vector<char> relevant;
    std::size_t total_relevant = 0;
};

inline std::vector<QueryBlock> group_by_query(std::span<const FeatureVector> rows, const Qrels& qrels) {
    std::map<std::string, QueryBlock> blocks;
    for (const auto& r : rows) {
        auto& b = blocks[r.qid];
        b.qid = r.qid;
        b.rows.push_back(&r);
        b.relevant.push_back(qrels.grade(r.qid, r.entity) > 0 ? 1 : 0);
    }
    std::vector<QueryBlock> out;
    for (auto& [q, b] : blocks) {
        b.total_relevant = qrels.relevant_count(q);
        // keep the tie order stable: entity id ascending within the block
        std::vector<std::size_t> idx(b.rows.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return b.rows[x]->entity < b.rows[y]->entity; });
        QueryBlock sorted{b.qid, {}, {}, b.total_relevant};
        for (auto i : idx) {
            sorted.rows.push_back(b.rows[i]);
            sorted.relevant.push_back(b.relevant[i]);
        }
        out.push_back(std::move(sorted));
    }
    return out;
}

/// AP of one block given per-row scores; rows are pre-sorted by entity id so
/// a stable sort on score gives the id tie-break.
inline double block_ap(const QueryBlock& b, std::span<const double> scores, std::size_t cutoff,
                       std::vector<std::size_t>& scratch) {
    scratch.resize(scores.size());
    for (std::size_t i = 0; i < scratch.size(); ++i) scratch[i] = i;
    std::stable_sort(scratch.begin(), scratch.end(), [&](auto x, auto y) { return scores[x] > scores[y]; });
    double sum = 0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < scratch.size() && r < cutoff; ++r) {
        if (b.relevant[scratch[r]]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    }
    return sum / static_cast<double>(b.total_relevant);
}

/// Mean AP over blocks with relevant judgments.
class TrainingMap {
public:
    TrainingMap(std::span<const FeatureVector> rows, const Qrels& qrels, std::size_t cutoff) : cutoff_(cutoff) {
        for (auto& b : group_by_query(rows, qrels))
            if (b.total_relevant > 0) blocks_.push_back(std::move(b));
        if (!blocks_.empty()) width_ = blocks_.front().rows.front()->values.size();
    }

    bool empty() const { return blocks_.empty(); }
    std::size_t width() const { return width_; }
    const std::vector<QueryBlock>& blocks() const { return blocks_; }

    void base_scores(std::span<const double> w, std::vector<std::vector<double>>& out) const {
        out.resize(blocks_.size());
        for (std::size_t q = 0; q < blocks_.size(); ++q) {
            out[q].resize(blocks_[q].rows.size());
            for (std::size_t i = 0; i < blocks_[q].rows.size(); ++i) out[q][i] = score(w, blocks_[q].rows[i]->values);
        }
    }

    double evaluate(std::span<const double> w) const {
        std::vector<std::vector<double>> s;
        base_scores(w, s);
        return evaluate_scores(s);
    }

    double evaluate_scores(const std::vector<std::vector<double>>& s) const {
        double total = 0;
        for (std::size_t q = 0; q < blocks_.size(); ++q) total += block_ap(blocks_[q], s[q], cutoff_, scratch_);
        return total / static_cast<double>(blocks_.size());
    }

    /// MAP after changing weight j by `delta` (without renormalizing; a
    /// positive rescale does not change any ranking).
    double evaluate_delta(const std::vector<std::vector<double>>& base, std::size_t j, double delta) const {
        double total = 0;
        std::vector<double> s;
        for (std::size_t q = 0; q < blocks_.size(); ++q) {
            s = base[q];
            for (std::size_t i = 0; i < s.size(); ++i) s[i] += delta * blocks_[q].rows[i]->values[j];
            total += block_ap(blocks_[q], s, cutoff_, scratch_);
        }
        return total / static_cast<double>(blocks_.size());
    }

private:
    std::vector<QueryBlock> blocks_;
    std::size_t width_ = 0;
    std::size_t cutoff_;
    mutable std::vector<std::size_t> scratch_;
};

inline bool l1_normalize(std::vector<double>& w) {
    double n = 0;
    for (double x : w) n += std::abs(x);
    if (n == 0) return false;
    for (double& x : w) x /= n;
    return true;
}

inline std::size_t row_width(std::span<const FeatureVector> rows) {
    if (rows.empty()) throw ConfigError("training set is empty");
    const std::size_t n = rows.front().values.size();
    for (const auto& r : rows)
        if (r.values.size() != n) throw ConfigError("training rows have inconsistent feature counts");
    return n;
}

} // namespace detail

struct CoordinateAscentConfig {
    std::size_t restarts = 5;
    std::size_t max_passes = 25;
    double tolerance = 1e-4;
    std::uint64_t seed = 42;
    std::size_t cutoff = kDefaultCutoff;
    std::vector<double> multiplicative_steps = {0.5, 1.5};
    std::vector<double> additive_steps = {0.01, 0.0316227766016838, 0.1, 0.316227766016838, 1.0};
};

struct CoordinateAscentResult {
    LinearModel model;
    double training_map = 0;
    /// Training MAP of the returned restart: initial value, then one entry per accepted move.
    std::vector<double> trace;
    std::optional<std::string> warning;
};

/// Cyclic single-coordinate line search on training MAP. A move is accepted
/// only if it strictly improves MAP; weights are L1-normalized (sign kept)
/// after every accepted move. Restart 0 starts from uniform weights, later
/// restarts from seeded random positive weights; the best restart wins.
inline CoordinateAscentResult coordinate_ascent_train(std::span<const FeatureVector> rows, const Qrels& qrels,
                                                      const CoordinateAscentConfig& cfg = {},
                                                      std::vector<std::string> names = {}) {
    const std::size_t n = detail::row_width(rows);
    if (names.empty())
        for (std::size_t i = 0; i < n; ++i) names.push_back("f" + std::to_string(i + 1));
    if (names.size() != n) throw ConfigError("feature name count does not match rows");
    if (cfg.restarts < 1) throw ConfigError("coordinate ascent needs at least one restart");

    CoordinateAscentResult best;
    best.model = {names, std::vector<double>(n, 1.0 / static_cast<double>(n)), "coordinate_ascent"};

    bool any_rel = false, any_nonrel = false;
    for (const auto& r : rows) (qrels.grade(r.qid, r.entity) > 0 ? any_rel : any_nonrel) = true;
    detail::TrainingMap objective(rows, qrels, cfg.cutoff);
    if (!any_rel || !any_nonrel || objective.empty()) {
        best.warning = "degenerate training data (all labels equal); returning uniform weights";
        best.training_map = objective.empty() ? 0.0 : objective.evaluate(best.model.weights);
        best.trace = {best.training_map};
        return best;
    }

    Rng rng(cfg.seed);
    bool have_best = false;
    for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
        std::vector<double> w(n, 1.0 / static_cast<double>(n));
        if (restart > 0) {
            for (auto& x : w) x = rng.uniform_real(0.01, 1.0);
            detail::l1_normalize(w);
        }
        double current = objective.evaluate(w);
        std::vector<double> trace{current};
        std::vector<std::vector<double>> base;
        std::vector<std::size_t> order(n);

        for (std::size_t pass = 0; pass < cfg.max_passes; ++pass) {
            const double pass_start = current;
            for (std::size_t i = 0; i < n; ++i) order[i] = i;
            rng.shuffle(std::span<std::size_t>(order));
            for (std::size_t j : order) {
                objective.base_scores(w, base);
                std::vector<double> probes;
                for (double m : cfg.multiplicative_steps) probes.push_back(w[j] * m);
                for (double s : cfg.additive_steps) {
                    probes.push_back(w[j] + s);
                    probes.push_back(w[j] - s);
                }
                double best_probe_map = current;
                std::optional<double> best_value;
                for (double v : probes) {
                    if (v == w[j]) continue;
                    const double m = objective.evaluate_delta(base, j, v - w[j]);
                    if (m > best_probe_map) {
                        best_probe_map = m;
                        best_value = v;
                    }
                }
                if (!best_value) continue;
                auto cand = w;
                cand[j] = *best_value;
                if (!detail::l1_normalize(cand)) continue;
                const double m = objective.evaluate(cand);
                if (m > current) {
                    w = std::move(cand);
                    current = m;
                    trace.push_back(current);
                }
            }
            if (current - pass_start < cfg.tolerance) break;
        }
        if (!have_best || current > best.training_map) {
            have_best = true;
            best.model.weights = w;
            best.training_map = current;
            best.trace = std::move(trace);
        }
    }
    return best;
}

struct RankSvmConfig {
    double c = 1.0;
    std::size_t epochs = 100;
    double learning_rate = 0.1;
    std::uint64_t seed = 42;
};

struct PreferencePair {
    const FeatureVector* better;
    const FeatureVector* worse;
};

/// Within-query pairs with grade(better) > grade(worse).
inline std::vector<PreferencePair> preference_pairs(std::span<const FeatureVector> rows, const Qrels& qrels) {
    std::map<std::string, std::vector<const FeatureVector*>> by_q;
    for (const auto& r : rows) by_q[r.qid].push_back(&r);
    std::vector<PreferencePair> pairs;
    for (auto& [q, rs] : by_q) {
        std::sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->entity < b->entity; });
        for (auto* a : rs)
            for (auto* b : rs)
                if (qrels.grade(q, a->entity) > qrels.grade(q, b->entity)) pairs.push_back({a, b});
    }
    return pairs;
}

/// Pairs the model orders wrongly or ties.
inline std::size_t pair_violations(const LinearModel& m, std::span<const PreferencePair> pairs) {
    std::size_t n = 0;
    for (const auto& p : pairs) n += score(m, *p.better) <= score(m, *p.worse) ? 1 : 0;
    return n;
}

/// Minimizes 1/2 ||w||^2 + C * sum hinge(1 - w.(x_better - x_worse)), written
/// as lambda/2 ||w||^2 + mean hinge with lambda = 1/(C*P), by SGD over
/// shuffled pairs with step lr / (1 + lr*lambda*t).
inline LinearModel ranksvm_train(std::span<const FeatureVector> rows, const Qrels& qrels,
                                 const RankSvmConfig& cfg = {}, std::vector<std::string> names = {}) {
    const std::size_t n = detail::row_width(rows);
    if (names.empty())
        for (std::size_t i = 0; i < n; ++i) names.push_back("f" + std::to_string(i + 1));
    if (names.size() != n) throw ConfigError("feature name count does not match rows");
    if (cfg.c < 0) throw ConfigError("RankSVM C must be >= 0");
    if (!(cfg.learning_rate > 0)) throw ConfigError("RankSVM learning rate must be > 0");
    const auto pairs = preference_pairs(rows, qrels);
    if (pairs.empty()) throw DataError("RankSVM needs at least one label-discordant pair within a query");

    LinearModel m{std::move(names), std::vector<double>(n, 0.0), "ranksvm"};
    if (cfg.c == 0) return m;

    const double lambda = 1.0 / (cfg.c * static_cast<double>(pairs.size()));
    std::vector<std::size_t> order(pairs.size());
    std::vector<double> diff(n);
    Rng rng(cfg.seed);
    std::uint64_t t = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(std::span<std::size_t>(order));
        for (auto i : order) {
            const auto& p = pairs[i];
            for (std::size_t k = 0; k < n; ++k) diff[k] = p.better->values[k] - p.worse->values[k];
            const double eta = cfg.learning_rate / (1.0 + cfg.learning_rate * lambda * static_cast<double>(t++));
            const double margin = score(m.weights, diff);
            for (std::size_t k = 0; k < n; ++k) m.weights[k] -= eta * lambda * m.weights[k];
            if (margin < 1.0)
                for (std::size_t k = 0; k < n; ++k) m.weights[k] += eta * diff[k];
        }
    }
    m.validate();
    return m;
}

using Trainer = std::function<LinearModel(std::span<const FeatureVector>, const Qrels&)>;

struct CrossValidationResult {
    std::vector<LinearModel> models;
    std::vector<std::vector<std::string>> train_queries;  // per fold
    std::vector<std::vector<std::string>> test_queries;   // per fold
    RunResult run;                                        // held-out scores, every query once
};

/// Trains fold f on all other folds and scores fold f with it.
inline CrossValidationResult cross_validate(std::span<const FeatureVector> rows, const Qrels& qrels,
                                            const FoldPlan& plan, const Trainer& trainer, std::size_t threads = 1) {
    std::vector<std::vector<FeatureVector>> train(plan.k), test(plan.k);
    std::vector<std::set<std::string>> trq(plan.k), teq(plan.k);
    for (const auto& r : rows) {
        const std::size_t f = plan.fold_of(r.qid);
        test[f].push_back(r);
        teq[f].insert(r.qid);
        for (std::size_t g = 0; g < plan.k; ++g)
            if (g != f) {
                train[g].push_back(r);
                trq[g].insert(r.qid);
            }
    }
    CrossValidationResult out;
    out.models.resize(plan.k);
    std::vector<std::exception_ptr> errors(plan.k);
    const auto job = [&](std::size_t f) {
        try {
            out.models[f] = trainer(train[f], qrels);
        } catch (...) {
            errors[f] = std::current_exception();
        }
    };
    if (threads <= 1) {
        for (std::size_t f = 0; f < plan.k; ++f) job(f);
    } else {
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < std::min(threads, plan.k); ++w)
            workers.emplace_back([&, w] {
                for (std::size_t f = w; f < plan.k; f += threads) job(f);
            });
        for (auto& t : workers) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (std::size_t f = 0; f < plan.k; ++f) {
        out.train_queries.emplace_back(trq[f].begin(), trq[f].end());
        out.test_queries.emplace_back(teq[f].begin(), teq[f].end());
        auto fold_run = rerank(out.models[f], test[f]);
        for (const auto& [q, list] : fold_run.lists()) out.run.set_ranked(q, list);
    }
    return out;
}

} // namespace erank
