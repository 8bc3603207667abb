#pragma once

// TREC-style evaluation: qrels and run files, AP/P@k, sign-flip permutation
// test, win/tie/loss counts, relative improvement and weight distribution.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
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

#include "erank/error.hpp"
#include "erank/io.hpp"
#include "erank/random.hpp"

namespace erank {

/// query id -> entity id -> grade. Relevant means grade > 0.
class Qrels {
public:
    void set(const std::string& qid, const std::string& entity, int grade) {
        if (grade < 0) throw DataError("negative relevance grade for " + qid + "/" + entity);
        judgments_[qid][entity] = grade;
    }

    int grade(std::string_view qid, std::string_view entity) const {
        auto q = judgments_.find(qid);
        if (q == judgments_.end()) return 0;
        auto e = q->second.find(entity);
        return e == q->second.end() ? 0 : e->second;
    }

    bool contains(std::string_view qid) const { return judgments_.find(qid) != judgments_.end(); }

    std::size_t relevant_count(std::string_view qid) const {
        auto q = judgments_.find(qid);
        if (q == judgments_.end()) return 0;
        std::size_t n = 0;
        for (const auto& [_, g] : q->second) n += g > 0 ? 1 : 0;
        return n;
    }

    std::vector<std::string> query_ids() const {
        std::vector<std::string> out;
        for (const auto& [q, _] : judgments_) out.push_back(q);
        return out;
    }

    const std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>>& judgments() const {
        return judgments_;
    }

    /// `qid 0 entity grade`, whitespace separated.
    static Qrels read(std::istream& in) {
        Qrels q;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto sv = io::strip_cr(line);
            if (sv.empty() || sv.front() == '#') continue;
            auto parts = io::split_ws(sv);
            int grade = 0;
            if (parts.size() != 4 || !io::parse_int(parts[3], grade))
                throw DataError("qrels line " + std::to_string(lineno) + ": expected 'qid 0 entity grade'");
            q.set(std::string(parts[0]), std::string(parts[2]), grade);
        }
        return q;
    }

    void write(std::ostream& out) const {
        for (const auto& [qid, ents] : judgments_)
            for (const auto& [e, g] : ents) out << qid << " 0 " << e << ' ' << g << '\n';
    }

private:
    std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>> judgments_;
};

struct ScoredEntity {
    std::string entity;
    double score = 0;

    bool operator==(const ScoredEntity&) const = default;
};

using RankedList = std::vector<ScoredEntity>;

/// query id -> ranked entities (best first).
class RunResult {
public:
    /// Sorts by descending score, ties by ascending entity id.
    void set(const std::string& qid, RankedList list) {
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.entity < b.entity;
        });
        std::set<std::string_view> seen;
        for (const auto& s : list)
            if (!seen.insert(s.entity).second)
                throw DataError("duplicate entity " + s.entity + " in run for query " + qid);
        runs_[qid] = std::move(list);
    }

    /// Keeps the given order; used when reading files where rank is given.
    void set_ranked(const std::string& qid, RankedList list) {
        std::set<std::string_view> seen;
        for (const auto& s : list)
            if (!seen.insert(s.entity).second)
                throw DataError("duplicate entity " + s.entity + " in run for query " + qid);
        runs_[qid] = std::move(list);
    }

    const RankedList* find(std::string_view qid) const {
        auto it = runs_.find(qid);
        return it == runs_.end() ? nullptr : &it->second;
    }

    std::vector<std::string> query_ids() const {
        std::vector<std::string> out;
        for (const auto& [q, _] : runs_) out.push_back(q);
        return out;
    }
    std::size_t size() const { return runs_.size(); }
    const std::map<std::string, RankedList, std::less<>>& lists() const { return runs_; }

    /// `qid Q0 entity rank score tag`, rank from 1, score with 6 decimals.
    void write(std::ostream& out, std::string_view tag) const {
        for (const auto& [qid, list] : runs_)
            for (std::size_t i = 0; i < list.size(); ++i)
                out << qid << " Q0 " << list[i].entity << ' ' << (i + 1) << ' ' << io::format_fixed(list[i].score, 6)
                    << ' ' << tag << '\n';
    }

    static RunResult read(std::istream& in) {
        std::map<std::string, std::vector<std::pair<long, ScoredEntity>>> tmp;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto sv = io::strip_cr(line);
            if (sv.empty() || sv.front() == '#') continue;
            auto parts = io::split_ws(sv);
            long rank = 0;
            double score = 0;
            if (parts.size() != 6 || !io::parse_int(parts[3], rank) || !io::parse_double(parts[4], score))
                throw DataError("run line " + std::to_string(lineno) + ": expected 'qid Q0 entity rank score tag'");
            tmp[std::string(parts[0])].push_back({rank, {std::string(parts[2]), score}});
        }
        RunResult r;
        for (auto& [qid, rows] : tmp) {
            std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            RankedList list;
            for (auto& [_, s] : rows) list.push_back(std::move(s));
            r.set_ranked(qid, std::move(list));
        }
        return r;
    }

private:
    std::map<std::string, RankedList, std::less<>> runs_;
};

inline constexpr std::size_t kDefaultCutoff = 100;

/// AP over the top `cutoff` ranks with the total relevant count R as
/// denominator. nullopt when the query has no relevant judgments.
inline std::optional<double> average_precision(std::span<const ScoredEntity> list, const Qrels& qrels,
                                               std::string_view qid, std::size_t cutoff = kDefaultCutoff) {
    const std::size_t total_rel = qrels.relevant_count(qid);
    if (total_rel == 0) return std::nullopt;
    double sum = 0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < list.size() && i < cutoff; ++i) {
        if (qrels.grade(qid, list[i].entity) > 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(total_rel);
}

/// Short lists count the missing ranks as non-relevant.
inline double precision_at_k(std::span<const ScoredEntity> list, const Qrels& qrels, std::string_view qid,
                             std::size_t k) {
    if (k < 1) throw ConfigError("precision cutoff k must be >= 1");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < list.size() && i < k; ++i) hits += qrels.grade(qid, list[i].entity) > 0 ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(k);
}

enum class MetricKind { average_precision, precision };

struct Metric {
    MetricKind kind = MetricKind::average_precision;
    std::size_t cutoff = kDefaultCutoff;

    static Metric map(std::size_t cutoff = kDefaultCutoff) { return {MetricKind::average_precision, cutoff}; }
    static Metric precision(std::size_t k) { return {MetricKind::precision, k}; }

    std::string name() const {
        return (kind == MetricKind::average_precision ? "MAP@" : "P@") + std::to_string(cutoff);
    }

    /// A query without relevant judgments scores 0 here; per_query() skips them.
    double evaluate(std::span<const ScoredEntity> list, const Qrels& qrels, std::string_view qid) const {
        if (kind == MetricKind::average_precision) return average_precision(list, qrels, qid, cutoff).value_or(0.0);
        return precision_at_k(list, qrels, qid, cutoff);
    }
};

struct PerQueryScores {
    std::map<std::string, double, std::less<>> values;
    std::vector<std::string> skipped;  // run queries without relevant judgments

    double mean() const {
        if (values.empty()) return 0.0;
        double s = 0;
        for (const auto& [_, v] : values) s += v;
        return s / static_cast<double>(values.size());
    }
};

/// Scores every run query that has at least one relevant judgment.
inline PerQueryScores per_query(const RunResult& run, const Qrels& qrels, const Metric& m) {
    PerQueryScores out;
    for (const auto& [qid, list] : run.lists()) {
        if (qrels.relevant_count(qid) == 0) {
            out.skipped.push_back(qid);
            continue;
        }
        out.values[qid] = m.evaluate(list, qrels, qid);
    }
    return out;
}

namespace detail {

struct PairedDiffs {
    std::vector<std::string> queries;
    std::vector<double> diffs;  // a - b
};

inline PairedDiffs paired(const PerQueryScores& a, const PerQueryScores& b) {
    PairedDiffs p;
    for (const auto& [q, va] : a.values) {
        auto it = b.values.find(q);
        if (it == b.values.end()) continue;
        p.queries.push_back(q);
        p.diffs.push_back(va - it->second);
    }
    if (p.queries.empty()) throw DataError("runs share no evaluated queries");
    return p;
}

} // namespace detail

enum class PermutationMode { automatic, exhaustive, sampled };

struct PermutationOptions {
    std::size_t iterations = 100000;
    std::uint64_t seed = 42;
    PermutationMode mode = PermutationMode::automatic;
    std::size_t exhaustive_limit = 20;
    std::size_t threads = 1;
};

/// Two-sided sign-flip randomization test on per-query differences.
/// Exhaustive mode returns the exact fraction of the 2^n sign patterns whose
/// |mean| reaches the observed one; sampled mode returns
/// (1 + hits) / (1 + iterations). Sample i draws its signs from
/// splitmix64(seed, i), so the result does not depend on `threads`.
inline double permutation_test(std::span<const double> diffs, const PermutationOptions& opt = {}) {
    const std::size_t n = diffs.size();
    if (n == 0) throw DataError("permutation test needs at least one query");
    double observed = 0;
    for (double d : diffs) observed += d;
    observed = std::abs(observed);
    // Sums are compared instead of means; the slack absorbs summation-order noise.
    const double slack = 1e-12 * std::max(1.0, observed);

    const bool exhaustive = opt.mode == PermutationMode::exhaustive ||
                            (opt.mode == PermutationMode::automatic && n <= opt.exhaustive_limit);
    if (exhaustive) {
        if (n > 30) throw ConfigError("exhaustive permutation test limited to 30 queries");
        const std::uint64_t patterns = std::uint64_t{1} << n;
        std::uint64_t hits = 0;
        for (std::uint64_t mask = 0; mask < patterns; ++mask) {
            double s = 0;
            for (std::size_t i = 0; i < n; ++i) s += (mask >> i & 1) ? -diffs[i] : diffs[i];
            if (std::abs(s) >= observed - slack) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(patterns);
    }

    if (opt.iterations == 0) throw ConfigError("permutation iterations must be >= 1");
    const auto sample = [&](std::uint64_t it) {
        std::uint64_t state = splitmix64(opt.seed ^ splitmix64(it));
        std::uint64_t bits = 0;
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i % 64 == 0) {
                state = splitmix64(state);
                bits = state;
            }
            s += (bits >> (i % 64) & 1) ? -diffs[i] : diffs[i];
        }
        return std::abs(s) >= observed - slack;
    };
    const std::size_t threads = std::max<std::size_t>(1, opt.threads);
    std::vector<std::uint64_t> hits(threads, 0);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < threads; ++w)
        workers.emplace_back([&, w] {
            for (std::uint64_t it = w; it < opt.iterations; it += threads) hits[w] += sample(it) ? 1 : 0;
        });
    for (auto& t : workers) t.join();
    std::uint64_t total = 0;
    for (auto h : hits) total += h;
    return static_cast<double>(1 + total) / static_cast<double>(1 + opt.iterations);
}

inline double permutation_test(const RunResult& a, const RunResult& b, const Qrels& qrels, const Metric& m,
                               const PermutationOptions& opt = {}) {
    const auto d = detail::paired(per_query(a, qrels, m), per_query(b, qrels, m));
    return permutation_test(d.diffs, opt);
}

struct WinTieLoss {
    std::size_t wins = 0;
    std::size_t ties = 0;
    std::size_t losses = 0;

    std::size_t total() const { return wins + ties + losses; }
    std::string to_string() const {
        return std::to_string(wins) + "/" + std::to_string(ties) + "/" + std::to_string(losses);
    }
    bool operator==(const WinTieLoss&) const = default;
};

inline WinTieLoss wtl_counts(const PerQueryScores& a, const PerQueryScores& b, double epsilon = 1e-6) {
    WinTieLoss w;
    for (double d : detail::paired(a, b).diffs) {
        if (std::abs(d) <= epsilon)
            ++w.ties;
        else if (d > 0)
            ++w.wins;
        else
            ++w.losses;
    }
    return w;
}

inline WinTieLoss wtl_counts(const RunResult& a, const RunResult& b, const Qrels& qrels,
                             const Metric& m = Metric::map(), double epsilon = 1e-6) {
    return wtl_counts(per_query(a, qrels, m), per_query(b, qrels, m), epsilon);
}

/// 100 * (sys - base) / base.
inline double relative_improvement(double base, double sys) {
    if (base == 0) throw UndefinedError("relative improvement undefined for a zero baseline");
    return 100.0 * (sys - base) / base;
}

/// Signed percentage with two decimals, e.g. "+5.83%", "-0.49%", "+0.00%".
inline std::string format_percentage(double pct) {
    std::string s = io::format_fixed(pct, 2);
    if (!s.starts_with('-')) s.insert(s.begin(), '+');
    return s + "%";
}

inline std::string format_relative_improvement(double base, double sys) {
    return format_percentage(relative_improvement(base, sys));
}

/// Group -> percentage of the summed absolute weight.
inline std::map<std::string, double> weight_distribution(std::span<const std::string> names,
                                                         std::span<const double> weights,
                                                         const std::function<std::string(std::string_view)>& group_of) {
    if (names.size() != weights.size()) throw ConfigError("feature names and weights differ in length");
    double total = 0;
    for (double w : weights) total += std::abs(w);
    if (total == 0) throw UndefinedError("weight distribution undefined for an all-zero model");
    std::map<std::string, double> sums;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const std::string g = group_of(names[i]);
        if (g.empty()) throw ConfigError("feature '" + names[i] + "' has no group");
        sums[g] += std::abs(weights[i]);
    }
    for (auto& [_, v] : sums) v = 100.0 * v / total;
    return sums;
}

/// FSDM / ENT / Others grouping for the standard feature layout.
inline std::string default_feature_group(std::string_view name) {
    if (name == "fsdm") return "FSDM";
    if (name == "elr" || name == "transe") return "ENT";
    return "Others";
}

} // namespace erank
