#pragma once

// Side-by-side system comparison: metric values, relative change against the
// first system, significance marks against every earlier system, W/T/L
// against the first system. Rendered as an aligned text table and as JSON.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "erank/evalkit.hpp"
#include "erank/io.hpp"

namespace erank {

struct SystemRun {
    std::string name;
    RunResult run;
};

struct ReportOptions {
    std::vector<Metric> metrics = {Metric::map(100), Metric::precision(10), Metric::precision(20)};
    double alpha = 0.05;
    double tie_epsilon = 1e-6;
    PermutationOptions permutation;
};

struct ComparisonReport {
    struct Cell {
        double value = 0;
        std::optional<double> relative;   // percent vs the first system
        std::vector<double> p_values;     // vs each earlier system
        std::string marks;                // significance symbols
    };
    struct Row {
        std::string name;
        std::vector<Cell> cells;           // one per metric
        std::optional<WinTieLoss> wtl;     // vs the first system, on the first metric
        std::size_t evaluated_queries = 0;
    };

    std::vector<std::string> metric_names;
    std::vector<std::string> mark_legend;  // mark_legend[j] = symbol for "better than system j"
    std::vector<Row> rows;

    std::string to_text() const;
    nlohmann::ordered_json to_json() const;
};

inline const std::vector<std::string>& significance_symbols() {
    static const std::vector<std::string> symbols = {"†", "‡", "§", "¶", "#", "*"};
    return symbols;
}

inline ComparisonReport build_report(const std::vector<SystemRun>& systems, const Qrels& qrels,
                                     const ReportOptions& opt = {}) {
    if (systems.empty()) throw ConfigError("comparison needs at least one system");
    ComparisonReport rep;
    for (const auto& m : opt.metrics) rep.metric_names.push_back(m.name());
    for (std::size_t j = 0; j + 1 < systems.size(); ++j)
        rep.mark_legend.push_back(significance_symbols()[std::min(j, significance_symbols().size() - 1)]);

    std::vector<std::vector<PerQueryScores>> scores(systems.size());
    for (std::size_t i = 0; i < systems.size(); ++i)
        for (const auto& m : opt.metrics) scores[i].push_back(per_query(systems[i].run, qrels, m));

    for (std::size_t i = 0; i < systems.size(); ++i) {
        ComparisonReport::Row row;
        row.name = systems[i].name;
        row.evaluated_queries = scores[i].empty() ? 0 : scores[i].front().values.size();
        for (std::size_t k = 0; k < opt.metrics.size(); ++k) {
            ComparisonReport::Cell cell;
            cell.value = scores[i][k].mean();
            if (i > 0) {
                const double base = scores[0][k].mean();
                if (base != 0) cell.relative = relative_improvement(base, cell.value);
            }
            for (std::size_t j = 0; j < i; ++j) {
                const auto d = detail::paired(scores[i][k], scores[j][k]);
                const double p = permutation_test(d.diffs, opt.permutation);
                cell.p_values.push_back(p);
                if (p < opt.alpha && cell.value > scores[j][k].mean()) cell.marks += rep.mark_legend[j];
            }
            row.cells.push_back(std::move(cell));
        }
        if (i > 0 && !opt.metrics.empty()) row.wtl = wtl_counts(scores[i][0], scores[0][0], opt.tie_epsilon);
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

namespace detail {
inline std::size_t display_width(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
    return n;
}
inline std::string pad(const std::string& s, std::size_t width) {
    const std::size_t w = display_width(s);
    return w >= width ? s : s + std::string(width - w, ' ');
}
} // namespace detail

inline std::string ComparisonReport::to_text() const {
    std::vector<std::vector<std::string>> table;
    std::vector<std::string> header{"system"};
    for (const auto& m : metric_names) {
        header.push_back(m);
        header.emplace_back("");
    }
    header.emplace_back("W/T/L");
    table.push_back(header);
    for (const auto& r : rows) {
        std::vector<std::string> line{r.name};
        for (const auto& c : r.cells) {
            line.push_back(io::format_fixed(c.value, 4) + c.marks);
            line.push_back(c.relative ? format_percentage(*c.relative) : "--");
        }
        line.push_back(r.wtl ? r.wtl->to_string() : "--/--/--");
        table.push_back(std::move(line));
    }
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& line : table)
        for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], detail::display_width(line[c]));
    std::string out;
    for (const auto& line : table) {
        std::string text;
        for (std::size_t c = 0; c < line.size(); ++c) {
            text += c + 1 == line.size() ? line[c] : detail::pad(line[c], widths[c] + 2);
        }
        while (!text.empty() && text.back() == ' ') text.pop_back();
        out += text + '\n';
    }
    for (std::size_t j = 0; j < mark_legend.size(); ++j)
        out += mark_legend[j] + " significant improvement over " + rows[j].name + '\n';
    return out;
}

inline nlohmann::ordered_json ComparisonReport::to_json() const {
    nlohmann::ordered_json j;
    j["metrics"] = metric_names;
    j["systems"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json s;
        s["name"] = r.name;
        s["evaluated_queries"] = r.evaluated_queries;
        s["metrics"] = nlohmann::ordered_json::object();
        for (std::size_t k = 0; k < r.cells.size(); ++k) {
            const auto& c = r.cells[k];
            nlohmann::ordered_json m;
            m["value"] = c.value;
            m["relative_percent"] = c.relative ? nlohmann::ordered_json(*c.relative) : nlohmann::ordered_json(nullptr);
            m["p_values"] = c.p_values;
            m["marks"] = c.marks;
            s["metrics"][metric_names[k]] = std::move(m);
        }
        if (r.wtl)
            s["wtl"] = {{"wins", r.wtl->wins}, {"ties", r.wtl->ties}, {"losses", r.wtl->losses}};
        else
            s["wtl"] = nullptr;
        j["systems"].push_back(std::move(s));
    }
    return j;
}

} // namespace erank
