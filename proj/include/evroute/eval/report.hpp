#pragma once

#include <algorithm>
#include <charconv>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "evroute/core/dataset.hpp"
#include "evroute/eval/metrics.hpp"
#include "evroute/models/estimator.hpp"

namespace evroute::eval {

enum class Level { route, segment };

inline std::string_view to_string(Level l) { return l == Level::route ? "route" : "segment"; }

inline Level parse_level(std::string_view s) {
    if (s == "route") return Level::route;
    if (s == "segment") return Level::segment;
    throw ValidationError("unknown eval level '" + std::string(s) + "'; valid: route|segment");
}

inline constexpr const char* kReportHeader =
    "model,level,n_routes,mape_pct,bps_vs_ffn,mape_cold_pct,bps_cold,mape_hot_pct,bps_hot";

struct SliceScore {
    std::size_t n_routes = 0;
    std::optional<double> mape_pct; // empty when the slice has no routes
    std::size_t skipped = 0;

    bool operator==(const SliceScore&) const = default;
};

struct ReportRow {
    std::string model;
    Level level = Level::route;
    SliceScore overall, cold, hot;
    std::optional<double> bps, bps_cold, bps_hot;
};

struct EvalReport {
    Level level = Level::route;
    std::vector<ReportRow> rows;
    std::vector<std::string> warnings;

    const ReportRow* find(std::string_view model) const {
        for (const auto& r : rows)
            if (r.model == model) return &r;
        return nullptr;
    }
};

struct ReportOptions {
    Level level = Level::route;
    Split split = Split::test;
    bool bps = true; // requires an ffn model
    std::size_t threads = 1;
};

namespace detail {

inline SliceScore score_slice(const std::vector<const Route*>& routes, const std::vector<double>& seg_pred,
                              const std::vector<std::size_t>& offsets, Slice slice, Level level) {
    SliceScore s;
    std::vector<double> p, a;
    for (std::size_t i = 0; i < routes.size(); ++i) {
        const Route& r = *routes[i];
        if (!in_slice(r, slice)) continue;
        ++s.n_routes;
        const auto& actual = r.actual_energy_wh.value();
        if (level == Level::route) {
            double sp = 0.0, sa = 0.0;
            for (std::size_t k = 0; k < actual.size(); ++k) {
                sp += seg_pred[offsets[i] + k];
                sa += actual[k];
            }
            p.push_back(sp);
            a.push_back(sa);
        } else {
            for (std::size_t k = 0; k < actual.size(); ++k) {
                p.push_back(seg_pred[offsets[i] + k]);
                a.push_back(actual[k]);
            }
        }
    }
    if (s.n_routes == 0) return s;
    const auto m = mape(p, a);
    s.mape_pct = m.pct;
    s.skipped = m.skipped;
    return s;
}

inline std::optional<double> delta(const std::optional<double>& ref, const std::optional<double>& m) {
    if (!ref || !m) return std::nullopt;
    return bps_delta(*ref, *m);
}

} // namespace detail

/// Scores every model on the same routes. Rows come out in the fixed model order; the ffn
/// row is the basis-point reference.
inline EvalReport build_report(std::span<const models::Estimator* const> estimators, const Dataset& ds,
                               const ReportOptions& opt = {}) {
    EvalReport rep;
    rep.level = opt.level;
    const auto routes = ds.routes_in(opt.split);
    if (routes.empty()) throw EmptyEvaluationError("no routes in the " + std::string(to_string(opt.split)) + " split");
    for (const auto* r : routes)
        if (!r->actual_energy_wh) throw ValidationError("route " + r->route_id + " has no energy labels");

    std::vector<const models::Estimator*> sorted(estimators.begin(), estimators.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
        return models::kind_rank(a->kind()) < models::kind_rank(b->kind());
    });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->kind() == sorted[i - 1]->kind())
            throw ValidationError("model " + sorted[i]->name() + " appears twice in the report");

    for (const auto* m : sorted) {
        m->check_schema(ds.schema);
        const auto enc = m->encode(routes);
        const auto pred = m->forward(enc, opt.threads);
        ReportRow row;
        row.model = m->name();
        row.level = opt.level;
        row.overall = detail::score_slice(routes, pred, enc.offsets, Slice::overall, opt.level);
        row.cold = detail::score_slice(routes, pred, enc.offsets, Slice::cold, opt.level);
        row.hot = detail::score_slice(routes, pred, enc.offsets, Slice::hot, opt.level);
        rep.rows.push_back(std::move(row));
    }
    if (!rep.rows.empty()) {
        if (rep.rows.front().cold.n_routes == 0) rep.warnings.push_back("cold slice is empty; cold columns left blank");
        if (rep.rows.front().hot.n_routes == 0) rep.warnings.push_back("hot slice is empty; hot columns left blank");
    }

    if (opt.bps) {
        const ReportRow* ref = rep.find("ffn");
        if (!ref) throw ReferenceMissingError("basis points are relative to ffn, which is not among the models");
        const ReportRow r0 = *ref;
        for (auto& row : rep.rows) {
            row.bps = detail::delta(r0.overall.mape_pct, row.overall.mape_pct);
            row.bps_cold = detail::delta(r0.cold.mape_pct, row.cold.mape_pct);
            row.bps_hot = detail::delta(r0.hot.mape_pct, row.hot.mape_pct);
        }
    }
    return rep;
}

namespace detail {

inline std::string fmt_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_number(*v) : std::string(); }

inline std::optional<double> parse_opt(const std::string& s, std::size_t line) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("report", line, "bad number '" + s + "'");
    return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

/// Numbers are written in shortest round-trip form; blank cells mean "not applicable".
inline void write_report_csv(const EvalReport& rep, std::ostream& out) {
    out << kReportHeader << '\n';
    for (const auto& r : rep.rows) {
        out << r.model << ',' << to_string(r.level) << ',' << r.overall.n_routes << ','
            << detail::fmt_opt(r.overall.mape_pct) << ',' << detail::fmt_opt(r.bps) << ','
            << detail::fmt_opt(r.cold.mape_pct) << ',' << detail::fmt_opt(r.bps_cold) << ','
            << detail::fmt_opt(r.hot.mape_pct) << ',' << detail::fmt_opt(r.bps_hot) << '\n';
    }
}

/// Reads back the rows of a report CSV. Slice route counts are not part of the format.
inline std::vector<ReportRow> read_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) throw ParseError("report", 1, "unexpected header");
    std::vector<ReportRow> rows;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 9) throw ParseError("report", n, "expected 9 fields, got " + std::to_string(f.size()));
        ReportRow r;
        r.model = f[0];
        r.level = parse_level(f[1]);
        try {
            r.overall.n_routes = std::stoul(f[2]);
        } catch (const std::exception&) {
            throw ParseError("report", n, "bad route count '" + f[2] + "'");
        }
        r.overall.mape_pct = detail::parse_opt(f[3], n);
        r.bps = detail::parse_opt(f[4], n);
        r.cold.mape_pct = detail::parse_opt(f[5], n);
        r.bps_cold = detail::parse_opt(f[6], n);
        r.hot.mape_pct = detail::parse_opt(f[7], n);
        r.bps_hot = detail::parse_opt(f[8], n);
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace evroute::eval
