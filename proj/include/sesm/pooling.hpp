#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sesm/error.hpp"
#include "sesm/lld.hpp"

namespace sesm {

// Pooled utterance feature f in R^d, d = 24k.
struct GlobalFeature {
    std::vector<double> values;
    std::string utterance_id;

    std::size_t dim() const { return values.size(); }
};

// Concatenation of the global features of ell consecutive utterances of a
// dialog, ending at the anchor.
struct ContextFeature {
    std::vector<double> values;
    int ell = 1;
    std::string anchor_utterance_id;
};

struct PoolConfig {
    int sma_window = 3;   // moving-average width, odd
    int delta_window = 2; // regression half-width D

    void validate() const {
        if (sma_window < 1 || sma_window % 2 == 0)
            throw BadConfig("sma_window must be odd and >= 1");
        if (delta_window < 1) throw BadConfig("delta_window must be >= 1");
    }
};

// Centered moving average; the window truncates to in-range frames at the
// track boundaries.
inline std::vector<double> smooth(std::span<const double> track, int sma_window) {
    if (sma_window < 1 || sma_window % 2 == 0)
        throw BadConfig("sma_window must be odd and >= 1");
    const std::ptrdiff_t T = static_cast<std::ptrdiff_t>(track.size());
    const std::ptrdiff_t half = sma_window / 2;
    std::vector<double> out(track.size());
    for (std::ptrdiff_t t = 0; t < T; ++t) {
        std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - half);
        std::ptrdiff_t hi = std::min<std::ptrdiff_t>(T - 1, t + half);
        double s = 0.0;
        for (std::ptrdiff_t i = lo; i <= hi; ++i) s += track[i];
        out[t] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

// Regression delta with replicate padding at the edges:
//   delta_t = sum_{n=1..D} n * (x[t+n] - x[t-n]) / (2 * sum n^2)
inline std::vector<double> delta(std::span<const double> track, int delta_window) {
    if (delta_window < 1) throw BadConfig("delta_window must be >= 1");
    const std::ptrdiff_t T = static_cast<std::ptrdiff_t>(track.size());
    std::vector<double> out(track.size(), 0.0);
    if (T == 1) return out;
    double norm = 0.0;
    for (int n = 1; n <= delta_window; ++n) norm += static_cast<double>(n) * n;
    norm *= 2.0;
    auto at = [&](std::ptrdiff_t i) {
        return track[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, T - 1))];
    };
    for (std::ptrdiff_t t = 0; t < T; ++t) {
        double s = 0.0;
        for (int n = 1; n <= delta_window; ++n) s += n * (at(t + n) - at(t - n));
        out[t] = s / norm;
    }
    return out;
}

inline constexpr int kNumFunctionals = 12;

inline const std::vector<std::string>& functional_names() {
    static const std::vector<std::string> names = {
        "mean",   "stddev", "kurtosis", "skewness", "min",    "max",
        "range",  "relmin", "relmax",   "slope",    "offset", "regmse"};
    return names;
}

// The 12 statistics pooled over one track, in the fixed order
// [mean, stddev, kurtosis, skewness, min, max, range, relmin, relmax,
//  slope, offset, regmse]. Population moments; excess kurtosis; zero
// variance makes skewness and kurtosis 0. Regression is over frame index
// 0..T-1; relmin/relmax use the first occurrence.
inline std::vector<double> functionals(std::span<const double> track) {
    if (track.empty()) throw BadConfig("functionals: empty track");
    const std::size_t T = track.size();
    const double n = static_cast<double>(T);

    double mean = 0.0;
    for (double x : track) mean += x;
    mean /= n;

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : track) {
        double d = x - mean;
        double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    double stddev = std::sqrt(m2);
    double skewness = m2 > 0.0 ? m3 / (m2 * stddev) : 0.0;
    double kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;

    std::size_t imin = 0, imax = 0;
    for (std::size_t i = 1; i < T; ++i) {
        if (track[i] < track[imin]) imin = i;
        if (track[i] > track[imax]) imax = i;
    }
    double relmin = T > 1 ? static_cast<double>(imin) / (n - 1.0) : 0.0;
    double relmax = T > 1 ? static_cast<double>(imax) / (n - 1.0) : 0.0;

    // least squares line over t = 0..T-1
    double tbar = (n - 1.0) / 2.0;
    double stt = 0.0, sty = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        double dt = static_cast<double>(t) - tbar;
        stt += dt * dt;
        sty += dt * (track[t] - mean);
    }
    double slope = stt > 0.0 ? sty / stt : 0.0;
    double offset = mean - slope * tbar;
    double mse = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        double r = track[t] - (offset + slope * static_cast<double>(t));
        mse += r * r;
    }
    mse /= n;

    return {mean,   stddev, kurtosis, skewness,
            track[imin], track[imax], track[imax] - track[imin],
            relmin, relmax, slope, offset, mse};
}

namespace detail {

// Shared core of pool_global and its ablation variant: smooth every kept
// base track, append deltas of the smoothed tracks, pool 12 functionals per
// track. Track order is all kept base tracks then all kept delta tracks.
inline std::vector<double> pool_tracks(const LLDMatrix& llds, const PoolConfig& cfg,
                                       const std::vector<bool>& keep_base,
                                       const std::vector<bool>& keep_delta) {
    cfg.validate();
    const std::size_t T = llds.values.rows;
    const std::size_t k = llds.k;
    if (T == 0) throw BadConfig("pool: no frames");
    if (llds.values.cols != k) throw DimensionMismatch("LLDMatrix k mismatch");

    std::vector<std::vector<double>> smoothed(k), deltas(k);
    std::vector<double> col(T);
    for (std::size_t j = 0; j < k; ++j) {
        if (!keep_base[j] && !keep_delta[j]) continue;
        for (std::size_t t = 0; t < T; ++t) col[t] = llds.values(t, j);
        smoothed[j] = smooth(col, cfg.sma_window);
        if (keep_delta[j]) deltas[j] = delta(smoothed[j], cfg.delta_window);
    }

    std::vector<double> out;
    for (std::size_t j = 0; j < k; ++j) {
        if (!keep_base[j]) continue;
        auto f = functionals(smoothed[j]);
        out.insert(out.end(), f.begin(), f.end());
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (!keep_delta[j]) continue;
        auto f = functionals(deltas[j]);
        out.insert(out.end(), f.begin(), f.end());
    }
    if (out.empty()) throw EmptyFeature("all descriptor tracks excluded");
    for (double v : out) {
        if (!std::isfinite(v)) throw NonFinite("pooled feature contains non-finite value");
    }
    return out;
}

} // namespace detail

// Smooth each descriptor track, take deltas of the smoothed tracks, then
// pool 12 functionals per track: d = 24k values per utterance.
inline GlobalFeature pool_global(const LLDMatrix& llds, const PoolConfig& cfg,
                                 const std::string& utterance_id = "") {
    std::vector<bool> all(llds.k, true);
    GlobalFeature g;
    g.values = detail::pool_tracks(llds, cfg, all, all);
    g.utterance_id = utterance_id;
    return g;
}

// pool_global with named tracks removed; used by the ablation harness.
inline std::vector<double> pool_global_masked(const LLDMatrix& llds, const PoolConfig& cfg,
                                              const std::vector<bool>& keep_base,
                                              const std::vector<bool>& keep_delta) {
    if (keep_base.size() != llds.k || keep_delta.size() != llds.k)
        throw DimensionMismatch("mask size must equal k");
    return detail::pool_tracks(llds, cfg, keep_base, keep_delta);
}

// Concatenates the ell features ending at the anchor (the anchor plus its
// ell-1 predecessors in the same dialog). Missing predecessors are filled
// by replicating the earliest available feature. Never crosses a dialog
// boundary: callers pass exactly one dialog's features.
inline ContextFeature concat_context(const std::vector<GlobalFeature>& dialog_features,
                                     std::size_t anchor, int ell) {
    if (ell < 1) throw BadConfig("context length ell must be >= 1");
    if (anchor >= dialog_features.size())
        throw BadConfig("anchor index out of range");
    const std::size_t d = dialog_features[anchor].dim();
    ContextFeature ctx;
    ctx.ell = ell;
    ctx.anchor_utterance_id = dialog_features[anchor].utterance_id;
    ctx.values.reserve(d * static_cast<std::size_t>(ell));
    for (int s = 0; s < ell; ++s) {
        std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(anchor) - (ell - 1) + s;
        if (idx < 0) idx = 0;
        const auto& f = dialog_features[static_cast<std::size_t>(idx)];
        if (f.dim() != d) throw DimensionMismatch("dialog features have mixed dimensions");
        ctx.values.insert(ctx.values.end(), f.values.begin(), f.values.end());
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Feature cache file: '# d=<d> k=<k>' sidecar line, then a CSV with header
// utterance_id,f_0,...,f_{d-1}. Values are written with %.17g so a reload
// is bit-exact.

struct FeatureTable {
    std::size_t d = 0;
    std::size_t k = 0;
    std::vector<GlobalFeature> rows;
    std::map<std::string, std::size_t> index; // utterance_id -> row

    void add(GlobalFeature g) {
        index.emplace(g.utterance_id, rows.size());
        rows.push_back(std::move(g));
    }

    const GlobalFeature& by_id(const std::string& utterance_id) const {
        auto it = index.find(utterance_id);
        if (it == index.end())
            throw LengthMismatch("no feature row for utterance '" + utterance_id + "'");
        return rows[it->second];
    }
};

inline void write_feature_cache(const FeatureTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "# d=" << table.d << " k=" << table.k << '\n';
    out << "utterance_id";
    for (std::size_t j = 0; j < table.d; ++j) out << ",f_" << j;
    out << '\n';
    char buf[40];
    for (const auto& g : table.rows) {
        out << g.utterance_id;
        for (double v : g.values) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

inline FeatureTable read_feature_cache(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature cache: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": empty feature cache");
    line = detail::strip_cr(line);
    FeatureTable table;
    if (std::sscanf(line.c_str(), "# d=%zu k=%zu", &table.d, &table.k) != 2)
        throw IoError(path + ": missing '# d=<d> k=<k>' sidecar line");
    if (!std::getline(in, line)) throw IoError(path + ": missing header");
    std::size_t row = 2;
    while (std::getline(in, line)) {
        ++row;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        auto fields = detail::split_csv_row(line);
        if (fields.size() != table.d + 1)
            throw IoError(path + ": row " + std::to_string(row) + ": expected " +
                          std::to_string(table.d + 1) + " columns, got " +
                          std::to_string(fields.size()));
        GlobalFeature g;
        g.utterance_id = fields[0];
        g.values.resize(table.d);
        for (std::size_t j = 0; j < table.d; ++j) {
            char* end = nullptr;
            g.values[j] = std::strtod(fields[j + 1].c_str(), &end);
            if (end == fields[j + 1].c_str())
                throw IoError(path + ": row " + std::to_string(row) + ": bad number '" +
                              fields[j + 1] + "'");
        }
        table.add(std::move(g));
    }
    return table;
}

} // namespace sesm
