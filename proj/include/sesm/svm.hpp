#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sesm/error.hpp"
#include "sesm/matrix.hpp"
#include "sesm/rng.hpp"

namespace sesm {

enum class KernelKind { linear, rbf };

// gamma = 0 is a sentinel meaning "1 / feature dimension", resolved when
// training starts; trained models always carry the resolved value.
struct KernelSpec {
    KernelKind kind = KernelKind::rbf;
    double gamma = 0.0;
};

struct TrainConfig {
    double c = 1.0;             // slack penalty
    KernelSpec kernel;
    double tolerance = 1e-3;    // KKT / convergence threshold
    std::size_t max_passes = 0; // 0 = automatic bound
    std::uint64_t seed = 42;
};

inline double kernel_eval(std::span<const double> x, std::span<const double> z,
                          const KernelSpec& spec) {
    if (x.size() != z.size())
        throw DimensionMismatch("kernel_eval: " + std::to_string(x.size()) + " vs " +
                                std::to_string(z.size()));
    switch (spec.kind) {
        case KernelKind::linear:
            return dot(x, z);
        case KernelKind::rbf:
            if (spec.gamma <= 0.0) throw BadConfig("rbf gamma must be > 0");
            return std::exp(-spec.gamma * squared_distance(x, z));
    }
    throw BadConfig("unknown kernel kind");
}

inline KernelSpec resolve_kernel(const KernelSpec& spec, std::size_t dim) {
    KernelSpec k = spec;
    if (k.kind == KernelKind::rbf && k.gamma <= 0.0)
        k.gamma = 1.0 / static_cast<double>(dim);
    return k;
}

// Margin below which an absent one-vs-rest class scores; it loses every
// comparison against a real classifier.
inline constexpr double kAbsentClassMargin = -1e30;

// Soft-margin binary classifier in dual form. dual_coefficients hold
// alpha_i * y_i for the retained support vectors; sv_indices are their
// positions in the training set (kept for KKT audits).
struct BinarySVM {
    Matrix support_vectors;
    std::vector<double> dual_coefficients;
    std::vector<std::size_t> sv_indices;
    double bias = 0.0;
    KernelSpec kernel;
    bool converged = true;
    std::size_t passes_run = 0;

    double decision(std::span<const double> x) const {
        double m = bias;
        for (std::size_t i = 0; i < support_vectors.rows; ++i)
            m += dual_coefficients[i] * kernel_eval(support_vectors.row(i), x, kernel);
        return m;
    }
};

struct BinaryPrediction {
    int label = 1; // +1 or -1; margin 0 maps to +1
    double margin = 0.0;
};

inline BinaryPrediction predict_binary(const BinarySVM& model, std::span<const double> x) {
    if (model.support_vectors.rows > 0 && model.support_vectors.cols != x.size())
        throw DimensionMismatch("predict_binary: input dim " + std::to_string(x.size()) +
                                ", model dim " + std::to_string(model.support_vectors.cols));
    BinaryPrediction p;
    p.margin = model.decision(x);
    p.label = p.margin >= 0.0 ? 1 : -1;
    return p;
}

// Solves the soft-margin dual by sequential pairwise coordinate
// optimization. Working-pair selection: one pass scans points in a
// seeded-shuffled order; a KKT violator is paired first with the point of
// maximal |E_i - E_j| and, failing progress, with candidates in a second
// seeded-shuffled order. Converged means a full pass found no violator at
// half the configured tolerance.
inline BinarySVM train_binary(const Matrix& X, const std::vector<int>& y,
                              const TrainConfig& cfg) {
    const std::size_t n = X.rows;
    if (y.size() != n) throw LengthMismatch("train_binary: labels do not match rows");
    if (cfg.c <= 0.0) throw BadConfig("C must be > 0");
    if (cfg.tolerance <= 0.0) throw BadConfig("tolerance must be > 0");
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v == 1) has_pos = true;
        else if (v == -1) has_neg = true;
        else throw BadConfig("labels must be +1 or -1");
    }
    if (!has_pos || !has_neg) throw SingleClass("training set contains a single class");
    if (!all_finite(X.data)) throw NonFinite("training features contain NaN/Inf");

    const KernelSpec kernel = resolve_kernel(cfg.kernel, X.cols);
    const double C = cfg.c;
    const double tol = 0.5 * cfg.tolerance; // inner slack so audits at cfg.tolerance hold

    std::vector<std::vector<double>> gram(n);
    auto gram_row = [&](std::size_t i) -> const std::vector<double>& {
        auto& row = gram[i];
        if (row.empty()) {
            row.resize(n);
            for (std::size_t j = 0; j < n; ++j)
                row[j] = kernel_eval(X.row(i), X.row(j), kernel);
        }
        return row;
    };

    std::vector<double> alpha(n, 0.0);
    std::vector<double> g(n, 0.0); // sum_j alpha_j y_j K(j, .) without bias
    double b = 0.0;
    Rng rng(cfg.seed);

    auto try_step = [&](std::size_t i, std::size_t j) -> bool {
        if (i == j) return false;
        const auto& Ki = gram_row(i);
        const auto& Kj = gram_row(j);
        const double Ei = g[i] + b - y[i];
        const double Ej = g[j] + b - y[j];
        const double ai_old = alpha[i], aj_old = alpha[j];
        double L, H;
        if (y[i] != y[j]) {
            L = std::max(0.0, aj_old - ai_old);
            H = std::min(C, C + aj_old - ai_old);
        } else {
            L = std::max(0.0, ai_old + aj_old - C);
            H = std::min(C, ai_old + aj_old);
        }
        if (L >= H) return false;
        const double eta = 2.0 * Ki[j] - Ki[i] - Kj[j];
        if (eta >= 0.0) return false;
        double aj = aj_old - y[j] * (Ei - Ej) / eta;
        aj = std::clamp(aj, L, H);
        if (std::abs(aj - aj_old) < 1e-12) return false;
        const double ai = ai_old + y[i] * y[j] * (aj_old - aj);

        const double b1 = b - Ei - y[i] * (ai - ai_old) * Ki[i] - y[j] * (aj - aj_old) * Ki[j];
        const double b2 = b - Ej - y[i] * (ai - ai_old) * Ki[j] - y[j] * (aj - aj_old) * Kj[j];
        if (ai > 0.0 && ai < C) b = b1;
        else if (aj > 0.0 && aj < C) b = b2;
        else b = 0.5 * (b1 + b2);

        alpha[i] = ai;
        alpha[j] = aj;
        const double di = y[i] * (ai - ai_old), dj = y[j] * (aj - aj_old);
        for (std::size_t t = 0; t < n; ++t) g[t] += di * Ki[t] + dj * Kj[t];
        return true;
    };

    std::vector<std::size_t> order(n), jorder(n);
    std::iota(order.begin(), order.end(), 0);
    std::iota(jorder.begin(), jorder.end(), 0);
    const std::size_t max_passes =
        cfg.max_passes > 0 ? cfg.max_passes : std::max<std::size_t>(100, 10 * n);

    bool converged = false;
    std::size_t pass = 0;
    while (pass < max_passes) {
        ++pass;
        rng.shuffle(order);
        std::size_t changed = 0, violators = 0;
        for (std::size_t i : order) {
            const double r = y[i] * (g[i] + b - y[i]);
            const bool violates = (r < -tol && alpha[i] < C) || (r > tol && alpha[i] > 0.0);
            if (!violates) continue;
            ++violators;

            std::size_t best_j = n;
            double best_gap = -1.0;
            const double Ei = g[i] + b - y[i];
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double gap = std::abs(Ei - (g[j] + b - y[j]));
                if (gap > best_gap) {
                    best_gap = gap;
                    best_j = j;
                }
            }
            bool ok = best_j < n && try_step(i, best_j);
            if (!ok) {
                rng.shuffle(jorder);
                for (std::size_t j : jorder) {
                    if (j == best_j) continue;
                    if (try_step(i, j)) {
                        ok = true;
                        break;
                    }
                }
            }
            if (ok) ++changed;
        }
        if (violators == 0) {
            converged = true;
            break;
        }
        if (changed == 0) break; // violators remain but no pair can move
    }

    // snap round-off dust so the support set is crisp
    for (double& a : alpha) {
        if (a < 1e-10 * C) a = 0.0;
        else if (a > C * (1.0 - 1e-10)) a = C;
    }

    // final bias: mean over free vectors, else midpoint of the feasible interval
    double fsum = 0.0;
    std::size_t nfree = 0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > 0.0 && alpha[i] < C) {
            fsum += y[i] - g[i];
            ++nfree;
        } else if (alpha[i] == 0.0) {
            if (y[i] == 1) lo = std::max(lo, 1.0 - g[i]);
            else hi = std::min(hi, -1.0 - g[i]);
        } else { // alpha == C
            if (y[i] == 1) hi = std::min(hi, 1.0 - g[i]);
            else lo = std::max(lo, -1.0 - g[i]);
        }
    }
    if (nfree > 0) b = fsum / static_cast<double>(nfree);
    else if (lo <= hi && std::isfinite(lo) && std::isfinite(hi)) b = 0.5 * (lo + hi);

    BinarySVM model;
    model.kernel = kernel;
    model.bias = b;
    model.converged = converged;
    model.passes_run = pass;
    std::size_t nsv = 0;
    for (double a : alpha)
        if (a > 0.0) ++nsv;
    model.support_vectors = Matrix(nsv, X.cols);
    model.dual_coefficients.reserve(nsv);
    model.sv_indices.reserve(nsv);
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] <= 0.0) continue;
        auto dst = model.support_vectors.row(r++);
        auto src = X.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
        model.dual_coefficients.push_back(alpha[i] * y[i]);
        model.sv_indices.push_back(i);
    }
    return model;
}

// ---------------------------------------------------------------------------
// One-vs-rest multiclass

struct MulticlassSVM {
    int n_classes = 0;
    std::vector<BinarySVM> per_class;
};

// Classes absent from the training data get a constant scorer at
// kAbsentClassMargin so they never win against a present class.
inline MulticlassSVM train_multiclass_ovr(const Matrix& X, const std::vector<int>& y,
                                          int n_classes, const TrainConfig& cfg) {
    if (n_classes < 2) throw BadConfig("need at least 2 classes");
    if (y.size() != X.rows) throw LengthMismatch("labels do not match rows");
    std::vector<std::size_t> counts(n_classes, 0);
    for (int v : y) {
        if (v < 0 || v >= n_classes) throw BadConfig("class label out of range");
        ++counts[v];
    }
    int present = 0;
    for (auto c : counts)
        if (c > 0) ++present;
    if (present < 2) throw SingleClass("one-vs-rest needs at least 2 distinct classes");

    MulticlassSVM model;
    model.n_classes = n_classes;
    Rng root(cfg.seed);
    for (int c = 0; c < n_classes; ++c) {
        if (counts[c] == 0) {
            BinarySVM absent;
            absent.kernel = resolve_kernel(cfg.kernel, X.cols);
            absent.bias = kAbsentClassMargin;
            model.per_class.push_back(std::move(absent));
            continue;
        }
        std::vector<int> yc(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) yc[i] = y[i] == c ? 1 : -1;
        TrainConfig sub = cfg;
        sub.seed = root.child(static_cast<std::uint64_t>(c)).seed();
        model.per_class.push_back(train_binary(X, yc, sub));
    }
    return model;
}

inline std::vector<double> multiclass_margins(const MulticlassSVM& model,
                                              std::span<const double> x) {
    std::vector<double> margins;
    margins.reserve(model.per_class.size());
    for (const auto& clf : model.per_class) margins.push_back(predict_binary(clf, x).margin);
    return margins;
}

// argmax of the per-class margins; ties break to the lowest class index.
inline int predict_multiclass(const MulticlassSVM& model, std::span<const double> x) {
    std::vector<double> m = multiclass_margins(model, x);
    int best = 0;
    for (int c = 1; c < model.n_classes; ++c)
        if (m[c] > m[best]) best = c;
    return best;
}

// ---------------------------------------------------------------------------
// Joint (spontaneity, emotion) tuple classifier

inline constexpr int kNumSpontaneity = 2;
inline constexpr int kNumEmotions = 4;
inline constexpr int kNumTuples = kNumSpontaneity * kNumEmotions;

inline int tuple_row(int spontaneity, int emotion) {
    return kNumEmotions * spontaneity + emotion;
}

inline std::pair<int, int> tuple_from_row(int row) {
    return {row / kNumEmotions, row % kNumEmotions};
}

// Linear tuple classifier: one weight row per (spontaneity, emotion) pair.
struct JointModel {
    Matrix weights; // kNumTuples x d
    double c = 1.0;
    double final_loss = 0.0;
    std::size_t epochs_run = 0;
    std::vector<double> best_loss_history; // best-so-far after each epoch
};

// L(W) = 1/2 sum_r ||w_r||^2 + C sum_j zeta_j with the multiclass hinge
// zeta_j = max(0, max_{r != r_j} (1 + <w_r, f_j> - <w_{r_j}, f_j>)).
inline double joint_loss(const Matrix& W, const Matrix& X,
                         const std::vector<int>& tuple_rows, double c) {
    if (X.rows != tuple_rows.size()) throw LengthMismatch("labels do not match rows");
    if (!X.empty() && W.cols != X.cols)
        throw DimensionMismatch("joint_loss: W cols " + std::to_string(W.cols) +
                                ", X cols " + std::to_string(X.cols));
    double reg = 0.0;
    for (double w : W.data) reg += w * w;
    reg *= 0.5;

    double slack = 0.0;
    std::vector<double> scores(W.rows);
    for (std::size_t j = 0; j < X.rows; ++j) {
        auto x = X.row(j);
        for (std::size_t r = 0; r < W.rows; ++r) scores[r] = dot(W.row(r), x);
        const int rj = tuple_rows[j];
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < W.rows; ++r) {
            if (static_cast<int>(r) == rj) continue;
            worst = std::max(worst, 1.0 + scores[r] - scores[rj]);
        }
        slack += std::max(0.0, worst);
    }
    return reg + c * slack;
}

// Minimizes joint_loss by seeded epoch-shuffled subgradient descent with
// step 1/(lambda*t), lambda = 1/(C*N), keeping the best iterate seen at
// each epoch boundary. Stops when the best loss improves by less than
// cfg.tolerance over an epoch or after max_passes epochs.
inline JointModel train_joint(const Matrix& X,
                              const std::vector<std::pair<int, int>>& labels,
                              const TrainConfig& cfg) {
    const std::size_t n = X.rows;
    const std::size_t d = X.cols;
    if (labels.size() != n) throw LengthMismatch("labels do not match rows");
    if (n == 0) throw BadConfig("empty training set");
    if (cfg.c <= 0.0) throw BadConfig("C must be > 0");
    if (!all_finite(X.data)) throw NonFinite("training features contain NaN/Inf");

    std::vector<int> rows(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& [ys, ye] = labels[j];
        if (ys < 0 || ys >= kNumSpontaneity || ye < 0 || ye >= kNumEmotions)
            throw BadConfig("tuple label out of range");
        rows[j] = tuple_row(ys, ye);
    }
    if (std::adjacent_find(rows.begin(), rows.end(), std::not_equal_to<>()) == rows.end())
        throw SingleClass("all samples share one label tuple");

    const double C = cfg.c;
    const double lambda = 1.0 / (C * static_cast<double>(n));
    const double radius = std::sqrt(2.0 / lambda);
    const std::size_t max_epochs = cfg.max_passes > 0 ? cfg.max_passes : 300;

    Matrix W(kNumTuples, d, 0.0);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    JointModel model;
    model.c = C;
    Matrix best_W = W;
    double best_loss = joint_loss(W, X, rows, C);
    std::vector<double> scores(kNumTuples);

    std::size_t t = 0;
    std::size_t epoch = 0;
    while (epoch < max_epochs) {
        ++epoch;
        rng.shuffle(order);
        for (std::size_t j : order) {
            ++t;
            const double eta = 1.0 / (lambda * static_cast<double>(t));
            auto x = X.row(j);
            for (int r = 0; r < kNumTuples; ++r) scores[r] = dot(W.row(r), x);
            const int rj = rows[j];
            int worst = -1;
            double worst_score = -std::numeric_limits<double>::infinity();
            for (int r = 0; r < kNumTuples; ++r) {
                if (r == rj) continue;
                if (scores[r] > worst_score) {
                    worst_score = scores[r];
                    worst = r;
                }
            }
            const bool violated = 1.0 + worst_score - scores[rj] > 0.0;

            const double shrink = 1.0 - eta * lambda; // = 1 - 1/t
            for (double& w : W.data) w *= shrink;
            if (violated) {
                auto wj = W.row(rj);
                auto ww = W.row(worst);
                for (std::size_t i = 0; i < d; ++i) {
                    wj[i] += eta * x[i];
                    ww[i] -= eta * x[i];
                }
            }
            double norm2 = 0.0;
            for (double w : W.data) norm2 += w * w;
            if (norm2 > radius * radius) {
                const double scale = radius / std::sqrt(norm2);
                for (double& w : W.data) w *= scale;
            }
        }
        const double epoch_loss = joint_loss(W, X, rows, C);
        const double prev_best = best_loss;
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            best_W = W;
        }
        model.best_loss_history.push_back(best_loss);
        if (epoch > 1 && prev_best - best_loss < cfg.tolerance) break;
    }

    model.weights = std::move(best_W);
    model.final_loss = best_loss;
    model.epochs_run = epoch;
    return model;
}

// Returns (spontaneity, emotion) of the highest-scoring weight row; ties
// break to the lowest row index.
inline std::pair<int, int> predict_joint(const JointModel& model,
                                         std::span<const double> x) {
    if (model.weights.cols != x.size())
        throw DimensionMismatch("predict_joint: input dim " + std::to_string(x.size()) +
                                ", model dim " + std::to_string(model.weights.cols));
    int best = 0;
    double best_score = dot(model.weights.row(0), x);
    for (int r = 1; r < static_cast<int>(model.weights.rows); ++r) {
        double s = dot(model.weights.row(r), x);
        if (s > best_score) {
            best_score = s;
            best = r;
        }
    }
    return tuple_from_row(best);
}

} // namespace sesm
