#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sesm/audio.hpp"
#include "sesm/error.hpp"
#include "sesm/matrix.hpp"

namespace sesm {

// Settings for the four frame-level descriptors. fmax_hz = 0 means
// "use sample_rate / 2".
struct LLDConfig {
    int n_mfcc = 12;
    int n_mel_filters = 26;
    double fmin_hz = 0.0;
    double fmax_hz = 0.0;
    double log_floor = 1e-10;
    double f0_min_hz = 80.0;
    double f0_max_hz = 400.0;
    double voicing_threshold = 0.35;

    double resolved_fmax(int rate) const {
        return fmax_hz > 0.0 ? fmax_hz : static_cast<double>(rate) / 2.0;
    }

    void validate(int rate) const {
        double fmax = resolved_fmax(rate);
        if (n_mfcc < 1) throw BadConfig("n_mfcc must be >= 1");
        if (n_mel_filters < n_mfcc)
            throw BadConfig("n_mel_filters must be >= n_mfcc");
        if (fmin_hz < 0.0 || fmin_hz >= fmax)
            throw BadConfig("need 0 <= fmin < fmax");
        if (fmax > static_cast<double>(rate) / 2.0 + 1e-9)
            throw BadConfig("fmax exceeds Nyquist");
        if (f0_min_hz <= 0.0 || f0_min_hz >= f0_max_hz)
            throw BadConfig("need 0 < f0_min < f0_max");
        if (log_floor <= 0.0) throw BadConfig("log_floor must be > 0");
        if (voicing_threshold < 0.0 || voicing_threshold > 1.0)
            throw BadConfig("voicing_threshold must be in [0,1]");
    }
};

// Per-frame descriptor tracks. Column order is fixed:
// mfcc1..mfcc{n_mfcc}, zcr, voiceprob, f0.
struct LLDMatrix {
    Matrix values; // T x k
    std::vector<std::string> descriptor_names;
    std::size_t k = 0;
};

inline std::vector<std::string> descriptor_names(int n_mfcc) {
    std::vector<std::string> names;
    for (int i = 1; i <= n_mfcc; ++i) names.push_back("mfcc" + std::to_string(i));
    names.push_back("zcr");
    names.push_back("voiceprob");
    names.push_back("f0");
    return names;
}

// Fraction of adjacent sample pairs whose signs differ; zero counts as
// positive.
inline double zcr(std::span<const double> frame) {
    if (frame.size() < 2) throw BadConfig("zcr: frame length must be >= 2");
    std::size_t changes = 0;
    bool prev_neg = frame[0] < 0.0;
    for (std::size_t i = 1; i < frame.size(); ++i) {
        bool neg = frame[i] < 0.0;
        if (neg != prev_neg) ++changes;
        prev_neg = neg;
    }
    return static_cast<double>(changes) / static_cast<double>(frame.size() - 1);
}

// Precomputed tables for one (frame length, sample rate, config) triple.
// The free per-frame functions below construct one on the fly; extract_llds
// builds a single instance and reuses it across frames.
class LLDExtractor {
public:
    LLDExtractor(std::size_t frame_len, int rate, const LLDConfig& cfg)
        : n_(frame_len), rate_(rate), cfg_(cfg) {
        cfg.validate(rate);
        if (frame_len < 2) throw BadConfig("frame length must be >= 2");
        build_window();
        build_dft_tables();
        build_mel_bank();
    }

    std::size_t frame_len() const { return n_; }

    std::vector<double> mfcc(std::span<const double> frame) const {
        check_len(frame);
        std::vector<double> power = power_spectrum(frame);
        const int m = cfg_.n_mel_filters;
        std::vector<double> logmel(m);
        for (int f = 0; f < m; ++f) {
            double e = 0.0;
            for (std::size_t b = mel_first_[f]; b < mel_first_[f] + mel_weights_[f].size(); ++b)
                e += mel_weights_[f][b - mel_first_[f]] * power[b];
            logmel[f] = std::log(std::max(e, cfg_.log_floor));
        }
        // orthonormal DCT-II, coefficient 0 (pure log-energy) dropped
        std::vector<double> out(cfg_.n_mfcc);
        const double scale = std::sqrt(2.0 / m);
        for (int j = 1; j <= cfg_.n_mfcc; ++j) {
            double s = 0.0;
            for (int i = 0; i < m; ++i)
                s += logmel[i] * std::cos(kPi * j * (2 * i + 1) / (2.0 * m));
            out[j - 1] = scale * s;
        }
        return out;
    }

    struct Pitch {
        double voice_prob = 0.0;
        double f0 = 0.0;
    };

    // Voicing confidence and fundamental frequency from one normalized
    // autocorrelation pass over the pitch lag band.
    Pitch pitch(std::span<const double> frame) const {
        check_len(frame);
        Pitch p;
        const double n = static_cast<double>(n_);
        // frames shorter than one full period of the lowest searchable
        // pitch are unvoiced by convention
        if (n < static_cast<double>(rate_) / cfg_.f0_min_hz) return p;

        int tau_lo = std::max(1, static_cast<int>(std::ceil(rate_ / cfg_.f0_max_hz)));
        int tau_hi = std::min(static_cast<int>(n_) - 1,
                              static_cast<int>(std::floor(rate_ / cfg_.f0_min_hz)));
        if (tau_lo > tau_hi) return p;

        double mean = 0.0;
        for (double x : frame) mean += x;
        mean /= n;
        std::vector<double> x(n_);
        for (std::size_t t = 0; t < n_; ++t) x[t] = frame[t] - mean;
        double denom = 0.0;
        for (double v : x) denom += v * v;
        if (denom == 0.0) return p; // constant frame

        // unbiased normalized autocorrelation over [tau_lo-1, tau_hi+1]
        int lo = std::max(1, tau_lo - 1);
        int hi = std::min(static_cast<int>(n_) - 1, tau_hi + 1);
        std::vector<double> r(hi - lo + 1);
        for (int tau = lo; tau <= hi; ++tau) {
            double s = 0.0;
            for (std::size_t t = 0; t + tau < n_; ++t) s += x[t] * x[t + tau];
            r[tau - lo] = s * n / (static_cast<double>(n_ - tau) * denom);
        }
        auto rat = [&](int tau) { return r[tau - lo]; };

        double rmax = -1.0;
        for (int tau = tau_lo; tau <= tau_hi; ++tau) rmax = std::max(rmax, rat(tau));
        p.voice_prob = std::clamp(rmax, 0.0, 1.0);
        if (p.voice_prob < cfg_.voicing_threshold) return p;

        // smallest near-maximal peak wins: lag multiples of the true period
        // score almost identically, and the smallest one is the fundamental
        int best = -1;
        for (int tau = tau_lo; tau <= tau_hi; ++tau) {
            double left = tau - 1 >= lo ? rat(tau - 1) : -2.0;
            double right = tau + 1 <= hi ? rat(tau + 1) : -2.0;
            if (rat(tau) >= left && rat(tau) >= right && rat(tau) >= 0.9 * rmax) {
                best = tau;
                break;
            }
        }
        if (best < 0) {
            for (int tau = tau_lo; tau <= tau_hi; ++tau)
                if (rat(tau) == rmax) { best = tau; break; }
        }

        double refined = static_cast<double>(best);
        if (best - 1 >= lo && best + 1 <= hi) {
            double y0 = rat(best - 1), y1 = rat(best), y2 = rat(best + 1);
            double d = y0 - 2.0 * y1 + y2;
            if (d < 0.0) {
                double delta = 0.5 * (y0 - y2) / d;
                refined += std::clamp(delta, -0.5, 0.5);
            }
        }
        p.f0 = std::clamp(static_cast<double>(rate_) / refined, cfg_.f0_min_hz,
                          cfg_.f0_max_hz);
        return p;
    }

private:
    static constexpr double kPi = 3.141592653589793238462643383279502884;

    void check_len(std::span<const double> frame) const {
        if (frame.size() != n_)
            throw DimensionMismatch("frame length " + std::to_string(frame.size()) +
                                    " does not match extractor length " +
                                    std::to_string(n_));
    }

    void build_window() {
        window_.resize(n_);
        for (std::size_t t = 0; t < n_; ++t)
            window_[t] = 0.54 - 0.46 * std::cos(2.0 * kPi * t / (n_ - 1));
    }

    void build_dft_tables() {
        n_bins_ = n_ / 2 + 1;
        cos_.assign(n_bins_ * n_, 0.0);
        sin_.assign(n_bins_ * n_, 0.0);
        for (std::size_t b = 0; b < n_bins_; ++b) {
            for (std::size_t t = 0; t < n_; ++t) {
                double a = 2.0 * kPi * b * t / static_cast<double>(n_);
                cos_[b * n_ + t] = std::cos(a);
                sin_[b * n_ + t] = std::sin(a);
            }
        }
    }

    static double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
    static double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

    void build_mel_bank() {
        const int m = cfg_.n_mel_filters;
        const double fmin = cfg_.fmin_hz;
        const double fmax = cfg_.resolved_fmax(rate_);
        std::vector<double> edges(m + 2);
        double mel_lo = hz_to_mel(fmin), mel_hi = hz_to_mel(fmax);
        for (int i = 0; i < m + 2; ++i)
            edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (m + 1));

        mel_weights_.resize(m);
        mel_first_.resize(m);
        for (int f = 0; f < m; ++f) {
            double left = edges[f], center = edges[f + 1], right = edges[f + 2];
            std::size_t first = n_bins_;
            std::vector<double> ws;
            for (std::size_t b = 0; b < n_bins_; ++b) {
                double freq = static_cast<double>(b) * rate_ / static_cast<double>(n_);
                double w = 0.0;
                if (freq > left && freq < right) {
                    w = freq <= center ? (freq - left) / (center - left)
                                       : (right - freq) / (right - center);
                }
                if (w > 0.0) {
                    if (first == n_bins_) first = b;
                    ws.push_back(w);
                } else if (first != n_bins_) {
                    break;
                }
            }
            if (first == n_bins_) first = 0; // filter narrower than one bin
            mel_first_[f] = first;
            mel_weights_[f] = std::move(ws);
        }
    }

    // pre-emphasis -> Hamming window -> squared-magnitude DFT bins 0..N/2
    std::vector<double> power_spectrum(std::span<const double> frame) const {
        std::vector<double> y(n_);
        y[0] = frame[0] * (1.0 - kPreEmphasis);
        for (std::size_t t = 1; t < n_; ++t)
            y[t] = frame[t] - kPreEmphasis * frame[t - 1];
        for (std::size_t t = 0; t < n_; ++t) y[t] *= window_[t];

        std::vector<double> power(n_bins_);
        for (std::size_t b = 0; b < n_bins_; ++b) {
            const double* c = cos_.data() + b * n_;
            const double* s = sin_.data() + b * n_;
            double re = 0.0, im = 0.0;
            for (std::size_t t = 0; t < n_; ++t) {
                re += y[t] * c[t];
                im -= y[t] * s[t];
            }
            power[b] = re * re + im * im;
        }
        return power;
    }

    static constexpr double kPreEmphasis = 0.97;

    std::size_t n_;
    int rate_;
    LLDConfig cfg_;
    std::vector<double> window_;
    std::size_t n_bins_ = 0;
    std::vector<double> cos_, sin_;
    std::vector<std::vector<double>> mel_weights_;
    std::vector<std::size_t> mel_first_;
};

inline std::vector<double> mfcc(std::span<const double> frame, int rate,
                                const LLDConfig& cfg) {
    return LLDExtractor(frame.size(), rate, cfg).mfcc(frame);
}

inline double voice_prob(std::span<const double> frame, int rate, const LLDConfig& cfg) {
    return LLDExtractor(frame.size(), rate, cfg).pitch(frame).voice_prob;
}

inline double f0(std::span<const double> frame, int rate, const LLDConfig& cfg) {
    return LLDExtractor(frame.size(), rate, cfg).pitch(frame).f0;
}

// Runs all four descriptors over a frame sequence. Row t holds
// [mfcc1..mfccN, zcr, voiceprob, f0] for frame t; k = n_mfcc + 3.
inline LLDMatrix extract_llds(const FrameSequence& frames, const LLDConfig& cfg) {
    LLDExtractor ex(frames.window_len, frames.sample_rate, cfg);
    const std::size_t T = frames.frames.rows;
    const std::size_t k = static_cast<std::size_t>(cfg.n_mfcc) + 3;

    LLDMatrix out;
    out.k = k;
    out.descriptor_names = descriptor_names(cfg.n_mfcc);
    out.values = Matrix(T, k);
    for (std::size_t t = 0; t < T; ++t) {
        auto frame = frames.frames.row(t);
        std::vector<double> c = ex.mfcc(frame);
        auto p = ex.pitch(frame);
        auto row = out.values.row(t);
        std::copy(c.begin(), c.end(), row.begin());
        row[k - 3] = zcr(frame);
        row[k - 2] = p.voice_prob;
        row[k - 1] = p.f0;
    }
    return out;
}

// Debug dump, one row per frame. Full precision so other implementations
// can diff against it.
inline void write_lld_csv(const LLDMatrix& llds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "frame_index";
    for (const auto& n : llds.descriptor_names) out << ',' << n;
    out << '\n';
    char buf[40];
    for (std::size_t t = 0; t < llds.values.rows; ++t) {
        out << t;
        for (std::size_t j = 0; j < llds.values.cols; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", llds.values(t, j));
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

} // namespace sesm
