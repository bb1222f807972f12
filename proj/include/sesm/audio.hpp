#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sesm/error.hpp"
#include "sesm/matrix.hpp"

namespace sesm {

// Decoded mono PCM audio for one utterance. Samples live in [-1, +1].
struct Waveform {
    std::vector<double> samples;
    int sample_rate = 0;
    std::string utterance_id;
};

// One labeled speech segment. spontaneity in {0,1}, emotion in {0,1,2,3}
// (0=anger, 1=joy, 2=neutral, 3=sadness).
struct Utterance {
    std::string utterance_id;
    std::string wav_path;
    std::string session_id;
    std::string dialog_id;
    std::string speaker_id;
    int spontaneity = 0;
    int emotion = 0;
};

// Utterances in manifest order plus the dialog grouping. All utterances of
// a dialog share one spontaneity label; rows of a dialog appear in
// recording order.
struct Corpus {
    std::vector<Utterance> utterances;                 // manifest order
    std::vector<std::string> dialog_ids;               // first-appearance order
    std::vector<std::vector<std::size_t>> dialog_members; // utterance indices per dialog
    std::vector<std::size_t> dialog_index;             // per utterance

    std::size_t size() const { return utterances.size(); }

    void rebuild_dialogs() {
        dialog_ids.clear();
        dialog_members.clear();
        dialog_index.assign(utterances.size(), 0);
        std::map<std::string, std::size_t> seen;
        for (std::size_t i = 0; i < utterances.size(); ++i) {
            const std::string& d = utterances[i].dialog_id;
            auto it = seen.find(d);
            std::size_t di;
            if (it == seen.end()) {
                di = dialog_ids.size();
                seen.emplace(d, di);
                dialog_ids.push_back(d);
                dialog_members.emplace_back();
            } else {
                di = it->second;
            }
            dialog_members[di].push_back(i);
            dialog_index[i] = di;
        }
    }
};

// Overlapping analysis frames of one waveform, one frame per row.
struct FrameSequence {
    Matrix frames;          // T x window_len
    std::size_t window_len = 0;
    std::size_t stride = 0;
    int sample_rate = 0;
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedWav("cannot open file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

} // namespace detail

// Reads a RIFF/WAVE file. Accepted content: PCM (format code 1), 16-bit,
// mono, any sample rate. Integer samples are divided by 32768 so the
// result lies in [-1, +1).
inline Waveform load_wav(const std::string& path, const std::string& utterance_id = "") {
    using namespace detail;
    std::vector<unsigned char> b = read_file_bytes(path);
    if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
        std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
        throw MalformedWav(path + ": not a RIFF/WAVE file");
    }

    bool have_fmt = false;
    std::uint16_t format_code = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t data_off = 0, data_len = 0;
    bool have_data = false;

    std::size_t pos = 12;
    while (pos + 8 <= b.size()) {
        char id[5] = {0};
        std::memcpy(id, b.data() + pos, 4);
        std::uint32_t chunk_len = read_u32le(b.data() + pos + 4);
        std::size_t body = pos + 8;
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (body + 16 > b.size()) throw MalformedWav(path + ": truncated fmt chunk");
            format_code = read_u16le(b.data() + body);
            channels = read_u16le(b.data() + body + 2);
            rate = read_u32le(b.data() + body + 4);
            bits = read_u16le(b.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = body;
            data_len = chunk_len;
            have_data = true;
            if (body + data_len > b.size()) {
                throw MalformedWav(path + ": data chunk truncated (declared " +
                                   std::to_string(data_len) + " bytes, file has " +
                                   std::to_string(b.size() - body) + ")");
            }
        }
        pos = body + chunk_len + (chunk_len & 1); // chunks are word-aligned
    }

    if (!have_fmt) throw MalformedWav(path + ": missing fmt chunk");
    if (!have_data) throw MalformedWav(path + ": missing data chunk");
    if (format_code != 1)
        throw UnsupportedFormat(path + ": format_code=" + std::to_string(format_code));
    if (channels != 1)
        throw UnsupportedFormat(path + ": channels=" + std::to_string(channels));
    if (bits != 16)
        throw UnsupportedFormat(path + ": bits_per_sample=" + std::to_string(bits));
    if (rate == 0) throw MalformedWav(path + ": sample rate is 0");
    if (data_len < 2) throw MalformedWav(path + ": empty data chunk");

    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    w.utterance_id = utterance_id;
    std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto u = static_cast<std::uint16_t>(detail::read_u16le(b.data() + data_off + 2 * i));
        auto s = static_cast<std::int16_t>(u);
        w.samples[i] = static_cast<double>(s) / 32768.0;
    }
    return w;
}

// Writes a 16-bit mono PCM WAV. Samples are quantized with round-to-nearest
// and clamped to the int16 range, so a load_wav round trip reproduces each
// sample to within 1/32768.
inline void write_wav(const Waveform& w, const std::string& path) {
    if (w.samples.empty()) throw BadConfig("write_wav: empty waveform");
    if (w.sample_rate <= 0) throw BadConfig("write_wav: sample_rate must be > 0");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);

    auto put_u32 = [&](std::uint32_t v) {
        unsigned char p[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(p), 4);
    };
    auto put_u16 = [&](std::uint16_t v) {
        unsigned char p[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        out.write(reinterpret_cast<const char*>(p), 2);
    };

    std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
    std::uint32_t rate = static_cast<std::uint32_t>(w.sample_rate);
    out.write("RIFF", 4);
    put_u32(36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(rate);
    put_u32(rate * 2); // byte rate
    put_u16(2);  // block align
    put_u16(16); // bits
    out.write("data", 4);
    put_u32(data_len);
    for (double x : w.samples) {
        long q = std::lround(x * 32768.0);
        q = std::clamp(q, -32768L, 32767L);
        put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
    if (!out) throw IoError("write failed: " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

// Label fields must be canonical single digits so that a parse/serialize
// round trip is byte-identical.
inline int parse_label(const std::string& s, int lo, int hi, const char* what,
                       std::size_t row) {
    if (s.size() != 1 || s[0] < '0' || s[0] > '9') {
        throw ManifestError("row " + std::to_string(row) + ": " + what +
                            " must be a single digit, got '" + s + "'");
    }
    int v = s[0] - '0';
    if (v < lo || v > hi) {
        throw ManifestError("row " + std::to_string(row) + ": " + what +
                            " out of range: " + s);
    }
    return v;
}

} // namespace detail

inline constexpr const char* kManifestHeader =
    "utterance_id,wav_path,session_id,dialog_id,speaker_id,spontaneity,emotion";

// Parses a corpus manifest (CSV, header required). Relative wav paths are
// kept as written; callers resolve them against the manifest's directory.
inline Corpus parse_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot open manifest: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ManifestError(path + ": empty manifest");
    if (detail::strip_cr(line) != kManifestHeader) {
        throw ManifestError(path + ": row 1: bad header, expected '" +
                            std::string(kManifestHeader) + "'");
    }

    Corpus corpus;
    std::map<std::string, std::size_t> seen_ids;
    std::map<std::string, int> dialog_spont;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        std::vector<std::string> f = detail::split_csv_row(line);
        if (f.size() != 7) {
            throw ManifestError("row " + std::to_string(row) + ": expected 7 columns, got " +
                                std::to_string(f.size()));
        }
        Utterance u;
        u.utterance_id = f[0];
        u.wav_path = f[1];
        u.session_id = f[2];
        u.dialog_id = f[3];
        u.speaker_id = f[4];
        u.spontaneity = detail::parse_label(f[5], 0, 1, "spontaneity", row);
        u.emotion = detail::parse_label(f[6], 0, 3, "emotion", row);
        if (u.utterance_id.empty())
            throw ManifestError("row " + std::to_string(row) + ": missing utterance_id");
        if (u.wav_path.empty())
            throw ManifestError("row " + std::to_string(row) + ": missing wav_path");
        if (u.dialog_id.empty())
            throw ManifestError("row " + std::to_string(row) + ": missing dialog_id");
        if (!seen_ids.emplace(u.utterance_id, row).second) {
            throw ManifestError("row " + std::to_string(row) + ": duplicate utterance_id '" +
                                u.utterance_id + "'");
        }
        auto it = dialog_spont.find(u.dialog_id);
        if (it == dialog_spont.end()) {
            dialog_spont.emplace(u.dialog_id, u.spontaneity);
        } else if (it->second != u.spontaneity) {
            throw InconsistentDialog("row " + std::to_string(row) + ": dialog '" +
                                     u.dialog_id + "' mixes spontaneity labels");
        }
        corpus.utterances.push_back(std::move(u));
    }
    if (corpus.utterances.empty()) throw ManifestError(path + ": no data rows");
    corpus.rebuild_dialogs();
    return corpus;
}

inline void write_manifest(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << kManifestHeader << '\n';
    for (const Utterance& u : corpus.utterances) {
        out << u.utterance_id << ',' << u.wav_path << ',' << u.session_id << ','
            << u.dialog_id << ',' << u.speaker_id << ',' << u.spontaneity << ','
            << u.emotion << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

// Slices a waveform into overlapping frames of length w with stride m.
// Trailing samples that do not fill a window are dropped; a signal shorter
// than one window yields a single zero-padded frame.
inline FrameSequence frame_signal(const Waveform& wave, std::size_t w, std::size_t m) {
    if (w == 0 || m == 0) throw BadConfig("frame_signal: window and stride must be > 0");
    const std::size_t L = wave.samples.size();
    FrameSequence fs;
    fs.window_len = w;
    fs.stride = m;
    fs.sample_rate = wave.sample_rate;
    if (L < w) {
        fs.frames = Matrix(1, w, 0.0);
        std::copy(wave.samples.begin(), wave.samples.end(), fs.frames.row(0).begin());
        return fs;
    }
    const std::size_t T = (L - w) / m + 1;
    fs.frames = Matrix(T, w);
    for (std::size_t t = 0; t < T; ++t) {
        const double* src = wave.samples.data() + t * m;
        std::copy(src, src + w, fs.frames.row(t).begin());
    }
    return fs;
}

} // namespace sesm
