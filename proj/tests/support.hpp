#pragma once
// Shared test machinery: a fixed, portable RNG (so every toolchain draws
// the same stream), synthetic series builders, a WAV reader + Goertzel
// probe, and a harness that drives the CLI binary named by $SFD_CLI.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "sfd/decompose.hpp"
#include "sfd/grid.hpp"
#include "sfd/spectra.hpp"

namespace testsupport {

//----( deterministic portable RNG: splitmix64-seeded xoshiro256++ )----

struct Rng {
    std::array<std::uint64_t, 4> s{};
    bool have_spare = false;
    double spare = 0.0;

    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s) {
            x += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            w = z ^ (z >> 31);
        }
    }

    static std::uint64_t rotl(std::uint64_t v, int k) {
        return (v << k) | (v >> (64 - k));
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    double uniform() { return double(next() >> 11) * 0x1.0p-53; } // [0,1)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    int uniform_int(int lo, int hi) { // inclusive
        return lo + int(next() % std::uint64_t(hi - lo + 1));
    }
    bool bernoulli(double prob) { return uniform() < prob; }

    double normal() { // Box-Muller, cached spare
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586477 * u2;
        spare = mag * std::sin(ang);
        have_spare = true;
        return mag * std::cos(ang);
    }
};

//----( pitch helpers )----

inline std::string index_to_name(int idx) {
    static const char* semis[12] = {"c", "c#", "d",  "d#", "e",  "f",
                                    "f#", "g",  "g#", "a",  "a#", "b"};
    return std::string(semis[idx % 12]) + std::to_string(idx / 12);
}

//----( synthetic series )----

// Ground-truth parameters of one synthetic instrument; r is indexed by
// absolute bin value (size span+1, slot 0 unused).
struct ModelDraw {
    int S = 0, K = 0;
    std::vector<double> a, p, r_by_bin;
};

inline int full_span(int S, int K) { return sfd::partial_offset(K) + S; }

inline ModelDraw draw_white_model(Rng& rng, int S, int K) {
    ModelDraw d;
    d.S = S;
    d.K = K;
    for (int i = 0; i < S; ++i) d.a.push_back(rng.uniform(-1.0, 1.0));
    for (int j = 0; j < K; ++j) d.p.push_back(rng.uniform(-1.0, 1.0));
    d.r_by_bin.assign(std::size_t(full_span(S, K)) + 1, 0.0);
    for (std::size_t n = 1; n < d.r_by_bin.size(); ++n)
        d.r_by_bin[n] = rng.uniform(-1.0, 1.0);
    return d;
}

// Plausible-instrument shapes: decaying excitation with ripple, a smooth
// low-order cosine formant curve, mild per-note level spread. These keep
// the alternating solver in its fast regime, like real spectra do.
inline ModelDraw draw_instrument_model(Rng& rng, int S, int K) {
    ModelDraw d;
    d.S = S;
    d.K = K;
    for (int i = 0; i < S; ++i) d.a.push_back(rng.uniform(-0.8, 0.8));
    const double beta = rng.uniform(0.3, 1.5);
    for (int j = 1; j <= K; ++j)
        d.p.push_back(-beta * std::log(double(j)) + rng.uniform(-0.15, 0.15));
    const int span = full_span(S, K);
    double amp[3], phase[3];
    for (int k = 0; k < 3; ++k) {
        amp[k] = rng.uniform(0.1, 0.4) / double(k + 1);
        phase[k] = rng.uniform(0.0, 6.283185307179586477);
    }
    d.r_by_bin.assign(std::size_t(span) + 1, 0.0);
    for (int n = 1; n <= span; ++n) {
        double v = 0.0;
        for (int k = 0; k < 3; ++k)
            v += amp[k] * std::cos(6.283185307179586477 * (k + 1) * n / double(span) +
                                   phase[k]);
        d.r_by_bin[std::size_t(n)] = v;
    }
    return d;
}

// Chromatic series with magnitudes exactly exp(a_i + p_j + r_n).
inline sfd::InstrumentSeries series_from_params(const ModelDraw& d,
                                                const std::string& name,
                                                int start_index = 24 /* c2 */) {
    sfd::InstrumentSeries series;
    series.name = name;
    for (int i = 1; i <= d.S; ++i) {
        sfd::NoteSpectrum note;
        note.note_name = index_to_name(start_index + i - 1);
        note.fundamental_hz = sfd::note_index_to_frequency(start_index + i - 1);
        for (int j = 1; j <= d.K; ++j) {
            const int n = sfd::partial_offset(j) + i;
            note.partials.push_back(
                {j, std::exp(d.a[i - 1] + d.p[j - 1] + d.r_by_bin[std::size_t(n)]),
                 std::nullopt});
        }
        series.notes.push_back(std::move(note));
    }
    series.f0_lowest_hz = series.notes.front().fundamental_hz;
    return series;
}

// 1% multiplicative magnitude noise (sigma in linear units), clipped so
// the magnitude stays positive.
inline void add_noise(sfd::InstrumentSeries& series, Rng& rng, double sigma) {
    for (auto& note : series.notes)
        for (auto& partial : note.partials) {
            double eps = sigma * rng.normal();
            if (eps < -0.4) eps = -0.4;
            partial.magnitude *= (1.0 + eps);
        }
}

// Chromatic series tracing a per-note partial-count profile, magnitudes 1.
inline sfd::InstrumentSeries counts_series(const std::string& name, int start_index,
                                           const std::vector<int>& counts) {
    sfd::InstrumentSeries series;
    series.name = name;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        sfd::NoteSpectrum note;
        note.note_name = index_to_name(start_index + int(i));
        note.fundamental_hz = sfd::note_index_to_frequency(start_index + int(i));
        for (int j = 1; j <= counts[i]; ++j)
            note.partials.push_back({j, 1.0, std::nullopt});
        series.notes.push_back(std::move(note));
    }
    series.f0_lowest_hz = series.notes.front().fundamental_hz;
    return series;
}

// The draw's parameters poured into a model and moved to canonical gauge,
// for comparison against a solver result on the same system.
inline sfd::DecompositionModel truth_model(const ModelDraw& d,
                                           const sfd::DesignSystem& sys) {
    sfd::DecompositionModel m;
    m.name = sys.name;
    m.f0_lowest_hz = sys.f0_lowest_hz;
    m.note_count = sys.note_count;
    m.partial_count = sys.partial_count;
    m.weighting = sys.weighting;
    m.excitation = d.p;
    m.note_scale = d.a;
    m.filter_bins = sys.occupied;
    for (int n : sys.occupied) m.filter_values.push_back(d.r_by_bin[std::size_t(n)]);
    sfd::canonicalize(m, sys);
    return m;
}

inline double max_param_diff(const sfd::DecompositionModel& x,
                             const sfd::DecompositionModel& y) {
    double worst = 0.0;
    auto scan = [&](const std::vector<double>& u, const std::vector<double>& v) {
        if (u.size() != v.size()) {
            worst = 1e300;
            return;
        }
        for (std::size_t k = 0; k < u.size(); ++k)
            worst = std::max(worst, std::abs(u[k] - v[k]));
    };
    scan(x.excitation, y.excitation);
    scan(x.note_scale, y.note_scale);
    scan(x.filter_values, y.filter_values);
    return worst;
}

//----( filesystem scratch space )----

struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("sfd_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path file(const std::string& name) const { return path / name; }
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw std::runtime_error("write failed: " + p.string());
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("read failed: " + p.string());
    std::string all((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    return all;
}

//----( CLI harness )----

struct CliResult {
    int exit_code = -1;
    std::string output; // stdout and stderr merged
};

inline CliResult run_cli(const std::string& args,
                         const std::filesystem::path& chdir = {}) {
    const char* bin = std::getenv("SFD_CLI");
    if (!bin) throw std::runtime_error("SFD_CLI is not set (run through ctest)");
    std::string cmd;
    if (!chdir.empty()) cmd += "cd '" + chdir.string() + "' && ";
    cmd += "'" + std::string(bin) + "' " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw std::runtime_error("popen failed");
    CliResult r;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, got);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

//----( WAV probing )----

struct WavData {
    int rate = 0;
    std::vector<double> samples; // scaled to [-1, 1)
};

inline std::uint32_t le32(const std::string& s, std::size_t at) {
    return std::uint32_t(std::uint8_t(s[at])) |
           std::uint32_t(std::uint8_t(s[at + 1])) << 8 |
           std::uint32_t(std::uint8_t(s[at + 2])) << 16 |
           std::uint32_t(std::uint8_t(s[at + 3])) << 24;
}

inline std::uint16_t le16(const std::string& s, std::size_t at) {
    return std::uint16_t(std::uint8_t(s[at]) | std::uint8_t(s[at + 1]) << 8);
}

// Minimal reader for exactly the files render_wav produces (PCM16 mono,
// canonical 44-byte header).
inline WavData read_wav(const std::filesystem::path& p) {
    const std::string raw = read_file(p);
    if (raw.size() < 44 || raw.compare(0, 4, "RIFF") != 0 ||
        raw.compare(8, 4, "WAVE") != 0 || raw.compare(12, 4, "fmt ") != 0 ||
        raw.compare(36, 4, "data") != 0)
        throw std::runtime_error("not a canonical PCM WAV: " + p.string());
    if (le16(raw, 20) != 1 || le16(raw, 22) != 1 || le16(raw, 34) != 16)
        throw std::runtime_error("unexpected WAV encoding: " + p.string());
    WavData w;
    w.rate = int(le32(raw, 24));
    const std::uint32_t bytes = le32(raw, 40);
    if (44 + bytes > raw.size()) throw std::runtime_error("truncated WAV data");
    for (std::uint32_t k = 0; k + 1 < bytes; k += 2) {
        const std::int16_t v = std::int16_t(le16(raw, 44 + k));
        w.samples.push_back(double(v) / 32768.0);
    }
    return w;
}

// Magnitude of the length-N DFT of x at frequency f, via the Goertzel
// recursion; returns |X(f)| (unnormalized).
inline double goertzel_mag(const std::vector<double>& x, double freq_hz, int rate) {
    const double w = 6.283185307179586477 * freq_hz / double(rate);
    const double coeff = 2.0 * std::cos(w);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (double v : x) {
        s0 = v + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    const double re = s1 - s2 * std::cos(w);
    const double im = s2 * std::sin(w);
    return std::sqrt(re * re + im * im);
}

}  // namespace testsupport
