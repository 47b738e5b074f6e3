#include "sfd/apply.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sfd/error.hpp"
#include "sfd/format.hpp"

namespace sfd {

//----( filter evaluation )----

FilterSample filter_at(const DecompositionModel& m, double x) {
    if (m.filter_bins.empty())
        throw ValidationError("model has no filter bins");
    if (!std::isfinite(x))
        throw ValidationError("filter position must be finite");
    const auto& bins = m.filter_bins;
    const auto& vals = m.filter_values;
    if (x <= bins.front()) return {vals.front(), x < bins.front()};
    if (x >= bins.back()) return {vals.back(), x > bins.back()};
    // first knot strictly above x; x is interior so both sides exist
    auto hi = std::upper_bound(bins.begin(), bins.end(), x);
    std::size_t h = std::size_t(hi - bins.begin());
    std::size_t l = h - 1;
    if (x == double(bins[l])) return {vals[l], false};
    double t = (x - bins[l]) / double(bins[h] - bins[l]);
    return {vals[l] + t * (vals[h] - vals[l]), false};
}

//----( prediction )----

namespace {

// fractional bin of harmonic j at target fundamental f0: the quantized
// harmonic offset plus the continuous note position on the semitone axis
double note_position(const DecompositionModel& m, double f0_hz) {
    return 12.0 * std::log2(f0_hz / m.f0_lowest_hz) + 1.0;
}

}  // namespace

PredictedSpectrum predict_spectrum(const DecompositionModel& m, double target_f0_hz,
                                   int partial_count, double amplitude_log) {
    if (!(target_f0_hz > 0.0) || !std::isfinite(target_f0_hz))
        throw ValidationError("target fundamental must be positive and finite");
    if (partial_count < 1)
        throw ValidationError("partial count must be >= 1");
    if (partial_count > m.partial_count)
        throw ValidationError("requested " + std::to_string(partial_count) +
                              " partials but the excitation is only fitted for " +
                              std::to_string(m.partial_count));
    PredictedSpectrum spec;
    spec.f0_hz = target_f0_hz;
    const double t = note_position(m, target_f0_hz);
    for (int j = 1; j <= partial_count; ++j) {
        const double x = partial_offset(j) + t;
        const FilterSample f = filter_at(m, x);
        PredictedPartial pp;
        pp.harmonic = j;
        pp.log_mag = amplitude_log + m.excitation[std::size_t(j - 1)] + f.value;
        pp.linear_mag = std::exp(pp.log_mag);
        pp.clamped = f.clamped;
        spec.partials.push_back(pp);
    }
    return spec;
}

//----( deconvolution )----

DeconvolvedNote deconvolve_note(const DecompositionModel& m, const NoteSpectrum& note,
                                bool fit_offset, double floor_rel) {
    if (!(note.fundamental_hz > 0.0) || !std::isfinite(note.fundamental_hz))
        throw ValidationError("note '" + note.note_name +
                              "': fundamental must be positive and finite");
    if (!(floor_rel > 0.0) || !(floor_rel < 1.0))
        throw ValidationError("magnitude floor must satisfy 0 < floor_rel < 1");
    double max_mag = 0.0;
    for (const PartialEntry& p : note.partials)
        max_mag = std::max(max_mag, p.magnitude);
    const double floor_abs = floor_rel * max_mag;

    DeconvolvedNote out;
    std::vector<double> usable_mag;
    const double t = note_position(m, note.fundamental_hz);
    for (const PartialEntry& p : note.partials) {
        if (!(p.magnitude > floor_abs)) continue;
        const FilterSample f = filter_at(m, partial_offset(p.harmonic) + t);
        out.harmonics.push_back(p.harmonic);
        out.log_excitation.push_back(std::log(p.magnitude) - f.value);
        out.clamped.push_back(f.clamped ? 1 : 0);
        usable_mag.push_back(p.magnitude);
    }
    if (out.harmonics.empty())
        throw ValidationError("note '" + note.note_name + "': zero usable partials");

    if (fit_offset) {
        // weighted LS constant aligning e to the model's excitation over
        // the harmonics the model knows (j <= K)
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < out.harmonics.size(); ++k) {
            const int j = out.harmonics[k];
            if (j > m.partial_count) continue;
            double w = 1.0;
            if (m.weighting == Weighting::magnitude) w = usable_mag[k];
            else if (m.weighting == Weighting::power) w = usable_mag[k] * usable_mag[k];
            num += w * (out.log_excitation[k] - m.excitation[std::size_t(j - 1)]);
            den += w;
        }
        if (den > 0.0) {
            out.offset = num / den;
            for (double& e : out.log_excitation) e -= out.offset;
        }
    }
    return out;
}

//----( hybrids )----

DecompositionModel hybridize(const DecompositionModel& excitation_from,
                             const DecompositionModel& filter_from) {
    DecompositionModel hybrid;
    hybrid.name = excitation_from.name + "×" + filter_from.name;
    hybrid.f0_lowest_hz = filter_from.f0_lowest_hz;
    hybrid.note_count = filter_from.note_count;
    hybrid.partial_count = excitation_from.partial_count;
    hybrid.weighting = excitation_from.weighting;
    hybrid.excitation = excitation_from.excitation;
    hybrid.note_scale.assign(std::size_t(filter_from.note_count), 0.0);
    hybrid.filter_bins = filter_from.filter_bins;
    hybrid.filter_values = filter_from.filter_values;
    hybrid.iterations_used = 0;
    hybrid.final_metric = 0.0;
    hybrid.converged = true;
    hybrid.filter_detrended = filter_from.filter_detrended;
    return hybrid;
}

//----( rendering )----

namespace {

void put_u16(std::string& s, std::uint16_t v) {
    s += char(v & 0xff);
    s += char((v >> 8) & 0xff);
}

void put_u32(std::string& s, std::uint32_t v) {
    s += char(v & 0xff);
    s += char((v >> 8) & 0xff);
    s += char((v >> 16) & 0xff);
    s += char((v >> 24) & 0xff);
}

}  // namespace

RenderStats render_wav(const PredictedSpectrum& spectrum, double seconds,
                       int sample_rate_hz, const std::filesystem::path& path) {
    if (spectrum.partials.empty())
        throw ValidationError("empty spectrum");
    if (!(seconds > 0.0) || !std::isfinite(seconds))
        throw ValidationError("duration must be positive");
    if (sample_rate_hz < 1)
        throw ValidationError("sample rate must be >= 1 Hz");
    if (!(spectrum.f0_hz > 0.0))
        throw ValidationError("spectrum fundamental must be positive");

    RenderStats stats;
    std::vector<const PredictedPartial*> kept;
    for (const PredictedPartial& p : spectrum.partials) {
        if (2.0 * spectrum.f0_hz * p.harmonic <= double(sample_rate_hz))
            kept.push_back(&p);
        else
            ++stats.dropped_partials;
    }
    stats.kept_partials = int(kept.size());
    if (kept.empty())
        throw ValidationError("empty spectrum after Nyquist pruning");

    const long long n_samples = llround(seconds * sample_rate_hz);
    if (n_samples < 1)
        throw ValidationError("duration too short for even one sample");
    stats.sample_count = n_samples;
    if (n_samples > (1LL << 31) / 2 - 64)
        throw ValidationError("rendered file would exceed the WAV size limit");

    std::vector<double> buf(std::size_t(n_samples), 0.0);
    const double two_pi = 2.0 * std::numbers::pi;
    for (const PredictedPartial* p : kept) {
        const double omega = two_pi * spectrum.f0_hz * p->harmonic;
        for (long long s = 0; s < n_samples; ++s)
            buf[std::size_t(s)] += p->linear_mag * std::sin(omega * (double(s) / sample_rate_hz));
    }
    double peak = 0.0;
    for (double v : buf) peak = std::max(peak, std::abs(v));
    stats.peak_amplitude = peak;
    const double scale = peak > 0.0 ? 0.9 * 32767.0 / peak : 0.0;

    std::string body;
    body.reserve(44 + std::size_t(n_samples) * 2);
    const std::uint32_t data_bytes = std::uint32_t(n_samples) * 2;
    body += "RIFF";
    put_u32(body, 36 + data_bytes);
    body += "WAVE";
    body += "fmt ";
    put_u32(body, 16);
    put_u16(body, 1); // PCM
    put_u16(body, 1); // mono
    put_u32(body, std::uint32_t(sample_rate_hz));
    put_u32(body, std::uint32_t(sample_rate_hz) * 2); // byte rate
    put_u16(body, 2);  // block align
    put_u16(body, 16); // bits per sample
    body += "data";
    put_u32(body, data_bytes);
    for (long long s = 0; s < n_samples; ++s) {
        long v = lrint(buf[std::size_t(s)] * scale);
        put_u16(body, std::uint16_t(std::int16_t(v)));
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path.string() + " for writing");
    out.write(body.data(), std::streamsize(body.size()));
    out.flush();
    if (!out) throw ParseError("failed writing " + path.string());
    return stats;
}

//----( spectrum CSV )----

void write_spectrum_csv(const PredictedSpectrum& spectrum, std::ostream& out) {
    out << "j,log_mag,linear_mag,clamped\n";
    for (const PredictedPartial& p : spectrum.partials)
        out << p.harmonic << "," << format_sci(p.log_mag) << ","
            << format_sci(p.linear_mag) << "," << (p.clamped ? 1 : 0) << "\n";
}

PredictedSpectrum parse_spectrum_csv(std::istream& in, const std::string& origin,
                                     double f0_hz) {
    if (!(f0_hz > 0.0) || !std::isfinite(f0_hz))
        throw ValidationError("spectrum fundamental must be positive and finite");
    std::string line;
    if (!std::getline(in, line))
        throw ParseError(origin + ": empty file");
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line != "j,log_mag,linear_mag,clamped")
        throw ParseError(origin + ":1: expected header \"j,log_mag,linear_mag,clamped\"");

    PredictedSpectrum spec;
    spec.f0_hz = f0_hz;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        std::istringstream iss(line);
        PredictedPartial p;
        char c1 = 0, c2 = 0, c3 = 0;
        int clamped = 0;
        if (!(iss >> p.harmonic >> c1 >> p.log_mag >> c2 >> p.linear_mag >> c3 >> clamped) ||
            c1 != ',' || c2 != ',' || c3 != ',' || (clamped != 0 && clamped != 1))
            throw ParseError(origin + ":" + std::to_string(lineno) + ": malformed row");
        std::string extra;
        if (iss >> extra)
            throw ParseError(origin + ":" + std::to_string(lineno) + ": trailing fields");
        if (p.harmonic != int(spec.partials.size()) + 1)
            throw ValidationError(origin + ":" + std::to_string(lineno) +
                                  ": harmonics must run contiguously from 1");
        if (!std::isfinite(p.log_mag) || !std::isfinite(p.linear_mag) || p.linear_mag < 0.0)
            throw ValidationError(origin + ":" + std::to_string(lineno) +
                                  ": magnitudes must be finite (linear >= 0)");
        p.clamped = clamped != 0;
        spec.partials.push_back(p);
    }
    if (spec.partials.empty())
        throw ValidationError(origin + ": no partial rows");
    return spec;
}

}  // namespace sfd
