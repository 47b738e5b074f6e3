#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sfd/decompose.hpp"

namespace sfd {

//----( filter evaluation )----

struct FilterSample {
    double value = 0.0;
    bool clamped = false; // position fell outside the occupied-bin range
};

// Piecewise-linear interpolation of the filter curve at fractional bin
// position x; gaps between occupied bins are bridged linearly, positions
// outside the range clamp to the nearest end value (flagged).
FilterSample filter_at(const DecompositionModel& model, double x);

//----( prediction )----

struct PredictedPartial {
    int harmonic = 0;
    double log_mag = 0.0;
    double linear_mag = 0.0;
    bool clamped = false;
};

struct PredictedSpectrum {
    double f0_hz = 0.0;
    std::vector<PredictedPartial> partials; // harmonics contiguous from 1
};

// Evaluates the model at an arbitrary fundamental. Harmonic j of target
// f0 sits at fractional bin x_j = partial_offset(j) + t with
// t = 12*log2(f0 / f0_lowest) + 1, so grid-aligned targets land exactly
// on the fitted bins. log_mag = amplitude_log + p_j + filter(x_j).
// partial_count must not exceed the model's K (excitation is unknown
// beyond it).
PredictedSpectrum predict_spectrum(const DecompositionModel& model,
                                   double target_f0_hz, int partial_count,
                                   double amplitude_log = 0.0);

//----( deconvolution )----

struct DeconvolvedNote {
    std::vector<int> harmonics;          // usable partials, ascending
    std::vector<double> log_excitation;  // e_j = ln(mag) - filter(x_j) - offset
    std::vector<std::uint8_t> clamped;   // filter was evaluated off-range
    double offset = 0.0;                 // fitted alignment constant (ln units)
};

// Removes the model's filter from a measured note, leaving per-partial
// log excitation estimates. Partials at or below floor_rel * (note max
// magnitude) are dropped. With fit_offset, the weighted LS constant that
// best aligns e to the model's excitation (weights per the model's
// weighting mode, over usable j <= K) is subtracted and reported.
DeconvolvedNote deconvolve_note(const DecompositionModel& model,
                                const NoteSpectrum& note, bool fit_offset,
                                double floor_rel = 1e-5);

//----( hybrids )----

// Composite model: excitation (and K) from one model, filter curve with
// its frequency anchor (f0_lowest, bins, S) from the other; note scaling
// zeroed; name = "<A>x<B>". Prediction on the composite therefore reads
// the filter on the donor's own absolute frequency axis.
DecompositionModel hybridize(const DecompositionModel& excitation_from,
                             const DecompositionModel& filter_from);

//----( rendering )----

struct RenderStats {
    long long sample_count = 0;
    int kept_partials = 0;
    int dropped_partials = 0; // above Nyquist
    double peak_amplitude = 0.0; // pre-normalization
};

// Additive resynthesis x(t) = sum_j m_j * sin(2*pi*f0*j*t), peak-normalized
// to 0.9 full scale, written as mono 16-bit PCM RIFF/WAV. Partials above
// Nyquist are dropped (counted in the stats); dropping all of them is the
// error "empty spectrum after Nyquist pruning".
RenderStats render_wav(const PredictedSpectrum& spectrum, double seconds,
                       int sample_rate_hz, const std::filesystem::path& path);

//----( spectrum CSV )----

// Header "j,log_mag,linear_mag,clamped"; one row per partial.
void write_spectrum_csv(const PredictedSpectrum& spectrum, std::ostream& out);

// Inverse of write_spectrum_csv. The file carries no fundamental, so the
// caller supplies it.
PredictedSpectrum parse_spectrum_csv(std::istream& in, const std::string& origin,
                                     double f0_hz);

}  // namespace sfd
