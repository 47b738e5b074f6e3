#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sfd {

//----( domain types )----

// One steady-state partial: harmonic index j (1 = fundamental), linear
// magnitude, optional phase in radians (carried through, never analyzed).
struct PartialEntry {
    int harmonic = 0;
    double magnitude = 0.0;
    std::optional<double> phase;
};

// A single note: fundamental in Hz plus partials at harmonics 1..len.
struct NoteSpectrum {
    std::string note_name;
    double fundamental_hz = 0.0;
    std::vector<PartialEntry> partials;
};

// A chromatic series of notes for one instrument, sorted ascending by pitch.
// Consecutive fundamentals must be one equal-tempered semitone apart
// (|12*log2(f2/f1) - 1| <= 0.01).
struct InstrumentSeries {
    std::string name;
    double f0_lowest_hz = 0.0;
    std::vector<NoteSpectrum> notes;
};

enum class AmplitudeUnit { decibel, linear };

// Prefix rule trading series length S against uniform partial count K:
// notes beyond the first min_samples are kept only while their partial
// count stays >= min_partials; K = smallest count among kept notes.
struct TruncationPolicy {
    int min_samples = 16;
    int min_partials = 16;
};

// Dense S x K linear-magnitude grid with a usability mask. Entries at or
// below the construction-time magnitude floor are masked out entirely.
struct UniformSeries {
    std::string name;
    double f0_lowest_hz = 0.0;
    int note_count = 0;    // S
    int partial_count = 0; // K
    std::vector<double> magnitude;   // row-major S x K
    std::vector<std::uint8_t> mask;  // same layout, 0 = unusable

    double at(int note, int harmonic) const {  // 1-based
        return magnitude[std::size_t(note - 1) * partial_count + harmonic - 1];
    }
    bool usable(int note, int harmonic) const {
        return mask[std::size_t(note - 1) * partial_count + harmonic - 1] != 0;
    }
};

// S x K grid of natural-log magnitudes; masked slots hold 0 and are
// excluded from every downstream sum.
struct LogGrid {
    int note_count = 0;
    int partial_count = 0;
    std::vector<double> value;
    std::vector<std::uint8_t> mask;

    double at(int note, int harmonic) const {
        return value[std::size_t(note - 1) * partial_count + harmonic - 1];
    }
    bool usable(int note, int harmonic) const {
        return mask[std::size_t(note - 1) * partial_count + harmonic - 1] != 0;
    }
};

//----( pitch arithmetic )----

// Scientific pitch name -> chromatic index with c0 = 0 (so a4 = 57).
// Grammar (case-insensitive): letter a..g, optional accidental (# or s =
// sharp, b or f = flat), octave digits. Throws ParseError on bad names.
int note_name_to_index(const std::string& name);

// Equal temperament anchored at a4 = 440 Hz: 440 * 2^((index - 57)/12).
double note_index_to_frequency(int index);

double note_name_to_frequency(const std::string& name);

//----( ingestion and serialization )----

// Reads a directory of per-note text files (two whitespace-separated
// numbers per line: amplitude, phase; line k = harmonic k). File basenames
// are pitch names; CONTENTS/README files and dotfiles are skipped.
// amp_unit decibel converts via 10^(x/20); linear takes values verbatim.
InstrumentSeries parse_sharc_instrument(const std::filesystem::path& dir,
                                        AmplitudeUnit amp_unit);

// Canonical JSON format; see README for the schema. Round-trip identity:
// parse(write(x)) == x field-for-field.
InstrumentSeries parse_canonical(std::istream& in, const std::string& origin);
InstrumentSeries parse_canonical_file(const std::filesystem::path& path);
void write_canonical(const InstrumentSeries& series, std::ostream& out);
void write_canonical_file(const InstrumentSeries& series,
                          const std::filesystem::path& path);

// Checks all series invariants; throws ValidationError with a specific
// message (e.g. "non-chromatic series ...") on the first violation.
void validate(const InstrumentSeries& series);

// Applies the truncation policy, then masks entries with magnitude
// <= floor_rel * (grid max). Every retained row and column must keep at
// least one usable entry.
UniformSeries apply_truncation(const InstrumentSeries& series,
                               const TruncationPolicy& policy,
                               double floor_rel = 1e-5);

LogGrid log_magnitudes(const UniformSeries& u);

}  // namespace sfd
