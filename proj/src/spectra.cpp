#include "sfd/spectra.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "sfd/error.hpp"
#include "sfd/format.hpp"

namespace sfd {

namespace fs = std::filesystem;
using njson = nlohmann::json;

//----( pitch arithmetic )----

int note_name_to_index(const std::string& name) {
    auto fail = [&]() -> int {
        throw ParseError("unknown note name '" + name + "'");
    };
    if (name.size() < 2) return fail();
    // semitone of the natural letter within the octave, c = 0
    static constexpr int natural[] = {9, 11, 0, 2, 4, 5, 7}; // a b c d e f g
    char letter = char(std::tolower(static_cast<unsigned char>(name[0])));
    if (letter < 'a' || letter > 'g') return fail();
    int semitone = natural[letter - 'a'];
    std::size_t pos = 1;
    char c = char(std::tolower(static_cast<unsigned char>(name[pos])));
    // an accidental only counts if digits still follow it ("b2" is the note
    // B2, "bb2" is B-flat 2)
    if ((c == '#' || c == 's' || c == 'b' || c == 'f') && pos + 1 < name.size()) {
        semitone += (c == '#' || c == 's') ? 1 : -1;
        ++pos;
    }
    if (pos >= name.size()) return fail();
    long octave = 0;
    for (; pos < name.size(); ++pos) {
        if (!std::isdigit(static_cast<unsigned char>(name[pos]))) return fail();
        octave = octave * 10 + (name[pos] - '0');
        if (octave > 40) return fail();
    }
    return int(octave) * 12 + semitone;
}

double note_index_to_frequency(int index) {
    return 440.0 * std::exp2((index - 57) / 12.0); // a4 = index 57
}

double note_name_to_frequency(const std::string& name) {
    return note_index_to_frequency(note_name_to_index(name));
}

//----( SHARC-style directory adapter )----

namespace {

std::string lowercase(std::string s) {
    for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool is_metadata_name(const std::string& stem) {
    std::string low = lowercase(stem);
    return low == "contents" || low == "readme";
}

std::string directory_label(const fs::path& dir) {
    fs::path p = dir;
    if (p.filename().empty()) p = p.parent_path(); // tolerate trailing slash
    std::string label = p.filename().string();
    return label.empty() ? p.string() : label;
}

std::vector<PartialEntry> parse_note_file(const fs::path& path, AmplitudeUnit unit) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<PartialEntry> partials;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
            line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::istringstream iss(line);
        double amp = 0.0, phase = 0.0;
        std::string extra;
        if (!(iss >> amp >> phase) || (iss >> extra)) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected two numeric fields");
        }
        double mag;
        if (unit == AmplitudeUnit::decibel) {
            mag = std::pow(10.0, amp / 20.0);
        } else {
            if (amp < 0.0)
                throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                      ": negative linear magnitude");
            mag = amp;
        }
        partials.push_back({int(partials.size()) + 1, mag, phase});
    }
    return partials;
}

}  // namespace

InstrumentSeries parse_sharc_instrument(const fs::path& dir, AmplitudeUnit amp_unit) {
    if (!fs::exists(dir)) throw ParseError("no such directory: " + dir.string());
    if (!fs::is_directory(dir)) throw ParseError("not a directory: " + dir.string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string fname = entry.path().filename().string();
        if (fname.empty() || fname.front() == '.') continue;
        if (is_metadata_name(entry.path().stem().string())) continue;
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw ParseError("no note files in directory: " + dir.string());

    std::vector<std::pair<int, NoteSpectrum>> indexed;
    for (const auto& path : files) {
        std::string stem = path.stem().string();
        int index;
        try {
            index = note_name_to_index(stem);
        } catch (const ParseError&) {
            throw ParseError("unknown note name '" + stem + "' (" + path.string() + ")");
        }
        for (const auto& other : indexed)
            if (other.first == index)
                throw ValidationError("duplicate note '" + stem + "' in " + dir.string());
        NoteSpectrum note;
        note.note_name = stem;
        note.fundamental_hz = note_index_to_frequency(index);
        note.partials = parse_note_file(path, amp_unit);
        indexed.emplace_back(index, std::move(note));
    }
    std::sort(indexed.begin(), indexed.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    InstrumentSeries series;
    series.name = directory_label(dir);
    for (auto& [index, note] : indexed) series.notes.push_back(std::move(note));
    series.f0_lowest_hz = series.notes.front().fundamental_hz;
    validate(series);
    return series;
}

//----( canonical JSON )----

namespace {

const njson& member(const njson& obj, const std::string& ptr, const char* key,
                    const std::string& origin) {
    if (!obj.is_object())
        throw ParseError(origin + ": " + (ptr.empty() ? "/" : ptr) + ": expected object");
    auto it = obj.find(key);
    if (it == obj.end())
        throw ParseError(origin + ": " + ptr + "/" + key + ": missing required field");
    return *it;
}

double as_number(const njson& v, const std::string& ptr, const std::string& origin) {
    if (!v.is_number())
        throw ParseError(origin + ": " + ptr + ": expected number");
    return v.get<double>();
}

int as_int(const njson& v, const std::string& ptr, const std::string& origin) {
    if (!v.is_number_integer())
        throw ParseError(origin + ": " + ptr + ": expected integer");
    return v.get<int>();
}

std::string as_string(const njson& v, const std::string& ptr, const std::string& origin) {
    if (!v.is_string())
        throw ParseError(origin + ": " + ptr + ": expected string");
    return v.get<std::string>();
}

const njson& as_array(const njson& v, const std::string& ptr, const std::string& origin) {
    if (!v.is_array())
        throw ParseError(origin + ": " + ptr + ": expected array");
    return v;
}

}  // namespace

InstrumentSeries parse_canonical(std::istream& in, const std::string& origin) {
    njson root;
    try {
        root = njson::parse(in);
    } catch (const njson::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
    InstrumentSeries series;
    series.name = as_string(member(root, "", "name", origin), "/name", origin);
    series.f0_lowest_hz =
        as_number(member(root, "", "f0_lowest_hz", origin), "/f0_lowest_hz", origin);
    const njson& notes = as_array(member(root, "", "notes", origin), "/notes", origin);
    for (std::size_t i = 0; i < notes.size(); ++i) {
        std::string nptr = "/notes/" + std::to_string(i);
        const njson& jnote = notes[i];
        NoteSpectrum note;
        note.note_name = as_string(member(jnote, nptr, "note", origin), nptr + "/note", origin);
        note.fundamental_hz =
            as_number(member(jnote, nptr, "f0_hz", origin), nptr + "/f0_hz", origin);
        const njson& parts =
            as_array(member(jnote, nptr, "partials", origin), nptr + "/partials", origin);
        for (std::size_t k = 0; k < parts.size(); ++k) {
            std::string pptr = nptr + "/partials/" + std::to_string(k);
            const njson& jp = parts[k];
            PartialEntry entry;
            entry.harmonic = as_int(member(jp, pptr, "j", origin), pptr + "/j", origin);
            entry.magnitude =
                as_number(member(jp, pptr, "mag", origin), pptr + "/mag", origin);
            if (auto it = jp.find("phase"); it != jp.end() && !it->is_null())
                entry.phase = as_number(*it, pptr + "/phase", origin);
            note.partials.push_back(entry);
        }
        series.notes.push_back(std::move(note));
    }
    validate(series);
    return series;
}

InstrumentSeries parse_canonical_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return parse_canonical(in, path.string());
}

void write_canonical(const InstrumentSeries& series, std::ostream& out) {
    out << "{\n";
    out << "  \"name\": \"" << json_escape(series.name) << "\",\n";
    out << "  \"f0_lowest_hz\": " << format_sci(series.f0_lowest_hz) << ",\n";
    out << "  \"notes\": [\n";
    for (std::size_t i = 0; i < series.notes.size(); ++i) {
        const NoteSpectrum& note = series.notes[i];
        out << "    {\n";
        out << "      \"note\": \"" << json_escape(note.note_name) << "\",\n";
        out << "      \"f0_hz\": " << format_sci(note.fundamental_hz) << ",\n";
        out << "      \"partials\": [";
        for (std::size_t k = 0; k < note.partials.size(); ++k) {
            const PartialEntry& p = note.partials[k];
            out << (k ? ",\n        " : "\n        ");
            out << "{\"j\": " << p.harmonic << ", \"mag\": " << format_sci(p.magnitude)
                << ", \"phase\": " << (p.phase ? format_sci(*p.phase) : "null") << "}";
        }
        out << (note.partials.empty() ? "]\n" : "\n      ]\n");
        out << "    }" << (i + 1 < series.notes.size() ? "," : "") << "\n";
    }
    out << "  ]\n";
    out << "}\n";
}

void write_canonical_file(const InstrumentSeries& series, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path.string() + " for writing");
    write_canonical(series, out);
    out.flush();
    if (!out) throw ParseError("failed writing " + path.string());
}

//----( validation )----

void validate(const InstrumentSeries& series) {
    if (series.notes.empty())
        throw ValidationError("series '" + series.name + "' has no notes");
    for (const NoteSpectrum& note : series.notes) {
        if (!(note.fundamental_hz > 0.0) || !std::isfinite(note.fundamental_hz))
            throw ValidationError("note '" + note.note_name +
                                  "': fundamental must be a positive finite frequency");
        for (std::size_t k = 0; k < note.partials.size(); ++k) {
            const PartialEntry& p = note.partials[k];
            if (p.harmonic != int(k) + 1)
                throw ValidationError("note '" + note.note_name +
                                      "': harmonic indices must run contiguously from 1 (got " +
                                      std::to_string(p.harmonic) + " at position " +
                                      std::to_string(k + 1) + ")");
            if (!(p.magnitude >= 0.0) || !std::isfinite(p.magnitude))
                throw ValidationError("note '" + note.note_name + "' harmonic " +
                                      std::to_string(p.harmonic) +
                                      ": magnitude must be finite and >= 0");
            if (p.phase && !std::isfinite(*p.phase))
                throw ValidationError("note '" + note.note_name + "' harmonic " +
                                      std::to_string(p.harmonic) + ": phase must be finite");
        }
    }
    if (series.f0_lowest_hz != series.notes.front().fundamental_hz)
        throw ValidationError("f0_lowest_hz (" + format_g(series.f0_lowest_hz) +
                              ") does not equal the first note's fundamental (" +
                              format_g(series.notes.front().fundamental_hz) + ")");
    for (std::size_t i = 0; i + 1 < series.notes.size(); ++i) {
        const NoteSpectrum& lo = series.notes[i];
        const NoteSpectrum& hi = series.notes[i + 1];
        double step = 12.0 * std::log2(hi.fundamental_hz / lo.fundamental_hz);
        double deviation = std::abs(step - 1.0);
        if (!(deviation <= 0.01))
            throw ValidationError(
                "non-chromatic series: step from '" + lo.note_name + "' (" +
                format_g(lo.fundamental_hz) + " Hz) to '" + hi.note_name + "' (" +
                format_g(hi.fundamental_hz) + " Hz) is " + format_g(step) +
                " semitones (deviation " + format_g(deviation) + " > 0.01)");
    }
}

//----( truncation to a uniform grid )----

UniformSeries apply_truncation(const InstrumentSeries& series,
                               const TruncationPolicy& policy, double floor_rel) {
    validate(series);
    if (policy.min_samples < 1 || policy.min_partials < 1)
        throw ValidationError("truncation policy values must be >= 1");
    if (!(floor_rel > 0.0) || !(floor_rel < 1.0))
        throw ValidationError("magnitude floor must satisfy 0 < floor_rel < 1");

    const int len = int(series.notes.size());
    int S = len;
    for (int i = policy.min_samples + 1; i <= len; ++i) {
        if (int(series.notes[i - 1].partials.size()) < policy.min_partials) {
            S = i - 1;
            break;
        }
    }
    if (S <= 0)
        throw ValidationError("series '" + series.name + "' truncates to zero notes");

    int K = int(series.notes.front().partials.size());
    for (int i = 2; i <= S; ++i)
        K = std::min(K, int(series.notes[i - 1].partials.size()));
    if (K <= 0) {
        for (int i = 1; i <= S; ++i)
            if (series.notes[i - 1].partials.empty())
                throw ValidationError("note '" + series.notes[i - 1].note_name +
                                      "' has no partials but falls inside the retained prefix");
        throw ValidationError("retained prefix has no partials");
    }

    UniformSeries u;
    u.name = series.name;
    u.f0_lowest_hz = series.f0_lowest_hz;
    u.note_count = S;
    u.partial_count = K;
    u.magnitude.resize(std::size_t(S) * K);
    u.mask.assign(std::size_t(S) * K, 0);

    double grid_max = 0.0;
    for (int i = 1; i <= S; ++i)
        for (int j = 1; j <= K; ++j) {
            double mag = series.notes[i - 1].partials[j - 1].magnitude;
            u.magnitude[std::size_t(i - 1) * K + j - 1] = mag;
            grid_max = std::max(grid_max, mag);
        }
    const double floor_abs = floor_rel * grid_max;
    for (std::size_t idx = 0; idx < u.magnitude.size(); ++idx)
        u.mask[idx] = u.magnitude[idx] > floor_abs ? 1 : 0;

    for (int i = 1; i <= S; ++i) {
        bool any = false;
        for (int j = 1; j <= K; ++j) any = any || u.usable(i, j);
        if (!any)
            throw ValidationError("note '" + series.notes[i - 1].note_name +
                                  "' is entirely at or below the magnitude floor");
    }
    for (int j = 1; j <= K; ++j) {
        bool any = false;
        for (int i = 1; i <= S; ++i) any = any || u.usable(i, j);
        if (!any)
            throw ValidationError("harmonic " + std::to_string(j) +
                                  " is entirely at or below the magnitude floor");
    }
    return u;
}

LogGrid log_magnitudes(const UniformSeries& u) {
    LogGrid g;
    g.note_count = u.note_count;
    g.partial_count = u.partial_count;
    g.value.assign(u.magnitude.size(), 0.0);
    g.mask = u.mask;
    for (std::size_t idx = 0; idx < u.magnitude.size(); ++idx)
        if (u.mask[idx]) g.value[idx] = std::log(u.magnitude[idx]);
    return g;
}

}  // namespace sfd
