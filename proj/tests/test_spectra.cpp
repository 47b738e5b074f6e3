#include <cmath>
#include <sstream>

#include "doctest.h"

#include "sfd/error.hpp"
#include "sfd/spectra.hpp"
#include "support.hpp"

using namespace sfd;
using testsupport::TempDir;
using testsupport::write_file;

//----( pitch names )----

TEST_CASE("note names map to chromatic indices") {
    CHECK(note_name_to_index("c0") == 0);
    CHECK(note_name_to_index("a4") == 57);
    CHECK(note_name_to_index("C4") == 48);
    CHECK(note_name_to_index("b2") == 35);   // plain B, not a flat
    CHECK(note_name_to_index("bb2") == 34);  // B flat
    CHECK(note_name_to_index("as2") == 34);  // A sharp == B flat
    CHECK(note_name_to_index("a#2") == 34);
    CHECK(note_name_to_index("cf4") == 47);  // C flat
    CHECK(note_name_to_index("d#3") == 39);
    CHECK(note_name_to_index("ds3") == 39);
    CHECK(note_name_to_index("g10") == 127);
}

TEST_CASE("bad note names are rejected") {
    for (const char* bad : {"", "c", "h2", "c#", "cs", "c-1", "4c", "c4x", "c99"})
        CHECK_THROWS_AS((void)note_name_to_index(bad), ParseError);
}

TEST_CASE("equal temperament frequencies anchor at a4 = 440") {
    CHECK(note_name_to_frequency("a4") == doctest::Approx(440.0).epsilon(1e-12));
    CHECK(note_index_to_frequency(48) == doctest::Approx(261.625565).epsilon(1e-8));
    CHECK(note_index_to_frequency(24) == doctest::Approx(65.406391).epsilon(1e-8));
    CHECK(note_index_to_frequency(25) == doctest::Approx(69.295658).epsilon(1e-8));
    CHECK(note_index_to_frequency(62) == doctest::Approx(587.329536).epsilon(1e-8));
}

//----( note-file directories )----

TEST_CASE("directory parsing converts decibels and orders notes by pitch") {
    TempDir tmp;
    // -38.2 dB -> 10^(-38.2/20); line order defines the harmonic index.
    write_file(tmp.file("c4"), "-38.2 0.5\n0 -0.25\n");
    write_file(tmp.file("b3"), "0 0.0\r\n\n  -6 1.0  \n");
    write_file(tmp.file("CONTENTS"), "not a note\n");
    write_file(tmp.file("README"), "not a note either\n");
    write_file(tmp.file(".hidden"), "junk\n");

    InstrumentSeries s = parse_sharc_instrument(tmp.path, AmplitudeUnit::decibel);
    REQUIRE(s.notes.size() == 2);
    CHECK(s.notes[0].note_name == "b3");
    CHECK(s.notes[1].note_name == "c4");
    CHECK(s.f0_lowest_hz == doctest::Approx(246.941651).epsilon(1e-8));

    REQUIRE(s.notes[1].partials.size() == 2);
    CHECK(s.notes[1].partials[0].harmonic == 1);
    CHECK(s.notes[1].partials[0].magnitude ==
          doctest::Approx(1.230269e-2).epsilon(1e-6));
    CHECK(s.notes[1].partials[0].phase.value() == doctest::Approx(0.5));
    CHECK(s.notes[1].partials[1].magnitude == doctest::Approx(1.0).epsilon(1e-12));

    // \r and surrounding blank lines were tolerated
    REQUIRE(s.notes[0].partials.size() == 2);
    CHECK(s.notes[0].partials[1].magnitude ==
          doctest::Approx(std::pow(10.0, -6.0 / 20.0)).epsilon(1e-12));
}

TEST_CASE("directory parsing in linear mode takes magnitudes verbatim") {
    TempDir tmp;
    write_file(tmp.file("a3"), "0.25 0\n1.5 0\n");
    write_file(tmp.file("a#3"), "2.0 0\n");
    InstrumentSeries s = parse_sharc_instrument(tmp.path, AmplitudeUnit::linear);
    CHECK(s.notes[0].partials[0].magnitude == 0.25);
    CHECK(s.notes[0].partials[1].magnitude == 1.5);

    write_file(tmp.file("b3"), "-1 0\n");
    CHECK_THROWS_WITH_AS(parse_sharc_instrument(tmp.path, AmplitudeUnit::linear),
                         doctest::Contains("negative linear magnitude"),
                         ValidationError);
}

TEST_CASE("directory parsing diagnoses malformed inputs") {
    TempDir tmp;
    write_file(tmp.file("c3"), "0 0\nnope 0\n");
    CHECK_THROWS_WITH_AS(parse_sharc_instrument(tmp.path, AmplitudeUnit::decibel),
                         doctest::Contains("expected two numeric fields"), ParseError);

    TempDir extra;
    write_file(extra.file("c3"), "0 0 7\n");
    CHECK_THROWS_WITH_AS(parse_sharc_instrument(extra.path, AmplitudeUnit::decibel),
                         doctest::Contains("expected two numeric fields"), ParseError);

    TempDir odd;
    write_file(odd.file("zz9"), "0 0\n");
    CHECK_THROWS_WITH_AS(parse_sharc_instrument(odd.path, AmplitudeUnit::decibel),
                         doctest::Contains("unknown note name 'zz9'"), ParseError);

    TempDir dup;
    write_file(dup.file("c3"), "0 0\n");
    write_file(dup.file("C3"), "0 0\n");
    CHECK_THROWS_AS(parse_sharc_instrument(dup.path, AmplitudeUnit::decibel),
                    ValidationError);

    TempDir empty;
    CHECK_THROWS_WITH_AS(parse_sharc_instrument(empty.path, AmplitudeUnit::decibel),
                         doctest::Contains("no note files"), ParseError);

    CHECK_THROWS_AS(parse_sharc_instrument("/no/such/dir", AmplitudeUnit::decibel),
                    ParseError);
}

//----( canonical JSON )----

static InstrumentSeries tiny_series() {
    InstrumentSeries s;
    s.name = "tiny";
    NoteSpectrum lo{"c2", note_index_to_frequency(24), {{1, 0.5, 0.25}, {2, 0.125, std::nullopt}}};
    NoteSpectrum hi{"c#2", note_index_to_frequency(25), {{1, 1.0 / 3.0, -1.5}}};
    s.notes = {lo, hi};
    s.f0_lowest_hz = lo.fundamental_hz;
    return s;
}

TEST_CASE("canonical JSON round-trips exactly") {
    InstrumentSeries s = tiny_series();
    std::ostringstream out;
    write_canonical(s, out);
    std::istringstream in(out.str());
    InstrumentSeries back = parse_canonical(in, "mem");

    CHECK(back.name == s.name);
    CHECK(back.f0_lowest_hz == s.f0_lowest_hz);
    REQUIRE(back.notes.size() == s.notes.size());
    for (std::size_t i = 0; i < s.notes.size(); ++i) {
        CHECK(back.notes[i].note_name == s.notes[i].note_name);
        CHECK(back.notes[i].fundamental_hz == s.notes[i].fundamental_hz);
        REQUIRE(back.notes[i].partials.size() == s.notes[i].partials.size());
        for (std::size_t k = 0; k < s.notes[i].partials.size(); ++k) {
            CHECK(back.notes[i].partials[k].harmonic == s.notes[i].partials[k].harmonic);
            CHECK(back.notes[i].partials[k].magnitude == s.notes[i].partials[k].magnitude);
            CHECK(back.notes[i].partials[k].phase == s.notes[i].partials[k].phase);
        }
    }
}

TEST_CASE("canonical JSON parse errors carry a location") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_canonical(in, "mem");
    };
    CHECK_THROWS_WITH_AS(parse("{"), doctest::Contains("mem:"), ParseError);
    CHECK_THROWS_WITH_AS(parse("[]"), doctest::Contains("expected object"), ParseError);
    CHECK_THROWS_WITH_AS(parse(R"({"name":"x","notes":[]})"),
                         doctest::Contains("missing required field"), ParseError);
    CHECK_THROWS_WITH_AS(
        parse(R"({"name":"x","f0_lowest_hz":1,"notes":[{"note":"c2","f0_hz":1,)"
              R"("partials":[{"j":"one","mag":1,"phase":null}]}]})"),
        doctest::Contains("expected integer"), ParseError);
}

TEST_CASE("phase may be null or absent") {
    std::istringstream in(
        R"({"name":"x","f0_lowest_hz":65.40639132514966,
            "notes":[{"note":"c2","f0_hz":65.40639132514966,
                      "partials":[{"j":1,"mag":1.0,"phase":null},
                                  {"j":2,"mag":0.5}]}]})");
    InstrumentSeries s = parse_canonical(in, "mem");
    CHECK(!s.notes[0].partials[0].phase.has_value());
    CHECK(!s.notes[0].partials[1].phase.has_value());
}

//----( validation )----

TEST_CASE("validation accepts near-semitone steps and rejects whole tones") {
    auto with_steps = [](double f1, double f2) {
        InstrumentSeries s;
        s.name = "steps";
        s.notes = {{"c2", f1, {{1, 1.0, std::nullopt}}},
                   {"c#2", f2, {{1, 1.0, std::nullopt}}}};
        s.f0_lowest_hz = f1;
        return s;
    };
    // one rounded semitone: deviation ~1.9e-4, comfortably inside 0.01
    CHECK_NOTHROW(validate(with_steps(65.406, 69.296)));
    // a whole tone: deviation ~1.0
    CHECK_THROWS_WITH_AS(validate(with_steps(65.406, 73.416)),
                         doctest::Contains("non-chromatic series"), ValidationError);

    InstrumentSeries nan_step = with_steps(65.406, 69.296);
    nan_step.notes[1].fundamental_hz = 0.0;
    CHECK_THROWS_AS(validate(nan_step), ValidationError);
}

TEST_CASE("validation checks structure") {
    InstrumentSeries s = tiny_series();

    InstrumentSeries empty = s;
    empty.notes.clear();
    CHECK_THROWS_WITH_AS(validate(empty), doctest::Contains("has no notes"),
                         ValidationError);

    InstrumentSeries wrong_f0 = s;
    wrong_f0.f0_lowest_hz *= 1.5;
    CHECK_THROWS_AS(validate(wrong_f0), ValidationError);

    InstrumentSeries gap = s;
    gap.notes[0].partials[1].harmonic = 3;
    CHECK_THROWS_AS(validate(gap), ValidationError);

    InstrumentSeries negative = s;
    negative.notes[0].partials[0].magnitude = -0.5;
    CHECK_THROWS_AS(validate(negative), ValidationError);

    InstrumentSeries bad_phase = s;
    bad_phase.notes[0].partials[0].phase = std::nan("");
    CHECK_THROWS_AS(validate(bad_phase), ValidationError);

    CHECK_NOTHROW(validate(s));
}

//----( truncation )----

TEST_CASE("truncation prefix rule reproduces a known profile") {
    // counts: >= 16 partials through note 17, then a decaying tail
    std::vector<int> counts(17, 16);
    for (int c : {15, 14, 13, 12, 11, 10, 9, 8, 8, 8, 8, 8, 7})
        counts.push_back(c);
    InstrumentSeries s = testsupport::counts_series("profile", 47, counts);

    UniformSeries a = apply_truncation(s, {16, 16});
    CHECK(a.note_count == 17);
    CHECK(a.partial_count == 16);

    UniformSeries b = apply_truncation(s, {24, 8});
    CHECK(b.note_count == 29);
    CHECK(b.partial_count == 8);
}

TEST_CASE("short series keep every note up to min_samples") {
    std::vector<int> counts = {5, 4, 3};
    InstrumentSeries s = testsupport::counts_series("short", 24, counts);
    UniformSeries u = apply_truncation(s, {16, 16});
    CHECK(u.note_count == 3);
    CHECK(u.partial_count == 3);
}

TEST_CASE("magnitude floor masks entries relative to the grid maximum") {
    testsupport::ModelDraw d;
    d.S = 2;
    d.K = 2;
    d.a = {0.0, 0.0};
    d.p = {0.0, 0.0};
    d.r_by_bin.assign(std::size_t(testsupport::full_span(2, 2)) + 1, 0.0);
    InstrumentSeries s = testsupport::series_from_params(d, "floor");
    s.notes[0].partials[1].magnitude = 1e-7;  // below 1e-5 * max(=1)
    UniformSeries u = apply_truncation(s, {16, 16});
    CHECK(!u.usable(1, 2));
    CHECK(u.usable(1, 1));
    CHECK(u.usable(2, 2));

    // exactly at the floor is still masked (strict comparison)
    s.notes[0].partials[1].magnitude = 1e-5;
    UniformSeries v = apply_truncation(s, {16, 16});
    CHECK(!v.usable(1, 2));
}

TEST_CASE("truncation rejects unusable rows and columns") {
    std::vector<int> counts = {2, 2};
    InstrumentSeries s = testsupport::counts_series("cover", 24, counts);
    s.notes[0].partials[1].magnitude = 1e-9;
    s.notes[1].partials[1].magnitude = 1e-9;
    CHECK_THROWS_WITH_AS(apply_truncation(s, {16, 16}),
                         doctest::Contains("harmonic 2"), ValidationError);

    InstrumentSeries t = testsupport::counts_series("cover2", 24, counts);
    t.notes[1].partials[0].magnitude = 1e-9;
    t.notes[1].partials[1].magnitude = 1e-9;
    CHECK_THROWS_WITH_AS(apply_truncation(t, {16, 16}),
                         doctest::Contains("magnitude floor"), ValidationError);
}

TEST_CASE("truncation validates its knobs") {
    InstrumentSeries s = testsupport::counts_series("knobs", 24, {2, 2});
    CHECK_THROWS_AS(apply_truncation(s, {0, 16}), ValidationError);
    CHECK_THROWS_AS(apply_truncation(s, {16, 0}), ValidationError);
    CHECK_THROWS_AS(apply_truncation(s, {16, 16}, 0.0), ValidationError);
    CHECK_THROWS_AS(apply_truncation(s, {16, 16}, 1.0), ValidationError);
}

TEST_CASE("log grid holds natural logs on usable slots") {
    InstrumentSeries s = testsupport::counts_series("logs", 24, {2, 2});
    s.notes[0].partials[0].magnitude = std::exp(1.5);
    UniformSeries u = apply_truncation(s, {16, 16});
    LogGrid g = log_magnitudes(u);
    CHECK(g.at(1, 1) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(g.at(2, 2) == doctest::Approx(0.0).epsilon(1e-12));
}
