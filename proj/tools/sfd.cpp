// sfd — source-filter decomposition of chromatic instrument spectra.
//
// Subcommands: analyze, plotdata, predict, hybrid, render, rank, validate.
// Exit codes: 0 success, 1 input/validation error, 2 analyze did not
// converge, 3 rank oracle size-guard refusal.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#ifdef _WIN32
#include <io.h>
#define SFD_ISATTY _isatty
#define SFD_FILENO _fileno
#else
#include <unistd.h>
#define SFD_ISATTY isatty
#define SFD_FILENO fileno
#endif

#include "CLI11.hpp"

#include "sfd/apply.hpp"
#include "sfd/decompose.hpp"
#include "sfd/error.hpp"
#include "sfd/format.hpp"
#include "sfd/grid.hpp"
#include "sfd/spectra.hpp"

namespace fs = std::filesystem;

namespace {

constexpr double kDbPerLn = 20.0 / 2.302585092994045684; // 20 / ln 10

//----( report coloring )----

bool use_color() {
    static const bool enabled =
        SFD_ISATTY(SFD_FILENO(stdout)) != 0 && std::getenv("SFD_NO_COLOR") == nullptr;
    return enabled;
}

std::string paint(const std::string& text, const char* code) {
    if (!use_color()) return text;
    return std::string("\x1b[") + code + "m" + text + "\x1b[0m";
}

std::string good(const std::string& t) { return paint(t, "32"); }
std::string bad(const std::string& t) { return paint(t, "31"); }

//----( shared option plumbing )----

struct InputOptions {
    std::string path;
    std::string sharc_amp; // "", "db", or "linear"
    std::string policy = "16,16";
    std::string weighting = "magnitude";
    double floor_rel = 1e-5;
};

sfd::TruncationPolicy parse_policy(const std::string& text) {
    const auto comma = text.find(',');
    if (comma != std::string::npos) {
        try {
            std::size_t used1 = 0, used2 = 0;
            const std::string left = text.substr(0, comma);
            const std::string right = text.substr(comma + 1);
            int s = std::stoi(left, &used1);
            int k = std::stoi(right, &used2);
            if (used1 == left.size() && used2 == right.size() && s >= 1 && k >= 1)
                return {s, k};
        } catch (const std::exception&) {
        }
    }
    throw sfd::ParseError("bad --policy '" + text + "' (expected MIN_SAMPLES,MIN_PARTIALS)");
}

sfd::InstrumentSeries load_series(const InputOptions& in) {
    if (fs::is_directory(in.path)) {
        if (in.sharc_amp.empty())
            throw sfd::ValidationError(
                "directory input requires --sharc-amp db|linear (amplitude unit of the files)");
        if (in.sharc_amp != "db" && in.sharc_amp != "linear")
            throw sfd::ParseError("bad --sharc-amp '" + in.sharc_amp + "' (expected db|linear)");
        return sfd::parse_sharc_instrument(in.path, in.sharc_amp == "db"
                                                        ? sfd::AmplitudeUnit::decibel
                                                        : sfd::AmplitudeUnit::linear);
    }
    return sfd::parse_canonical_file(in.path);
}

sfd::UniformSeries load_uniform(const InputOptions& in) {
    return sfd::apply_truncation(load_series(in), parse_policy(in.policy), in.floor_rel);
}

std::string default_model_path(const std::string& input) {
    fs::path p(input);
    if (p.filename().empty()) p = p.parent_path();
    std::string stem = p.stem().string();
    if (stem.empty()) stem = "instrument";
    return stem + ".model.json";
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw sfd::ParseError("cannot open " + path.string() + " for writing");
    out.write(content.data(), std::streamsize(content.size()));
    out.flush();
    if (!out) throw sfd::ParseError("failed writing " + path.string());
}

void emit_spectrum_csv(const sfd::PredictedSpectrum& spec, const std::string& out_path) {
    std::ostringstream csv;
    sfd::write_spectrum_csv(spec, csv);
    if (out_path.empty())
        std::cout << csv.str();
    else
        write_text_file(out_path, csv.str());
}

//----( subcommand bodies )----

int run_analyze(const InputOptions& in, const sfd::SolverConfig& cfg,
                const std::string& out_path) {
    sfd::UniformSeries u = load_uniform(in);
    sfd::BinGrid grid = sfd::build_grid(u);
    sfd::DesignSystem sys = sfd::assemble_system(u, grid, cfg.weighting);
    sfd::DecompositionModel model = sfd::solve(u, cfg);
    const std::string model_path = out_path.empty() ? default_model_path(in.path) : out_path;
    sfd::write_model_file(model, model_path);

    sfd::TruncationPolicy policy = parse_policy(in.policy);
    std::cout << "instrument: " << model.name << "\n";
    std::cout << "S=" << model.note_count << " K=" << model.partial_count << " N="
              << model.filter_bins.size() << " rows=" << sys.rows.size() << " cols="
              << sys.column_count() << "\n";
    std::cout << "weighting=" << sfd::to_string(cfg.weighting) << " policy=" << policy.min_samples
              << "," << policy.min_partials << " floor=" << sfd::format_g(in.floor_rel)
              << " tol=" << sfd::format_g(cfg.rel_tolerance) << " max-iters="
              << cfg.max_iterations << "\n";
    std::cout << "iterations=" << model.iterations_used << " final_metric="
              << sfd::format_g(model.final_metric) << " ln ("
              << sfd::format_g(model.final_metric * kDbPerLn) << " dB)\n";
    std::cout << "converged: " << (model.converged ? good("yes") : bad("no")) << "\n";
    std::cout << "model written: " << model_path << "\n";
    return model.converged ? 0 : 2;
}

int run_plotdata(const std::string& model_path, const std::string& out_dir,
                 const std::optional<InputOptions>& residual_input) {
    sfd::DecompositionModel model = sfd::parse_model_file(model_path);
    fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec && !fs::is_directory(dir))
        throw sfd::ParseError("cannot create output directory " + dir.string());

    std::ostringstream exc;
    exc << "j,p_ln,p_db\n";
    for (std::size_t j = 0; j < model.excitation.size(); ++j)
        exc << (j + 1) << "," << sfd::format_sci(model.excitation[j]) << ","
            << sfd::format_sci(model.excitation[j] * kDbPerLn) << "\n";
    write_text_file(dir / "excitation.csv", exc.str());

    std::ostringstream flt;
    flt << "n,center_freq_hz,r_ln,r_db\n";
    for (std::size_t k = 0; k < model.filter_bins.size(); ++k) {
        const int n = model.filter_bins[k];
        const double center = model.f0_lowest_hz * std::exp2((n - 1) / 12.0);
        flt << n << "," << sfd::format_sci(center) << ","
            << sfd::format_sci(model.filter_values[k]) << ","
            << sfd::format_sci(model.filter_values[k] * kDbPerLn) << "\n";
    }
    write_text_file(dir / "filter.csv", flt.str());

    std::ostringstream res;
    res << "i,j,residual_ln\n";
    if (residual_input) {
        sfd::UniformSeries u = load_uniform(*residual_input);
        if (u.note_count != model.note_count || u.partial_count != model.partial_count)
            throw sfd::ValidationError(
                "input truncates to S=" + std::to_string(u.note_count) + ", K=" +
                std::to_string(u.partial_count) + " but the model was fitted with S=" +
                std::to_string(model.note_count) + ", K=" + std::to_string(model.partial_count) +
                " (match --policy/--floor to the analyze run)");
        sfd::BinGrid grid = sfd::build_grid(u);
        sfd::DesignSystem sys = sfd::assemble_system(u, grid, model.weighting);
        sfd::LogGrid r = sfd::residuals(model, sys);
        for (int i = 1; i <= r.note_count; ++i)
            for (int j = 1; j <= r.partial_count; ++j)
                if (r.usable(i, j))
                    res << i << "," << j << "," << sfd::format_sci(r.at(i, j)) << "\n";
    }
    write_text_file(dir / "residuals.csv", res.str());

    std::cout << "wrote " << (dir / "excitation.csv").string() << ", "
              << (dir / "filter.csv").string() << ", " << (dir / "residuals.csv").string()
              << (residual_input ? "" : " (residuals header-only: no --input)") << "\n";
    return 0;
}

int run_predict(const std::string& model_path, double f0, int partials, double amp_db,
                const std::string& out_path) {
    sfd::DecompositionModel model = sfd::parse_model_file(model_path);
    sfd::PredictedSpectrum spec =
        sfd::predict_spectrum(model, f0, partials, amp_db / kDbPerLn);
    emit_spectrum_csv(spec, out_path);
    return 0;
}

int run_hybrid(const std::string& excitation_path, const std::string& filter_path, double f0,
               int partials, double amp_db, const std::string& out_path) {
    sfd::DecompositionModel a = sfd::parse_model_file(excitation_path);
    sfd::DecompositionModel b = sfd::parse_model_file(filter_path);
    sfd::DecompositionModel hybrid = sfd::hybridize(a, b);
    if (partials <= 0) partials = hybrid.partial_count;
    sfd::PredictedSpectrum spec =
        sfd::predict_spectrum(hybrid, f0, partials, amp_db / kDbPerLn);
    emit_spectrum_csv(spec, out_path);
    return 0;
}

int run_render(const std::string& spectrum_path, const std::string& model_path, double f0,
               int partials, double amp_db, double seconds, int rate,
               const std::string& out_path) {
    sfd::PredictedSpectrum spec;
    if (!spectrum_path.empty()) {
        std::ifstream in(spectrum_path);
        if (!in) throw sfd::ParseError("cannot open " + spectrum_path);
        spec = sfd::parse_spectrum_csv(in, spectrum_path, f0);
    } else {
        sfd::DecompositionModel model = sfd::parse_model_file(model_path);
        if (partials <= 0) partials = model.partial_count;
        spec = sfd::predict_spectrum(model, f0, partials, amp_db / kDbPerLn);
    }
    sfd::RenderStats stats = sfd::render_wav(spec, seconds, rate, out_path);
    if (stats.dropped_partials > 0)
        std::cerr << "warning: dropped " << stats.dropped_partials
                  << " partial(s) above the Nyquist frequency\n";
    std::cout << "wrote " << out_path << ": " << stats.sample_count << " samples @ " << rate
              << " Hz, " << stats.kept_partials << " partial(s)\n";
    return 0;
}

int run_rank(const InputOptions& in) {
    sfd::UniformSeries u = load_uniform(in);
    sfd::BinGrid grid = sfd::build_grid(u);
    sfd::DesignSystem sys = sfd::assemble_system(u, grid, sfd::weighting_from_string(in.weighting));
    const int cols = sys.column_count();
    const int rank = sfd::rank_oracle(sys);
    std::cout << "rows=" << sys.rows.size() << " cols=" << cols << " rank=" << rank
              << " deficiency=" << (cols - rank) << "\n";
    const int rank_np1 = sfd::rank_oracle(sys, true);
    std::cout << "p1-column-removed: cols=" << (cols - 1) << " rank=" << rank_np1
              << " deficiency=" << (cols - 1 - rank_np1) << "\n";
    return 0;
}

int run_validate(const InputOptions& in) {
    sfd::InstrumentSeries series = load_series(in);
    std::size_t min_partials = series.notes.front().partials.size();
    std::size_t max_partials = min_partials;
    for (const sfd::NoteSpectrum& note : series.notes) {
        min_partials = std::min(min_partials, note.partials.size());
        max_partials = std::max(max_partials, note.partials.size());
    }
    std::cout << good("OK") << ": " << series.name << ": " << series.notes.size()
              << " notes, f0 " << sfd::format_g(series.f0_lowest_hz) << ".."
              << sfd::format_g(series.notes.back().fundamental_hz) << " Hz, partials "
              << min_partials << ".." << max_partials << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"source-filter decomposition of chromatic instrument spectra"};
    app.require_subcommand(1);

    InputOptions in;
    sfd::SolverConfig cfg;
    std::string out_path;
    std::string model_path, out_dir;
    std::string excitation_path, filter_path, spectrum_path;
    double f0 = 0.0, amp_db = 0.0, seconds = 0.0;
    int partials = 0, rate = 44100;

    auto add_input_flags = [&](CLI::App* cmd, bool positional) {
        if (positional)
            cmd->add_option("input", in.path, "canonical JSON file or note directory")
                ->required();
        cmd->add_option("--sharc-amp", in.sharc_amp,
                        "amplitude unit of directory input: db|linear");
        cmd->add_option("--policy", in.policy,
                        "truncation MIN_SAMPLES,MIN_PARTIALS (default 16,16)");
        cmd->add_option("--floor", in.floor_rel,
                        "relative magnitude floor for masking (default 1e-5)");
    };

    CLI::App* analyze = app.add_subcommand(
        "analyze", "fit a decomposition model to a chromatic series");
    add_input_flags(analyze, true);
    analyze->add_option("--weighting", in.weighting, "uniform|magnitude|power");
    analyze->add_option("--tol", cfg.rel_tolerance, "relative convergence tolerance");
    analyze->add_option("--max-iters", cfg.max_iterations, "iteration cap");
    analyze->add_option("--out", out_path, "model output path (default <stem>.model.json)");

    CLI::App* plotdata = app.add_subcommand(
        "plotdata", "export excitation/filter/residual curves as CSV");
    plotdata->add_option("--model", model_path, "model JSON file")->required();
    plotdata->add_option("--out-dir", out_dir, "output directory")->required();
    plotdata->add_option("--input", in.path,
                         "the analyzed series; enables residuals.csv rows");
    plotdata->add_option("--sharc-amp", in.sharc_amp, "amplitude unit of directory input");
    plotdata->add_option("--policy", in.policy, "truncation used at analyze time");
    plotdata->add_option("--floor", in.floor_rel, "magnitude floor used at analyze time");

    CLI::App* predict = app.add_subcommand(
        "predict", "evaluate a model at a fundamental, emitting a spectrum CSV");
    predict->add_option("--model", model_path, "model JSON file")->required();
    predict->add_option("--f0", f0, "target fundamental in Hz")->required();
    predict->add_option("--partials", partials, "number of harmonics")->required();
    predict->add_option("--amp-db", amp_db, "overall amplitude in dB (default 0)");
    predict->add_option("--out", out_path, "CSV path (default stdout)");

    CLI::App* hybrid = app.add_subcommand(
        "hybrid", "cross two models: excitation from one, filter from the other");
    hybrid->add_option("--excitation", excitation_path, "excitation donor model")->required();
    hybrid->add_option("--filter", filter_path, "filter donor model")->required();
    hybrid->add_option("--f0", f0, "target fundamental in Hz")->required();
    hybrid->add_option("--partials", partials, "harmonics (default: donor's K)");
    hybrid->add_option("--amp-db", amp_db, "overall amplitude in dB (default 0)");
    hybrid->add_option("--out", out_path, "CSV path (default stdout)");

    CLI::App* render = app.add_subcommand(
        "render", "additively resynthesize a spectrum to a mono 16-bit WAV");
    render->add_option("--spectrum", spectrum_path, "spectrum CSV (needs --f0)");
    render->add_option("--model", model_path, "model JSON (needs --f0)");
    render->add_option("--f0", f0, "fundamental in Hz")->required();
    render->add_option("--partials", partials, "harmonics when predicting from --model");
    render->add_option("--amp-db", amp_db, "amplitude in dB when predicting from --model");
    render->add_option("--seconds", seconds, "duration in seconds")->required();
    render->add_option("--rate", rate, "sample rate in Hz (default 44100)");
    render->add_option("--out", out_path, "output WAV path")->required();

    CLI::App* rank = app.add_subcommand(
        "rank", "exact-arithmetic rank report of the assembled system");
    add_input_flags(rank, true);
    rank->add_option("--weighting", in.weighting, "uniform|magnitude|power");

    CLI::App* validate = app.add_subcommand(
        "validate", "parse and check a series, reporting its shape");
    add_input_flags(validate, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (analyze->parsed()) {
            cfg.weighting = sfd::weighting_from_string(in.weighting);
            return run_analyze(in, cfg, out_path);
        }
        if (plotdata->parsed()) {
            std::optional<InputOptions> residual_input;
            if (plotdata->count("--input") > 0) residual_input = in;
            return run_plotdata(model_path, out_dir, residual_input);
        }
        if (predict->parsed())
            return run_predict(model_path, f0, partials, amp_db, out_path);
        if (hybrid->parsed())
            return run_hybrid(excitation_path, filter_path, f0, partials, amp_db, out_path);
        if (render->parsed()) {
            if (spectrum_path.empty() == model_path.empty())
                throw sfd::ValidationError("render needs exactly one of --spectrum or --model");
            return run_render(spectrum_path, model_path, f0, partials, amp_db, seconds, rate,
                              out_path);
        }
        if (rank->parsed()) return run_rank(in);
        if (validate->parsed()) return run_validate(in);
        throw sfd::ValidationError("no subcommand selected");
    } catch (const sfd::SizeGuardError& e) {
        std::cerr << bad("error") << ": " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << bad("error") << ": " << e.what() << "\n";
        return 1;
    }
}
