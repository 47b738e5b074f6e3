#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sfd/grid.hpp"

namespace sfd {

struct SolverConfig {
    int max_iterations = 100;
    double rel_tolerance = 1e-3;    // relative metric change that counts as converged
    double abs_metric_floor = 1e-12;
    Weighting weighting = Weighting::magnitude;
    long long seed = 0;             // reserved; the solver is deterministic
};

// Fitted decomposition ln(D_ij) ~ a_i + p_j + r_n in canonical gauge:
// excitation[0] == 0 and the filter curve is detrended (weighted LS
// intercept and slope against bin index are zero).
struct DecompositionModel {
    std::string name;
    double f0_lowest_hz = 0.0;
    int note_count = 0;    // S
    int partial_count = 0; // K
    Weighting weighting = Weighting::magnitude;
    std::vector<double> excitation;     // p, size K
    std::vector<double> note_scale;     // a, size S
    std::vector<int> filter_bins;       // occupied bins, ascending
    std::vector<double> filter_values;  // r, parallel to filter_bins
    int iterations_used = 0;
    double final_metric = 0.0;  // weighted RMS log residual
    bool converged = false;

    // In-memory diagnostics, not serialized:
    bool filter_detrended = false;      // false when < 2 occupied bins
    std::vector<double> metric_history; // metric after init, then per iteration

    int dense_index(int bin) const; // position in filter_bins, -1 if absent
};

//----( solver )----

// a_i = weighted row mean of d; p_j = weighted column mean of (d - a_i);
// r = 0. Pre-canonical.
DecompositionModel init_model(const DesignSystem& sys);

// One alternating pass, each block update the exact weighted LS minimizer:
// (1) a given (p,r); (2) p given (a,r); (3) gauge shift p_1 -> 0;
// (4) r given (a,p); (5) a again. The objective never increases.
void iterate_once(DecompositionModel& model, const DesignSystem& sys);

// sqrt( sum w*(d - a_i - p_j - r_n)^2 / sum w ).
double metric(const DecompositionModel& model, const DesignSystem& sys);

// Moves the model to canonical gauge without changing any reconstruction:
// shift so p_1 = 0, then subtract the weighted LS line (per-bin weight =
// sum of row weights) from r, compensating in a and p. Idempotent. With
// fewer than 2 occupied bins the detrend step is skipped and
// filter_detrended stays false.
void canonicalize(DecompositionModel& model, const DesignSystem& sys);

// init + iterate until the relative metric change drops below
// cfg.rel_tolerance, the metric falls below cfg.abs_metric_floor, or
// max_iterations; then canonicalize. Non-convergence is not an error:
// the model comes back with converged = false. Deterministic.
DecompositionModel solve(const UniformSeries& u, const SolverConfig& cfg);

//----( evaluation )----

// d_hat[i][j] = a_i + p_j + r_n on usable cells.
LogGrid reconstruct(const DecompositionModel& model, const DesignSystem& sys);

// d - d_hat on usable cells.
LogGrid residuals(const DecompositionModel& model, const DesignSystem& sys);

//----( model files )----

// JSON schema (>= 15 significant digits): {"name", "f0_lowest_hz", "S",
// "K", "weighting", "p": [K], "a": [S], "r": [{"n", "value"}],
// "iterations_used", "final_metric", "converged"}.
void write_model(const DecompositionModel& model, std::ostream& out);
void write_model_file(const DecompositionModel& model,
                      const std::filesystem::path& path);
DecompositionModel parse_model(std::istream& in, const std::string& origin);
DecompositionModel parse_model_file(const std::filesystem::path& path);

}  // namespace sfd
