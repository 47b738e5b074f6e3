#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "sfd/spectra.hpp"

namespace sfd {

//----( weighting modes )----

// Row weight of a grid entry with linear magnitude D:
//   uniform -> 1, magnitude -> D, power -> D^2.
enum class Weighting { uniform, magnitude, power };

std::string to_string(Weighting w);
Weighting weighting_from_string(const std::string& s);

//----( semitone bin arithmetic )----

/** Semitone offset of harmonic j above the fundamental:
 *      o_j = floor(12*log2(j) + 1/2)
 *  computed exactly as floor((msb(j^24) + 1) / 2) in integer arithmetic,
 *  so exact half-integers (j a power of two) floor downward identically
 *  on every platform. o_1 = 0, o_2 = 12, o_3 = 19, ... */
int partial_offset(int harmonic);

// Absolute semitone bin of (note i, harmonic j), 1-based: o_j + i.
// Bin 1 is the lowest note's fundamental. Throws on indices < 1.
int bin_index(int note, int harmonic);

// The semitone bins a uniform series can reach, and which are occupied
// by at least one usable entry.
struct BinGrid {
    int note_count = 0;   // S
    int partial_count = 0; // K
    std::vector<int> offsets;  // offsets[j-1] = partial_offset(j)
    std::vector<int> occupied; // sorted ascending, non-empty
    int span() const { return offsets.back() + note_count; } // largest possible bin
};

BinGrid build_grid(const UniformSeries& u);

//----( the stacked log-linear system )----

// One measurement: ln(D_ij) ~ a_i + p_j + r_n with weight w.
struct SystemRow {
    int note = 0;     // i, 1-based
    int harmonic = 0; // j, 1-based
    int bin = 0;      // n = partial_offset(j) + note
    double log_mag = 0.0;
    double weight = 0.0;
};

// Sparse triple form of the incidence system. Column layout:
// [p_1..p_K | a_1..a_S | r over occupied bins, ascending]. Rows are
// harmonic-major: all notes of harmonic 1, then harmonic 2, ...
// Weights are normalized so they sum to the row count.
struct DesignSystem {
    std::string name;
    double f0_lowest_hz = 0.0;
    int note_count = 0;    // S
    int partial_count = 0; // K
    Weighting weighting = Weighting::magnitude;
    std::vector<int> offsets;
    std::vector<int> occupied;
    std::vector<SystemRow> rows;
    std::vector<int> bin_to_dense; // index by bin value, -1 = unoccupied

    int dense_index(int bin) const {
        return (bin >= 0 && bin < int(bin_to_dense.size())) ? bin_to_dense[bin] : -1;
    }
    int column_count() const {
        return partial_count + note_count + int(occupied.size());
    }
};

DesignSystem assemble_system(const UniformSeries& u, const BinGrid& grid,
                             Weighting weighting);

//----( structural diagnostics )----

// Three integer vectors (column layout [p | a | r]) that the incidence
// matrix sends to zero exactly:
//   v1: p += 1, a -= 1        (constant trade excitation <-> scaling)
//   v2: r += 1, a -= 1        (constant trade filter <-> scaling)
//   v3: p_j += o_j, a_i += i, r_n -= n   (linear-in-log-frequency trade)
std::array<std::vector<long long>, 3> null_space_basis(const BinGrid& grid);

// Exact integer rank via fraction-free (Bareiss) elimination with
// column-skipping pivoting. drop_first_excitation removes the p_1 column
// first. Throws SizeGuardError when rows*cols > 2e6.
int rank_oracle(const DesignSystem& sys, bool drop_first_excitation = false);

// Portable bitmap (P1) of the incidence matrix: one text row per system
// row, column blocks [P | A | R] left to right, '1' where the row hits
// the column.
void write_incidence_pbm(const DesignSystem& sys, std::ostream& out);

}  // namespace sfd
