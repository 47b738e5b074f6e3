#include "sfd/grid.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <boost/multiprecision/cpp_int.hpp>

#include "sfd/error.hpp"

namespace sfd {

namespace mp = boost::multiprecision;

//----( weighting modes )----

std::string to_string(Weighting w) {
    switch (w) {
        case Weighting::uniform: return "uniform";
        case Weighting::magnitude: return "magnitude";
        case Weighting::power: return "power";
    }
    return "magnitude";
}

Weighting weighting_from_string(const std::string& s) {
    if (s == "uniform") return Weighting::uniform;
    if (s == "magnitude") return Weighting::magnitude;
    if (s == "power") return Weighting::power;
    throw ParseError("unknown weighting '" + s + "' (expected uniform|magnitude|power)");
}

//----( semitone bin arithmetic )----

int partial_offset(int harmonic) {
    if (harmonic < 1)
        throw ValidationError("harmonic index must be >= 1, got " + std::to_string(harmonic));
    // floor(12*log2(j) + 1/2) = floor((24*log2(j) + 1) / 2)
    //                         = floor((floor(24*log2(j)) + 1) / 2)
    // (the inner floor is safe: 24*log2(j) is integral only when j is a
    // power of two, and then it is already an integer), and
    // floor(24*log2(j)) = msb(j^24). Integer arithmetic throughout.
    mp::cpp_int p = mp::pow(mp::cpp_int(harmonic), 24);
    return int((mp::msb(p) + 1) / 2);
}

int bin_index(int note, int harmonic) {
    if (note < 1)
        throw ValidationError("note index must be >= 1, got " + std::to_string(note));
    return partial_offset(harmonic) + note;
}

BinGrid build_grid(const UniformSeries& u) {
    BinGrid grid;
    grid.note_count = u.note_count;
    grid.partial_count = u.partial_count;
    grid.offsets.resize(u.partial_count);
    for (int j = 1; j <= u.partial_count; ++j)
        grid.offsets[j - 1] = partial_offset(j);
    std::vector<std::uint8_t> seen(std::size_t(grid.span()) + 1, 0);
    for (int i = 1; i <= u.note_count; ++i)
        for (int j = 1; j <= u.partial_count; ++j)
            if (u.usable(i, j)) seen[std::size_t(grid.offsets[j - 1] + i)] = 1;
    for (std::size_t n = 1; n < seen.size(); ++n)
        if (seen[n]) grid.occupied.push_back(int(n));
    if (grid.occupied.empty())
        throw ValidationError("series occupies no bins (every entry masked)");
    return grid;
}

//----( system assembly )----

DesignSystem assemble_system(const UniformSeries& u, const BinGrid& grid,
                             Weighting weighting) {
    DesignSystem sys;
    sys.name = u.name;
    sys.f0_lowest_hz = u.f0_lowest_hz;
    sys.note_count = u.note_count;
    sys.partial_count = u.partial_count;
    sys.weighting = weighting;
    sys.offsets = grid.offsets;
    sys.occupied = grid.occupied;
    sys.bin_to_dense.assign(std::size_t(grid.span()) + 1, -1);
    for (std::size_t k = 0; k < sys.occupied.size(); ++k)
        sys.bin_to_dense[std::size_t(sys.occupied[k])] = int(k);

    // harmonic-major row order: row (j-1)*S + (i-1)
    double weight_sum = 0.0;
    for (int j = 1; j <= u.partial_count; ++j) {
        for (int i = 1; i <= u.note_count; ++i) {
            if (!u.usable(i, j)) continue;
            double mag = u.at(i, j);
            double w = 1.0;
            if (weighting == Weighting::magnitude) w = mag;
            else if (weighting == Weighting::power) w = mag * mag;
            SystemRow row;
            row.note = i;
            row.harmonic = j;
            row.bin = grid.offsets[j - 1] + i;
            row.log_mag = std::log(mag);
            row.weight = w;
            weight_sum += w;
            sys.rows.push_back(row);
        }
    }
    const double scale = double(sys.rows.size()) / weight_sum;
    for (SystemRow& row : sys.rows) row.weight *= scale;
    return sys;
}

//----( null-space basis )----

std::array<std::vector<long long>, 3> null_space_basis(const BinGrid& grid) {
    const int S = grid.note_count, K = grid.partial_count;
    const int N = int(grid.occupied.size());
    const int cols = K + S + N;
    std::array<std::vector<long long>, 3> basis;
    for (auto& v : basis) v.assign(std::size_t(cols), 0);
    for (int j = 1; j <= K; ++j) {
        basis[0][std::size_t(j - 1)] = 1;
        basis[2][std::size_t(j - 1)] = grid.offsets[j - 1];
    }
    for (int i = 1; i <= S; ++i) {
        basis[0][std::size_t(K + i - 1)] = -1;
        basis[1][std::size_t(K + i - 1)] = -1;
        basis[2][std::size_t(K + i - 1)] = i;
    }
    for (int k = 0; k < N; ++k) {
        basis[1][std::size_t(K + S + k)] = 1;
        basis[2][std::size_t(K + S + k)] = -grid.occupied[std::size_t(k)];
    }
    return basis;
}

//----( exact rank )----

int rank_oracle(const DesignSystem& sys, bool drop_first_excitation) {
    const long long rows = (long long)sys.rows.size();
    const long long cols = sys.column_count() - (drop_first_excitation ? 1 : 0);
    if (rows * cols > 2'000'000)
        throw SizeGuardError("rank oracle refused: " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " exceeds 2e6 entries");

    // dense 0/1 matrix in exact integers
    std::vector<std::vector<mp::cpp_int>> m(static_cast<std::size_t>(rows));
    for (std::size_t r = 0; r < std::size_t(rows); ++r) {
        m[r].assign(std::size_t(cols), 0);
        const SystemRow& row = sys.rows[r];
        int cp = row.harmonic - 1;                                  // p block
        int ca = sys.partial_count + row.note - 1;                  // a block
        int cr = sys.partial_count + sys.note_count + sys.dense_index(row.bin);
        if (drop_first_excitation) {
            if (cp > 0) m[r][std::size_t(cp - 1)] = 1;
            m[r][std::size_t(ca - 1)] = 1;
            m[r][std::size_t(cr - 1)] = 1;
        } else {
            m[r][std::size_t(cp)] = 1;
            m[r][std::size_t(ca)] = 1;
            m[r][std::size_t(cr)] = 1;
        }
    }

    // fraction-free (Bareiss) elimination; zero columns are skipped, so the
    // divisions stay exact with the last accepted pivot as denominator
    int rank = 0;
    mp::cpp_int prev = 1;
    for (long long c = 0; c < cols && rank < rows; ++c) {
        long long pivot = -1;
        for (long long r = rank; r < rows; ++r)
            if (m[std::size_t(r)][std::size_t(c)] != 0) { pivot = r; break; }
        if (pivot < 0) continue;
        std::swap(m[std::size_t(rank)], m[std::size_t(pivot)]);
        const auto& prow = m[std::size_t(rank)];
        for (long long r = rank + 1; r < rows; ++r) {
            auto& row = m[std::size_t(r)];
            if (row[std::size_t(c)] == 0) {
                if (prow[std::size_t(c)] != prev) // still rescale for exactness
                    for (long long c2 = c + 1; c2 < cols; ++c2)
                        row[std::size_t(c2)] = prow[std::size_t(c)] * row[std::size_t(c2)] / prev;
                continue;
            }
            for (long long c2 = c + 1; c2 < cols; ++c2)
                row[std::size_t(c2)] =
                    (prow[std::size_t(c)] * row[std::size_t(c2)] -
                     row[std::size_t(c)] * prow[std::size_t(c2)]) / prev;
            row[std::size_t(c)] = 0;
        }
        prev = prow[std::size_t(c)];
        ++rank;
    }
    return rank;
}

//----( incidence bitmap )----

void write_incidence_pbm(const DesignSystem& sys, std::ostream& out) {
    const int cols = sys.column_count();
    out << "P1\n" << cols << " " << sys.rows.size() << "\n";
    std::string line(std::size_t(cols), '0');
    for (const SystemRow& row : sys.rows) {
        int cp = row.harmonic - 1;
        int ca = sys.partial_count + row.note - 1;
        int cr = sys.partial_count + sys.note_count + sys.dense_index(row.bin);
        line[std::size_t(cp)] = line[std::size_t(ca)] = line[std::size_t(cr)] = '1';
        out << line << "\n";
        line[std::size_t(cp)] = line[std::size_t(ca)] = line[std::size_t(cr)] = '0';
    }
}

}  // namespace sfd
