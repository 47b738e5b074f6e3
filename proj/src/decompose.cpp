#include "sfd/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "json.hpp"

#include "sfd/error.hpp"
#include "sfd/format.hpp"

namespace sfd {

using njson = nlohmann::json;

int DecompositionModel::dense_index(int bin) const {
    auto it = std::lower_bound(filter_bins.begin(), filter_bins.end(), bin);
    if (it == filter_bins.end() || *it != bin) return -1;
    return int(it - filter_bins.begin());
}

namespace {

void check_dimensions(const DecompositionModel& m, const DesignSystem& sys) {
    if (m.note_count != sys.note_count || m.partial_count != sys.partial_count ||
        m.filter_bins != sys.occupied)
        throw ValidationError("model dimensions do not match the system");
}

// r value lookup by dense index for a system row
inline int dense_bin(const DesignSystem& sys, const SystemRow& row) {
    return sys.dense_index(row.bin);
}

}  // namespace

//----( solver blocks )----

DecompositionModel init_model(const DesignSystem& sys) {
    DecompositionModel m;
    m.name = sys.name;
    m.f0_lowest_hz = sys.f0_lowest_hz;
    m.note_count = sys.note_count;
    m.partial_count = sys.partial_count;
    m.weighting = sys.weighting;
    m.filter_bins = sys.occupied;
    m.filter_values.assign(sys.occupied.size(), 0.0);
    m.note_scale.assign(std::size_t(sys.note_count), 0.0);
    m.excitation.assign(std::size_t(sys.partial_count), 0.0);

    std::vector<double> num(std::size_t(sys.note_count), 0.0);
    std::vector<double> den(std::size_t(sys.note_count), 0.0);
    for (const SystemRow& row : sys.rows) {
        num[std::size_t(row.note - 1)] += row.weight * row.log_mag;
        den[std::size_t(row.note - 1)] += row.weight;
    }
    for (int i = 0; i < sys.note_count; ++i)
        m.note_scale[std::size_t(i)] = num[std::size_t(i)] / den[std::size_t(i)];

    std::vector<double> pnum(std::size_t(sys.partial_count), 0.0);
    std::vector<double> pden(std::size_t(sys.partial_count), 0.0);
    for (const SystemRow& row : sys.rows) {
        pnum[std::size_t(row.harmonic - 1)] +=
            row.weight * (row.log_mag - m.note_scale[std::size_t(row.note - 1)]);
        pden[std::size_t(row.harmonic - 1)] += row.weight;
    }
    for (int j = 0; j < sys.partial_count; ++j)
        m.excitation[std::size_t(j)] = pnum[std::size_t(j)] / pden[std::size_t(j)];
    return m;
}

void iterate_once(DecompositionModel& m, const DesignSystem& sys) {
    check_dimensions(m, sys);
    const std::size_t S = std::size_t(m.note_count);
    const std::size_t K = std::size_t(m.partial_count);
    const std::size_t N = m.filter_bins.size();
    std::vector<double> num(std::max({S, K, N}), 0.0);
    std::vector<double> den(std::max({S, K, N}), 0.0);

    auto refit_scale = [&]() {
        std::fill(num.begin(), num.begin() + S, 0.0);
        std::fill(den.begin(), den.begin() + S, 0.0);
        for (const SystemRow& row : sys.rows) {
            double rest = m.excitation[std::size_t(row.harmonic - 1)] +
                          m.filter_values[std::size_t(dense_bin(sys, row))];
            num[std::size_t(row.note - 1)] += row.weight * (row.log_mag - rest);
            den[std::size_t(row.note - 1)] += row.weight;
        }
        for (std::size_t i = 0; i < S; ++i) m.note_scale[i] = num[i] / den[i];
    };

    // (1) scaling given excitation and filter
    refit_scale();

    // (2) excitation given scaling and filter
    std::fill(num.begin(), num.begin() + K, 0.0);
    std::fill(den.begin(), den.begin() + K, 0.0);
    for (const SystemRow& row : sys.rows) {
        double rest = m.note_scale[std::size_t(row.note - 1)] +
                      m.filter_values[std::size_t(dense_bin(sys, row))];
        num[std::size_t(row.harmonic - 1)] += row.weight * (row.log_mag - rest);
        den[std::size_t(row.harmonic - 1)] += row.weight;
    }
    for (std::size_t j = 0; j < K; ++j) m.excitation[j] = num[j] / den[j];

    // (3) gauge shift: excitation of the fundamental reads zero
    const double delta = m.excitation[0];
    for (std::size_t j = 0; j < K; ++j) m.excitation[j] -= delta;
    for (std::size_t i = 0; i < S; ++i) m.note_scale[i] += delta;

    // (4) filter given scaling and excitation
    std::fill(num.begin(), num.begin() + N, 0.0);
    std::fill(den.begin(), den.begin() + N, 0.0);
    for (const SystemRow& row : sys.rows) {
        double rest = m.note_scale[std::size_t(row.note - 1)] +
                      m.excitation[std::size_t(row.harmonic - 1)];
        num[std::size_t(dense_bin(sys, row))] += row.weight * (row.log_mag - rest);
        den[std::size_t(dense_bin(sys, row))] += row.weight;
    }
    for (std::size_t k = 0; k < N; ++k) m.filter_values[k] = num[k] / den[k];

    // (5) scaling readjusted against the fresh excitation and filter
    refit_scale();
}

double metric(const DecompositionModel& m, const DesignSystem& sys) {
    check_dimensions(m, sys);
    double se = 0.0, sw = 0.0;
    for (const SystemRow& row : sys.rows) {
        double e = row.log_mag - m.note_scale[std::size_t(row.note - 1)] -
                   m.excitation[std::size_t(row.harmonic - 1)] -
                   m.filter_values[std::size_t(dense_bin(sys, row))];
        se += row.weight * e * e;
        sw += row.weight;
    }
    return std::sqrt(se / sw);
}

void canonicalize(DecompositionModel& m, const DesignSystem& sys) {
    check_dimensions(m, sys);
    const double delta = m.excitation[0];
    for (double& p : m.excitation) p -= delta;
    for (double& a : m.note_scale) a += delta;

    const std::size_t N = m.filter_bins.size();
    if (N < 2) {
        m.filter_detrended = false;
        return;
    }
    // weighted LS line through (bin, r) with per-bin weight = sum of row
    // weights; subtract it from r, compensate in a and p so every sum
    // a_i + p_j + r_n is untouched (exact because n = o_j + i)
    std::vector<double> bin_weight(N, 0.0);
    for (const SystemRow& row : sys.rows)
        bin_weight[std::size_t(dense_bin(sys, row))] += row.weight;
    double wsum = 0.0, xsum = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
        wsum += bin_weight[k];
        xsum += bin_weight[k] * m.filter_bins[k];
    }
    const double xbar = xsum / wsum;
    double sxx = 0.0, sxy = 0.0, ysum = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
        const double dx = m.filter_bins[k] - xbar;
        sxx += bin_weight[k] * dx * dx;
        sxy += bin_weight[k] * dx * m.filter_values[k];
        ysum += bin_weight[k] * m.filter_values[k];
    }
    const double slope = sxy / sxx;
    const double level = ysum / wsum; // value of the fit at xbar
    for (std::size_t k = 0; k < N; ++k)
        m.filter_values[k] -= level + slope * (m.filter_bins[k] - xbar);
    for (int i = 1; i <= m.note_count; ++i)
        m.note_scale[std::size_t(i - 1)] += level + slope * (i - xbar);
    for (int j = 1; j <= m.partial_count; ++j)
        m.excitation[std::size_t(j - 1)] += slope * sys.offsets[std::size_t(j - 1)];
    m.filter_detrended = true;
}

DecompositionModel solve(const UniformSeries& u, const SolverConfig& cfg) {
    if (cfg.max_iterations < 1)
        throw ValidationError("max_iterations must be >= 1");
    if (!(cfg.rel_tolerance > 0.0) || !(cfg.rel_tolerance < 1.0))
        throw ValidationError("rel_tolerance must satisfy 0 < tol < 1");

    BinGrid grid = build_grid(u);
    DesignSystem sys = assemble_system(u, grid, cfg.weighting);
    DecompositionModel m = init_model(sys);

    double prev = metric(m, sys);
    m.metric_history.push_back(prev);
    m.converged = prev < cfg.abs_metric_floor;
    while (!m.converged && m.iterations_used < cfg.max_iterations) {
        iterate_once(m, sys);
        ++m.iterations_used;
        const double cur = metric(m, sys);
        m.metric_history.push_back(cur);
        if (cur < cfg.abs_metric_floor ||
            std::abs(cur - prev) / std::max(prev, cfg.abs_metric_floor) < cfg.rel_tolerance)
            m.converged = true;
        prev = cur;
    }
    canonicalize(m, sys);
    m.final_metric = metric(m, sys);
    return m;
}

//----( evaluation )----

LogGrid reconstruct(const DecompositionModel& m, const DesignSystem& sys) {
    check_dimensions(m, sys);
    LogGrid g;
    g.note_count = sys.note_count;
    g.partial_count = sys.partial_count;
    g.value.assign(std::size_t(sys.note_count) * sys.partial_count, 0.0);
    g.mask.assign(g.value.size(), 0);
    for (const SystemRow& row : sys.rows) {
        std::size_t idx = std::size_t(row.note - 1) * sys.partial_count + row.harmonic - 1;
        g.value[idx] = m.note_scale[std::size_t(row.note - 1)] +
                       m.excitation[std::size_t(row.harmonic - 1)] +
                       m.filter_values[std::size_t(dense_bin(sys, row))];
        g.mask[idx] = 1;
    }
    return g;
}

LogGrid residuals(const DecompositionModel& m, const DesignSystem& sys) {
    LogGrid g = reconstruct(m, sys);
    for (const SystemRow& row : sys.rows) {
        std::size_t idx = std::size_t(row.note - 1) * sys.partial_count + row.harmonic - 1;
        g.value[idx] = row.log_mag - g.value[idx];
    }
    return g;
}

//----( model files )----

void write_model(const DecompositionModel& m, std::ostream& out) {
    out << "{\n";
    out << "  \"name\": \"" << json_escape(m.name) << "\",\n";
    out << "  \"f0_lowest_hz\": " << format_sci(m.f0_lowest_hz) << ",\n";
    out << "  \"S\": " << m.note_count << ",\n";
    out << "  \"K\": " << m.partial_count << ",\n";
    out << "  \"weighting\": \"" << to_string(m.weighting) << "\",\n";
    out << "  \"p\": [";
    for (std::size_t j = 0; j < m.excitation.size(); ++j)
        out << (j ? ", " : "") << format_sci(m.excitation[j]);
    out << "],\n";
    out << "  \"a\": [";
    for (std::size_t i = 0; i < m.note_scale.size(); ++i)
        out << (i ? ", " : "") << format_sci(m.note_scale[i]);
    out << "],\n";
    out << "  \"r\": [\n";
    for (std::size_t k = 0; k < m.filter_bins.size(); ++k)
        out << "    {\"n\": " << m.filter_bins[k]
            << ", \"value\": " << format_sci(m.filter_values[k]) << "}"
            << (k + 1 < m.filter_bins.size() ? "," : "") << "\n";
    out << "  ],\n";
    out << "  \"iterations_used\": " << m.iterations_used << ",\n";
    out << "  \"final_metric\": " << format_sci(m.final_metric) << ",\n";
    out << "  \"converged\": " << (m.converged ? "true" : "false") << "\n";
    out << "}\n";
}

void write_model_file(const DecompositionModel& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path.string() + " for writing");
    write_model(m, out);
    out.flush();
    if (!out) throw ParseError("failed writing " + path.string());
}

namespace {

const njson& model_member(const njson& obj, const char* key, const std::string& origin) {
    if (!obj.is_object()) throw ParseError(origin + ": /: expected object");
    auto it = obj.find(key);
    if (it == obj.end())
        throw ParseError(origin + ": /" + key + ": missing required field");
    return *it;
}

void require_finite(double v, const std::string& what, const std::string& origin) {
    if (!std::isfinite(v))
        throw ValidationError(origin + ": " + what + " must be finite");
}

}  // namespace

DecompositionModel parse_model(std::istream& in, const std::string& origin) {
    njson root;
    try {
        root = njson::parse(in);
    } catch (const njson::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
    DecompositionModel m;
    const njson& jname = model_member(root, "name", origin);
    if (!jname.is_string()) throw ParseError(origin + ": /name: expected string");
    m.name = jname.get<std::string>();

    const njson& jf0 = model_member(root, "f0_lowest_hz", origin);
    if (!jf0.is_number()) throw ParseError(origin + ": /f0_lowest_hz: expected number");
    m.f0_lowest_hz = jf0.get<double>();
    if (!(m.f0_lowest_hz > 0.0) || !std::isfinite(m.f0_lowest_hz))
        throw ValidationError(origin + ": f0_lowest_hz must be positive and finite");

    const njson& jS = model_member(root, "S", origin);
    const njson& jK = model_member(root, "K", origin);
    if (!jS.is_number_integer() || !jK.is_number_integer())
        throw ParseError(origin + ": /S and /K: expected integers");
    m.note_count = jS.get<int>();
    m.partial_count = jK.get<int>();
    if (m.note_count < 1 || m.partial_count < 1)
        throw ValidationError(origin + ": S and K must be >= 1");

    const njson& jw = model_member(root, "weighting", origin);
    if (!jw.is_string()) throw ParseError(origin + ": /weighting: expected string");
    m.weighting = weighting_from_string(jw.get<std::string>());

    const njson& jp = model_member(root, "p", origin);
    if (!jp.is_array() || int(jp.size()) != m.partial_count)
        throw ParseError(origin + ": /p: expected array of K numbers");
    for (const njson& v : jp) {
        if (!v.is_number()) throw ParseError(origin + ": /p: expected array of K numbers");
        m.excitation.push_back(v.get<double>());
        require_finite(m.excitation.back(), "p values", origin);
    }
    if (m.excitation.front() != 0.0)
        throw ValidationError(origin + ": p[0] must be exactly 0 (canonical gauge)");

    const njson& ja = model_member(root, "a", origin);
    if (!ja.is_array() || int(ja.size()) != m.note_count)
        throw ParseError(origin + ": /a: expected array of S numbers");
    for (const njson& v : ja) {
        if (!v.is_number()) throw ParseError(origin + ": /a: expected array of S numbers");
        m.note_scale.push_back(v.get<double>());
        require_finite(m.note_scale.back(), "a values", origin);
    }

    const njson& jr = model_member(root, "r", origin);
    if (!jr.is_array() || jr.empty())
        throw ParseError(origin + ": /r: expected non-empty array");
    for (std::size_t k = 0; k < jr.size(); ++k) {
        const njson& e = jr[k];
        std::string ptr = "/r/" + std::to_string(k);
        const njson& jn = model_member(e, "n", origin);
        const njson& jv = model_member(e, "value", origin);
        if (!jn.is_number_integer()) throw ParseError(origin + ": " + ptr + "/n: expected integer");
        if (!jv.is_number()) throw ParseError(origin + ": " + ptr + "/value: expected number");
        int bin = jn.get<int>();
        if (bin < 1) throw ValidationError(origin + ": " + ptr + "/n: bins are >= 1");
        if (!m.filter_bins.empty() && bin <= m.filter_bins.back())
            throw ValidationError(origin + ": " + ptr + "/n: bins must be strictly ascending");
        m.filter_bins.push_back(bin);
        m.filter_values.push_back(jv.get<double>());
        require_finite(m.filter_values.back(), "r values", origin);
    }

    const njson& jit = model_member(root, "iterations_used", origin);
    if (!jit.is_number_integer())
        throw ParseError(origin + ": /iterations_used: expected integer");
    m.iterations_used = jit.get<int>();

    const njson& jm = model_member(root, "final_metric", origin);
    if (!jm.is_number()) throw ParseError(origin + ": /final_metric: expected number");
    m.final_metric = jm.get<double>();

    const njson& jc = model_member(root, "converged", origin);
    if (!jc.is_boolean()) throw ParseError(origin + ": /converged: expected boolean");
    m.converged = jc.get<bool>();

    m.filter_detrended = m.filter_bins.size() >= 2; // written models are canonical
    return m;
}

DecompositionModel parse_model_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return parse_model(in, path.string());
}

}  // namespace sfd
