#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bkd/coherence.hpp"
#include "bkd/core_matrix.hpp"
#include "bkd/errors.hpp"
#include "bkd/version.hpp"

namespace bkd {

using Json = nlohmann::ordered_json;

// %.17g round-trips doubles exactly and keeps files byte-stable.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Write via a temporary in the same directory plus rename, so a crashed or
// failed run never leaves a partial file behind.
inline void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw error("cannot open for writing: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::remove(tmp.c_str());
            throw error("write failed: " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw error("rename failed: " + path);
    }
}

inline std::string phase_csv(const std::vector<PhaseRow>& rows) {
    std::string out = "mu,region,omega_plus_or_c_plus,omega_minus_or_c_minus,kind_plus,kind_minus\n";
    for (const PhaseRow& r : rows) {
        out += format_double(r.mu);
        out += ',';
        out += r.region;
        out += ',';
        out += format_double(r.rate_plus);
        out += ',';
        out += format_double(r.rate_minus);
        out += ',';
        out += r.kind_plus;
        out += ',';
        out += r.kind_minus;
        out += '\n';
    }
    return out;
}

// Single-mu series: one row per grid point, NaN rows past the horizon.
inline std::string g2_csv(const CoherenceSeries& s) {
    std::string out = "t,g2,leakage\n";
    for (int k = 0; k < s.grid.points; ++k) {
        const std::size_t i = static_cast<std::size_t>(k);
        out += format_double(s.grid.time(k));
        out += ',';
        out += format_double(s.values[i]);
        out += ',';
        out += format_double(s.leak[i]);
        out += '\n';
    }
    return out;
}

// Long-format matrix: |mu grid| x |t grid| rows.
inline std::string g2_matrix_csv(const std::vector<CoherenceSeries>& series) {
    std::string out = "mu,t,g2,leakage\n";
    for (const CoherenceSeries& s : series) {
        for (int k = 0; k < s.grid.points; ++k) {
            const std::size_t i = static_cast<std::size_t>(k);
            out += format_double(s.mu);
            out += ',';
            out += format_double(s.grid.time(k));
            out += ',';
            out += format_double(s.values[i]);
            out += ',';
            out += format_double(s.leak[i]);
            out += '\n';
        }
    }
    return out;
}

inline std::string dmu_csv(const DmuCurve& c) {
    std::string out = "mu,D_mu\n";
    for (std::size_t i = 0; i < c.mu.size(); ++i) {
        out += format_double(c.mu[i]);
        out += ',';
        out += format_double(c.value[i]);
        out += '\n';
    }
    return out;
}

inline std::string spectrum_csv(const std::vector<double>& energies) {
    std::string out = "k,energy\n";
    for (std::size_t i = 0; i < energies.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += format_double(energies[i]);
        out += '\n';
    }
    return out;
}

// Metadata sidecar written next to every CSV; carries whatever is needed to
// reproduce the file exactly (worker count deliberately excluded: results
// are bit-identical across worker counts).
inline void write_meta(const std::string& csv_path, const Json& meta) {
    Json j = meta;
    j["version"] = version_string;
    atomic_write(csv_path + ".meta.json", j.dump(2) + "\n");
}

}  // namespace bkd
