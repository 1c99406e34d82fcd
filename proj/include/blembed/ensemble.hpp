#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace blembed {

struct EmbeddingSample {
    double T = 0.0;
    double bt = 0.0;
    double w1 = 0.0;
};

/// Output of a Bass-embedding simulation, in path-index order.
struct EmbeddingEnsemble {
    std::vector<EmbeddingSample> samples;
    int n_steps = 0;
    std::uint64_t seed = 0;
    double A = 1.0;
    double mean_g = 0.0;
    /// Paths whose simulated T exceeded A.
    std::size_t clamp_count = 0;
    /// Label of the transport the ensemble was drawn from; consumers that also
    /// receive a transport compare against it.
    std::string source;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

/// %.17g: round-trips every double.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_ensemble_csv(const EmbeddingEnsemble& e, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "path,T,bt,w1\n";
    for (std::size_t i = 0; i < e.samples.size(); ++i) {
        const auto& s = e.samples[i];
        out << i << ',' << format_g17(s.T) << ',' << format_g17(s.bt) << ',' << format_g17(s.w1) << '\n';
    }
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

} // namespace blembed
