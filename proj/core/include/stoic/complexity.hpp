#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stoic/config.hpp"

namespace stoic {

/// Static per-layer parameter and multiply-accumulate accounting.
///
/// Counting convention (documented in every emitted report): one MAC is one
/// multiply-accumulate; GMAC = 1e9 MACs. Convolutions count every kernel tap
/// including zero-padding taps; attention counts the QKV/output projections
/// (4 T L^2) plus the score and value contractions (2 T^2 L); normalization,
/// softmax, activations and other elementwise work count zero MACs.
struct ComplexityReport {
    struct Row {
        std::string path;
        int64_t params = 0;
        int64_t macs = 0;
    };
    std::vector<Row> rows;
    int64_t total_params = 0;
    int64_t total_macs = 0;

    double gmacs() const { return static_cast<double>(total_macs) / 1e9; }
    std::string to_string() const;
};

/// One-line statement of the counting convention above.
extern const char* kMacConventionNote;

/// Parameter counts per layer (MAC columns left at zero).
ComplexityReport param_count(const StoicConfig& config);

/// Parameter and MAC counts for one forward evaluation at the given batch.
ComplexityReport mac_count(const StoicConfig& config, int batch = 1);

/// Writes a CSV `stride,L,N,params,gmacs` with one row per configuration.
/// Rejects an empty list and unwritable paths.
void scaling_table(const std::vector<StoicConfig>& configs, const std::string& output_path);

/// Same table serialized to a string (header + one line per config).
std::string scaling_table_csv(const std::vector<StoicConfig>& configs);

}  // namespace stoic
