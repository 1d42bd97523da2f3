#pragma once

#include "icfluc/metrics.hpp"
#include "icfluc/pdb_io.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace icfluc {

// Flat, fully explicit run configuration; every field maps to one CLI flag
// and one `key=value` line of the config file. All randomness flows from
// `seed` (the baseline sampler uses seed + 1).
struct RunConfig {
    std::string input;
    std::string output_dir = "icfluc-out";

    double a = 1.0;                           // prior strength
    std::string target_source = "from-data";  // from-data | file | uniform
    std::string target_file;
    double target_value = 1.0;                // A^2, uniform source only

    double tol = 1e-2;
    int max_iters = 500;
    double damping = 0.5;

    int n_samples = 100;
    std::uint64_t seed = 0;

    bool superpose = false;  // mode of the headline profile comparison
    int rama_bins = 60;
    int tica_bins = 100;
    int tica_lag = 100;
    std::string baseline = "none";  // none | empirical | oas | diagonal
    bool ideal_lengths = false;
    bool use_sidecar = true;

    void validate() const;
    // Canonical key=value serialization (fixed key order, %.17g numbers).
    std::string canonical_string() const;
    // FNV-1a of the canonical string, 16 hex digits; stamped on every table.
    std::string hash() const;
};

struct RunReport {
    std::string config_hash;
    bool fit_converged = false;
    int fit_iterations = 0;
    double fit_max_residual = 0.0;
    std::string baseline_used = "none";
    bool baseline_substituted = false;
    bool tica_ran = false;
    std::map<std::string, double> metrics;
    std::vector<std::string> warnings;
    std::vector<std::string> outputs;  // files written, relative to output_dir
};

// ingest -> statistics -> jacobians -> prior -> lambda fit -> sampling ->
// metrics, with every artifact written under output_dir. Errors from the
// stages propagate with a stage label; non-convergence is reported, not
// thrown.
RunReport run_pipeline(const RunConfig& config);

// Deterministic table writer: "# config <hash>" comment, one header line,
// %.17g cells. Shared by the pipeline and the CLI subcommands.
void write_csv(const std::string& path, const std::string& config_hash,
               const std::string& header,
               const std::vector<std::vector<double>>& rows);

void write_histogram_csv(const std::string& path, const std::string& config_hash,
                         const Histogram2D& histogram);

// Per-atom target file: rows of "atom,c" (A^2), `#` comments ignored.
Eigen::VectorXd read_target_file(const std::string& path, int atom_count);

std::string format_double(double v);  // %.17g

}  // namespace icfluc
