#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "muekf/metrics.hpp"
#include "muekf/sigmodel.hpp"

namespace muekf {

enum class RunMode {
    full,                 // time-shared EKF, mitigation + noise tracking on
    no_mitigation,        // interference subtraction disabled
    no_tracking,          // noise variance pinned at its initial guess
    full_state_baseline,  // joint EKF over the stacked state
    ls_oracle,            // known-CFO least squares, channel reference
};

const char* mode_name(RunMode mode);
RunMode parse_mode(const std::string& name);  // throws std::invalid_argument

struct RunConfig {
    int num_users = 4;
    int num_antennas = 4;
    int n_fft = 2048;
    double cfo_range = 2.0;
    ChannelProfile profile = sui3_profile();
    std::vector<double> snr_grid_db = {10.0, 15.0, 20.0, 25.0, 30.0};
    int trials = 100;
    RunMode mode = RunMode::full;
    std::uint64_t master_seed = 1;
};

struct ResultRow {
    double snr_db = 0.0;
    RunMode mode = RunMode::full;
    int trials = 0;
    double mse_cfo = 0.0;
    double mse_chan = 0.0;
    double crb_cfo = 0.0;
    double crb_chan = 0.0;
};

struct ResultTable {
    std::vector<ResultRow> rows;  // one per SNR point, ascending snr_db
};

// Runs config.trials independent scenarios per SNR point. Each trial draws
// its own symbols, channels, CFOs and noise from a seed derived from
// (master_seed, snr index, trial index), so results are reproducible and
// trials are independent across the grid.
ResultTable run_monte_carlo(const RunConfig& config);

// Deterministic sum with pairwise splitting; result does not depend on
// platform-specific accumulation quirks and is stable to append order only.
double pairwise_sum(const std::vector<double>& values);

// CSV with header snr_db,mode,trials,mse_cfo,mse_chan,crb_cfo,crb_chan.
// Numbers are plain decimal (no exponent notation), 12 significant digits,
// LF line endings.
std::string format_csv(const ResultTable& table);
void emit_csv(const ResultTable& table, const std::string& path);
std::string format_number(double v);

// Writes a self-contained matplotlib script that reads the CSV (path baked
// in, overridable via argv) and saves one PNG per metric with the bound
// overlaid.
void emit_plot_script(const std::string& script_path, const std::string& csv_path);

// key=value config file, '#' comments. Unknown keys are errors. Returns
// false and fills `error` on any problem. `out_path` and `emit_plot` are
// only assigned when the file sets them.
bool load_run_config(const std::string& path, RunConfig& config, std::string& out_path,
                     bool& emit_plot, std::string& error);

std::vector<double> parse_snr_list(const std::string& text);  // throws std::invalid_argument

}  // namespace muekf
