// Monte Carlo runner: sweeps an SNR grid, averages per-trial MSEs and writes
// a CSV (plus an optional plot script). Exit codes: 0 success, 1 bad
// configuration, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "muekf/harness.hpp"

namespace {

std::string plot_script_path(const std::string& csv_path) {
    const std::size_t dot = csv_path.rfind('.');
    const std::size_t slash = csv_path.find_last_of("/\\");
    const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
    return (has_ext ? csv_path.substr(0, dot) : csv_path) + "_plot.py";
}

}  // namespace

int main(int argc, char** argv) {
    std::string config_path;
    std::string snr_text;
    std::string mode_text;
    std::string out_flag;
    long long trials = 0;
    long long seed = 0;
    long long users = 0;
    long long antennas = 0;
    long long n_fft = 0;
    double cfo_range = 0.0;
    bool emit_plot_flag = false;

    CLI::App app{"Monte Carlo runner for the time-shared multi-user EKF estimator"};
    app.add_option("--config", config_path, "key=value configuration file");
    app.add_option("--snr-db", snr_text, "comma-separated SNR grid in dB ('inf' = noiseless)");
    app.add_option("--trials", trials, "independent trials per SNR point");
    app.add_option("--mode", mode_text,
                   "full | no_mitigation | no_tracking | full_state_baseline | ls_oracle");
    app.add_option("--seed", seed, "master seed for reproducible runs");
    app.add_option("--out", out_flag, "output CSV path (default results.csv)");
    app.add_flag("--emit-plot", emit_plot_flag, "also write a matplotlib script for the CSV");
    app.add_option("--users", users, "number of TX users");
    app.add_option("--antennas", antennas, "number of RX antennas");
    app.add_option("--n-fft", n_fft, "training symbol length (power of two)");
    app.add_option("--cfo-range", cfo_range, "CFO truths drawn uniformly from +-range");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    muekf::RunConfig run;
    std::string out_path = "results.csv";
    bool emit_plot = false;

    if (!config_path.empty()) {
        std::string error;
        if (!muekf::load_run_config(config_path, run, out_path, emit_plot, error)) {
            std::fprintf(stderr, "error: %s\n", error.c_str());
            return 1;
        }
    }

    // command line wins over the config file
    try {
        if (app.count("--snr-db") > 0) run.snr_grid_db = muekf::parse_snr_list(snr_text);
        if (app.count("--trials") > 0) run.trials = static_cast<int>(trials);
        if (app.count("--mode") > 0) run.mode = muekf::parse_mode(mode_text);
        if (app.count("--seed") > 0) run.master_seed = static_cast<std::uint64_t>(seed);
        if (app.count("--users") > 0) run.num_users = static_cast<int>(users);
        if (app.count("--antennas") > 0) run.num_antennas = static_cast<int>(antennas);
        if (app.count("--n-fft") > 0) run.n_fft = static_cast<int>(n_fft);
        if (app.count("--cfo-range") > 0) run.cfo_range = cfo_range;
        if (app.count("--out") > 0) out_path = out_flag;
        if (emit_plot_flag) emit_plot = true;

        if (run.trials <= 0) throw std::invalid_argument("trials must be positive");
        if (run.snr_grid_db.empty()) throw std::invalid_argument("SNR grid is empty");
    } catch (const std::invalid_argument& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 1;
    }

    try {
        const muekf::ResultTable table = muekf::run_monte_carlo(run);
        muekf::emit_csv(table, out_path);
        std::printf("wrote %s (%zu SNR points, %d trials each, mode %s)\n", out_path.c_str(),
                    table.rows.size(), run.trials, muekf::mode_name(run.mode));
        if (emit_plot) {
            const std::string script = plot_script_path(out_path);
            muekf::emit_plot_script(script, out_path);
            std::printf("wrote %s\n", script.c_str());
        }
    } catch (const std::invalid_argument& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 1;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "runtime error: %s\n", ex.what());
        return 2;
    }
    return 0;
}
