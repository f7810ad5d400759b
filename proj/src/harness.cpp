#include "muekf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "muekf/rng.hpp"
#include "muekf/scheduler.hpp"

namespace muekf {

const char* mode_name(RunMode mode) {
    switch (mode) {
        case RunMode::full: return "full";
        case RunMode::no_mitigation: return "no_mitigation";
        case RunMode::no_tracking: return "no_tracking";
        case RunMode::full_state_baseline: return "full_state_baseline";
        case RunMode::ls_oracle: return "ls_oracle";
    }
    throw std::invalid_argument("mode_name: unknown mode");
}

RunMode parse_mode(const std::string& name) {
    for (RunMode m : {RunMode::full, RunMode::no_mitigation, RunMode::no_tracking,
                      RunMode::full_state_baseline, RunMode::ls_oracle}) {
        if (name == mode_name(m)) return m;
    }
    throw std::invalid_argument("unknown mode '" + name +
                                "' (expected full, no_mitigation, no_tracking, "
                                "full_state_baseline or ls_oracle)");
}

double pairwise_sum(const std::vector<double>& values) {
    // recursion bottoms out on short runs; splitting keeps the result
    // independent of how large the trial count grows
    struct Impl {
        static double sum(const double* v, std::size_t n) {
            if (n <= 8) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += v[i];
                return s;
            }
            const std::size_t half = n / 2;
            return sum(v, half) + sum(v + half, n - half);
        }
    };
    return Impl::sum(values.data(), values.size());
}

namespace {

double mean_of(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean over empty set");
    return pairwise_sum(values) / static_cast<double>(values.size());
}

}  // namespace

ResultTable run_monte_carlo(const RunConfig& config) {
    if (config.trials <= 0) throw std::invalid_argument("run_monte_carlo: trials must be positive");
    if (config.snr_grid_db.empty()) {
        throw std::invalid_argument("run_monte_carlo: empty SNR grid");
    }

    // rows come out sorted by SNR; seeds key off the sorted position, so a
    // permuted input grid produces the identical table
    std::vector<double> grid = config.snr_grid_db;
    std::sort(grid.begin(), grid.end());

    ResultTable table;
    table.rows.reserve(grid.size());
    for (std::size_t snr_index = 0; snr_index < grid.size(); ++snr_index) {
        const double snr_db = grid[snr_index];
        const double snr_linear = std::pow(10.0, snr_db / 10.0);

        std::vector<double> cfo_scores;
        std::vector<double> chan_scores;
        cfo_scores.reserve(config.trials);
        chan_scores.reserve(config.trials);

        for (int trial = 0; trial < config.trials; ++trial) {
            ScenarioConfig sc;
            sc.num_users = config.num_users;
            sc.num_antennas = config.num_antennas;
            sc.n_fft = config.n_fft;
            sc.cfo_range = config.cfo_range;
            sc.profile = config.profile;
            sc.snr_linear = snr_linear;
            sc.seed = mix_seed(config.master_seed, static_cast<std::uint64_t>(snr_index + 1),
                               static_cast<std::uint64_t>(trial + 1));

            const Scenario scenario = generate_scenario(sc);
            const RxFrame frame =
                synthesize_rx_frame(scenario.config, scenario.symbols, scenario.channels);
            const auto delays = scenario.link_delays();

            MseReport report;
            switch (config.mode) {
                case RunMode::full: {
                    const FrameEstimates est =
                        run_frame(scenario.config, frame, scenario.symbols, delays);
                    report = score_frame(scenario, est);
                    break;
                }
                case RunMode::no_mitigation: {
                    EstimatorOptions options;
                    options.flags.mitigation_enabled = false;
                    const FrameEstimates est =
                        run_frame(scenario.config, frame, scenario.symbols, delays, options);
                    report = score_frame(scenario, est);
                    break;
                }
                case RunMode::no_tracking: {
                    EstimatorOptions options;
                    options.flags.tracking_enabled = false;
                    // fixed_sigma2 < 0 resolves to the frame's background noise
                    // variance: the filter trusts the thermal floor and ignores
                    // residual interference, which is what this ablation probes
                    const FrameEstimates est =
                        run_frame(scenario.config, frame, scenario.symbols, delays, options);
                    report = score_frame(scenario, est);
                    break;
                }
                case RunMode::full_state_baseline: {
                    const FrameEstimates est =
                        full_state_ekf_run(scenario.config, frame, scenario.symbols, delays);
                    report = score_frame(scenario, est);
                    break;
                }
                case RunMode::ls_oracle: {
                    const auto taps =
                        ls_oracle(frame, scenario.symbols, delays, scenario.config.cfo_truth);
                    report.mse_cfo.assign(config.num_users, 0.0);  // CFO is given
                    report.mse_chan.reserve(taps.size());
                    for (int u = 0; u < config.num_users; ++u) {
                        for (int m = 0; m < config.num_antennas; ++m) {
                            report.mse_chan.push_back(mse_channel(
                                taps[static_cast<std::size_t>(u) * config.num_antennas + m],
                                scenario.link(u, m).taps));
                        }
                    }
                    break;
                }
            }
            cfo_scores.push_back(mean_of(report.mse_cfo));
            chan_scores.push_back(mean_of(report.mse_chan));
        }

        ResultRow row;
        row.snr_db = snr_db;
        row.mode = config.mode;
        row.trials = config.trials;
        row.mse_cfo = mean_of(cfo_scores);
        row.mse_chan = mean_of(chan_scores);
        row.crb_cfo = crb_cfo(snr_linear, config.num_users, config.n_fft, config.num_antennas);
        row.crb_chan = crb_chan(snr_linear, config.num_users, config.n_fft,
                                static_cast<int>(config.profile.size()));
        table.rows.push_back(row);
    }
    return table;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    // plain decimal with 12 significant digits, never exponent notation
    const int significant = 12;
    const int exponent = static_cast<int>(std::floor(std::log10(std::abs(v))));
    int decimals = significant - 1 - exponent;
    if (decimals < 0) decimals = 0;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string out = buf;
    if (out.find('.') != std::string::npos) {
        // trailing zeros carry no information at fixed significance
        out.erase(out.find_last_not_of('0') + 1);
        if (out.back() == '.') out.pop_back();
    }
    return out;
}

std::string format_csv(const ResultTable& table) {
    std::string out = "snr_db,mode,trials,mse_cfo,mse_chan,crb_cfo,crb_chan\n";
    for (const ResultRow& row : table.rows) {
        out += format_number(row.snr_db);
        out += ',';
        out += mode_name(row.mode);
        out += ',';
        out += std::to_string(row.trials);
        out += ',';
        out += format_number(row.mse_cfo);
        out += ',';
        out += format_number(row.mse_chan);
        out += ',';
        out += format_number(row.crb_cfo);
        out += ',';
        out += format_number(row.crb_chan);
        out += '\n';
    }
    return out;
}

void emit_csv(const ResultTable& table, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("emit_csv: cannot open " + path);
    f << format_csv(table);
    if (!f) throw std::runtime_error("emit_csv: write failed for " + path);
}

void emit_plot_script(const std::string& script_path, const std::string& csv_path) {
    std::ofstream f(script_path, std::ios::binary);
    if (!f) throw std::runtime_error("emit_plot_script: cannot open " + script_path);
    f << "#!/usr/bin/env python3\n"
         "\"\"\"Plot Monte Carlo MSE curves against their lower bounds.\n"
         "\n"
         "Usage: python3 "
      << script_path
      << " [results.csv]\n"
         "Writes <csv stem>_cfo.png and <csv stem>_chan.png next to the CSV.\n"
         "\"\"\"\n"
         "import csv\n"
         "import os\n"
         "import sys\n"
         "\n"
         "import matplotlib\n"
         "matplotlib.use(\"Agg\")\n"
         "import matplotlib.pyplot as plt\n"
         "\n"
         "csv_path = sys.argv[1] if len(sys.argv) > 1 else "
      << '"' << csv_path << '"'
      << "\n"
         "with open(csv_path, newline=\"\") as fh:\n"
         "    rows = list(csv.DictReader(fh))\n"
         "if not rows:\n"
         "    sys.exit(\"no data rows in \" + csv_path)\n"
         "\n"
         "modes = []\n"
         "for row in rows:\n"
         "    if row[\"mode\"] not in modes:\n"
         "        modes.append(row[\"mode\"])\n"
         "\n"
         "stem = os.path.splitext(csv_path)[0]\n"
         "for metric, bound, label, suffix in [\n"
         "    (\"mse_cfo\", \"crb_cfo\", \"CFO MSE\", \"_cfo.png\"),\n"
         "    (\"mse_chan\", \"crb_chan\", \"Channel MSE\", \"_chan.png\"),\n"
         "]:\n"
         "    fig, ax = plt.subplots(figsize=(6.0, 4.5))\n"
         "    for mode in modes:\n"
         "        pts = [(float(r[\"snr_db\"]), float(r[metric])) for r in rows\n"
         "               if r[\"mode\"] == mode and float(r[metric]) > 0.0]\n"
         "        if pts:\n"
         "            ax.semilogy([p[0] for p in pts], [p[1] for p in pts],\n"
         "                        marker=\"o\", label=mode)\n"
         "    bnd = {}\n"
         "    for r in rows:\n"
         "        if float(r[bound]) > 0.0:\n"
         "            bnd[float(r[\"snr_db\"])] = float(r[bound])\n"
         "    if bnd:\n"
         "        xs = sorted(bnd)\n"
         "        ax.semilogy(xs, [bnd[x] for x in xs], \"k--\", label=\"bound\")\n"
         "    ax.set_xlabel(\"SNR (dB)\")\n"
         "    ax.set_ylabel(label)\n"
         "    ax.grid(True, which=\"both\", alpha=0.4)\n"
         "    ax.legend()\n"
         "    fig.tight_layout()\n"
         "    fig.savefig(stem + suffix, dpi=120)\n"
         "    plt.close(fig)\n";
    if (!f) throw std::runtime_error("emit_plot_script: write failed for " + script_path);
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> parts;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    if (!text.empty() && text.back() == ',') parts.push_back("");
    return parts;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
    return v;
}

long long parse_int(const std::string& s) {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad integer '" + s + "'");
    return v;
}

}  // namespace

std::vector<double> parse_snr_list(const std::string& text) {
    std::vector<double> out;
    for (const std::string& item : split_commas(text)) {
        if (item.empty()) throw std::invalid_argument("empty entry in SNR list");
        out.push_back(parse_double(item));
    }
    if (out.empty()) throw std::invalid_argument("empty SNR list");
    return out;
}

bool load_run_config(const std::string& path, RunConfig& config, std::string& out_path,
                     bool& emit_plot, std::string& error) {
    std::ifstream f(path);
    if (!f) {
        error = "cannot open config file " + path;
        return false;
    }
    std::vector<int> profile_delays;
    std::vector<double> profile_powers;
    bool have_delays = false;
    bool have_powers = false;

    std::string line;
    int line_no = 0;
    try {
        while (std::getline(f, line)) {
            ++line_no;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("expected key=value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (value.empty()) throw std::invalid_argument("empty value for '" + key + "'");

            if (key == "num_users") {
                config.num_users = static_cast<int>(parse_int(value));
            } else if (key == "num_antennas") {
                config.num_antennas = static_cast<int>(parse_int(value));
            } else if (key == "n_fft") {
                config.n_fft = static_cast<int>(parse_int(value));
            } else if (key == "cfo_range") {
                config.cfo_range = parse_double(value);
            } else if (key == "snr_db") {
                config.snr_grid_db = parse_snr_list(value);
            } else if (key == "trials") {
                config.trials = static_cast<int>(parse_int(value));
            } else if (key == "mode") {
                config.mode = parse_mode(value);
            } else if (key == "seed") {
                config.master_seed = static_cast<std::uint64_t>(parse_int(value));
            } else if (key == "out") {
                out_path = value;
            } else if (key == "emit_plot") {
                if (value == "true" || value == "1") {
                    emit_plot = true;
                } else if (value == "false" || value == "0") {
                    emit_plot = false;
                } else {
                    throw std::invalid_argument("emit_plot expects true/false");
                }
            } else if (key == "profile_delays") {
                profile_delays.clear();
                for (const std::string& item : split_commas(value)) {
                    profile_delays.push_back(static_cast<int>(parse_int(item)));
                }
                have_delays = true;
            } else if (key == "profile_powers_db") {
                profile_powers.clear();
                for (const std::string& item : split_commas(value)) {
                    profile_powers.push_back(parse_double(item));
                }
                have_powers = true;
            } else {
                throw std::invalid_argument("unknown key '" + key + "'");
            }
        }
    } catch (const std::exception& ex) {
        error = path + ":" + std::to_string(line_no) + ": " + ex.what();
        return false;
    }

    if (have_delays != have_powers) {
        error = path + ": profile_delays and profile_powers_db must be given together";
        return false;
    }
    if (have_delays) {
        if (profile_delays.size() != profile_powers.size() || profile_delays.empty()) {
            error = path + ": profile_delays and profile_powers_db lengths differ or are empty";
            return false;
        }
        ChannelProfile profile;
        for (std::size_t i = 0; i < profile_delays.size(); ++i) {
            profile.push_back(ProfileTap{profile_delays[i], profile_powers[i]});
        }
        config.profile = std::move(profile);
    }
    return true;
}

}  // namespace muekf
