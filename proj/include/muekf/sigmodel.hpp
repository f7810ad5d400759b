#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "muekf/cmat.hpp"

namespace muekf {

// Known time-domain pilot sequence of one TX user, unit average power.
struct TrainingSymbol {
    int user_id = 1;  // 1-based
    std::vector<cplx> samples;
};

// One multipath tap of the simulated channel profile.
struct ProfileTap {
    int delay = 0;        // samples
    double power_db = 0;  // relative tap power
};

using ChannelProfile = std::vector<ProfileTap>;

// SUI-3 style profile: 3 Rayleigh taps at 0/0.4/0.9 us (20 MHz sampling),
// relative powers 0/-5/-10 dB.
ChannelProfile sui3_profile();

// Discrete-time channel between one TX user and one RX antenna.
struct ChannelRealization {
    std::vector<int> delays;  // strictly increasing, in [0, n_fft)
    std::vector<cplx> taps;
};

struct ScenarioConfig {
    int num_users = 4;     // Q
    int num_antennas = 4;  // N_A, requires Q <= N_A
    int n_fft = 2048;      // N_F
    double cfo_range = 2.0;
    ChannelProfile profile = sui3_profile();
    // total signal power / noise power at one antenna; infinity = noiseless
    double snr_linear = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;
    std::vector<double> cfo_truth;  // per user, subcarrier units

    int l_max() const { return static_cast<int>(profile.size()); }
    bool noiseless() const { return !(snr_linear < std::numeric_limits<double>::infinity()); }
};

// One received OFDM training symbol across all antennas.
struct RxFrame {
    int num_antennas = 0;
    int n_fft = 0;
    std::vector<cplx> samples;  // row-major, num_antennas x n_fft
    double noise_variance = 0.0;

    cplx& at(int antenna, int n) { return samples[static_cast<size_t>(antenna) * n_fft + n]; }
    const cplx& at(int antenna, int n) const {
        return samples[static_cast<size_t>(antenna) * n_fft + n];
    }
};

// Full ground-truth description of one trial.
struct Scenario {
    ScenarioConfig config;
    std::vector<TrainingSymbol> symbols;        // per user
    std::vector<ChannelRealization> channels;   // per (user, antenna), user-major

    const ChannelRealization& link(int q, int m) const {
        return channels[static_cast<size_t>(q) * config.num_antennas + m];
    }
    std::vector<std::vector<int>> link_delays() const;
};

// (n - p) mod n_fft for 0 <= n,p < n_fft
int circ_index(int n, int p, int n_fft);

// Constant-modulus QPSK pilot, deterministic in (seed, user_id).
TrainingSymbol generate_training_symbol(int user_id, int n_fft, std::uint64_t seed);

// Rayleigh taps with per-tap variances from the dB profile, scaled so that
// sum_l E|h_l|^2 == total_power.
ChannelRealization generate_channel_realization(const ChannelProfile& profile,
                                                std::uint64_t seed, double total_power = 1.0);

// Draws CFO truths, pilots and channels for config.seed. Each user's expected
// receive power is 1/Q, so the total unit signal power gives
// noise variance = 1/snr_linear.
Scenario generate_scenario(ScenarioConfig config);

// y_m(n) = sum_q e^{j2pi eps_q n/N_F} sum_l h_{q,m}(p_l) s_q[(n-p_l) mod N_F] + z_m(n)
RxFrame synthesize_rx_frame(const ScenarioConfig& config,
                            const std::vector<TrainingSymbol>& symbols,
                            const std::vector<ChannelRealization>& channels);

}  // namespace muekf
