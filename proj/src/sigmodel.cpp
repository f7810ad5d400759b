#include "muekf/sigmodel.hpp"

#include <cmath>
#include <stdexcept>

#include "muekf/rng.hpp"

namespace muekf {

namespace {

// substream tags for deriving independent per-purpose seeds
constexpr std::uint64_t kStreamSymbol = 0x53594d42u;
constexpr std::uint64_t kStreamChannel = 0x4348414eu;
constexpr std::uint64_t kStreamCfo = 0x43464f00u;
constexpr std::uint64_t kStreamNoise = 0x4e4f4953u;

}  // namespace

ChannelProfile sui3_profile() {
    return {{0, 0.0}, {8, -5.0}, {18, -10.0}};
}

std::vector<std::vector<int>> Scenario::link_delays() const {
    std::vector<std::vector<int>> d;
    d.reserve(channels.size());
    for (const auto& ch : channels) d.push_back(ch.delays);
    return d;
}

int circ_index(int n, int p, int n_fft) {
    if (n_fft <= 0) throw std::invalid_argument("circ_index: n_fft must be positive");
    if (n < 0 || n >= n_fft) throw std::invalid_argument("circ_index: n out of range");
    if (p < 0 || p >= n_fft) throw std::invalid_argument("circ_index: p out of range");
    int r = n - p;
    if (r < 0) r += n_fft;
    return r;
}

TrainingSymbol generate_training_symbol(int user_id, int n_fft, std::uint64_t seed) {
    if (n_fft < 1) throw std::invalid_argument("generate_training_symbol: n_fft must be >= 1");
    Rng rng(mix_seed(seed, kStreamSymbol, static_cast<std::uint64_t>(user_id)));
    TrainingSymbol sym;
    sym.user_id = user_id;
    sym.samples.resize(n_fft);
    for (int n = 0; n < n_fft; ++n) {
        const std::uint64_t bits = rng.next_u64();
        const double re = (bits & 1u) ? M_SQRT1_2 : -M_SQRT1_2;
        const double im = (bits & 2u) ? M_SQRT1_2 : -M_SQRT1_2;
        sym.samples[n] = cplx(re, im);
    }
    return sym;
}

ChannelRealization generate_channel_realization(const ChannelProfile& profile,
                                                std::uint64_t seed, double total_power) {
    if (profile.empty())
        throw std::invalid_argument("generate_channel_realization: empty profile");
    double linear_sum = 0.0;
    int prev_delay = -1;
    for (const auto& tap : profile) {
        if (tap.delay <= prev_delay)
            throw std::invalid_argument(
                "generate_channel_realization: delays must be strictly increasing");
        if (tap.delay < 0)
            throw std::invalid_argument("generate_channel_realization: negative delay");
        prev_delay = tap.delay;
        linear_sum += std::pow(10.0, tap.power_db / 10.0);
    }
    Rng rng(mix_seed(seed, kStreamChannel));
    ChannelRealization ch;
    ch.delays.reserve(profile.size());
    ch.taps.reserve(profile.size());
    for (const auto& tap : profile) {
        const double var = std::pow(10.0, tap.power_db / 10.0) / linear_sum * total_power;
        ch.delays.push_back(tap.delay);
        ch.taps.push_back(rng.cgauss() * std::sqrt(var));
    }
    return ch;
}

Scenario generate_scenario(ScenarioConfig config) {
    if (config.num_users < 1) throw std::invalid_argument("generate_scenario: Q must be >= 1");
    if (config.num_users > config.num_antennas)
        throw std::invalid_argument("generate_scenario: requires Q <= N_A");
    if (config.n_fft < 1 || (config.n_fft & (config.n_fft - 1)) != 0)
        throw std::invalid_argument("generate_scenario: n_fft must be a power of two");

    Scenario sc;
    Rng cfo_rng(mix_seed(config.seed, kStreamCfo));
    config.cfo_truth.resize(config.num_users);
    for (int q = 0; q < config.num_users; ++q)
        config.cfo_truth[q] = cfo_rng.uniform_symmetric(config.cfo_range);

    sc.symbols.reserve(config.num_users);
    for (int q = 0; q < config.num_users; ++q)
        sc.symbols.push_back(generate_training_symbol(q + 1, config.n_fft, config.seed));

    // equal expected receive power per user: sum_l E|h_l|^2 = 1/Q
    const double per_user_power = 1.0 / config.num_users;
    sc.channels.reserve(static_cast<size_t>(config.num_users) * config.num_antennas);
    for (int q = 0; q < config.num_users; ++q) {
        for (int m = 0; m < config.num_antennas; ++m) {
            const std::uint64_t link_seed =
                mix_seed(config.seed, static_cast<std::uint64_t>(q + 1),
                         static_cast<std::uint64_t>(m + 1));
            sc.channels.push_back(
                generate_channel_realization(config.profile, link_seed, per_user_power));
        }
    }
    sc.config = std::move(config);
    return sc;
}

RxFrame synthesize_rx_frame(const ScenarioConfig& config,
                            const std::vector<TrainingSymbol>& symbols,
                            const std::vector<ChannelRealization>& channels) {
    const int big_q = config.num_users;
    const int n_a = config.num_antennas;
    const int n_fft = config.n_fft;
    if (static_cast<int>(symbols.size()) != big_q)
        throw std::invalid_argument("synthesize_rx_frame: need one symbol per user");
    if (static_cast<int>(channels.size()) != big_q * n_a)
        throw std::invalid_argument("synthesize_rx_frame: need one channel per (user, antenna)");
    if (static_cast<int>(config.cfo_truth.size()) != big_q)
        throw std::invalid_argument("synthesize_rx_frame: need one CFO per user");
    for (const auto& sym : symbols)
        if (static_cast<int>(sym.samples.size()) != n_fft)
            throw std::invalid_argument("synthesize_rx_frame: symbol length != n_fft");
    for (const auto& ch : channels) {
        if (ch.delays.size() != ch.taps.size())
            throw std::invalid_argument("synthesize_rx_frame: malformed channel");
        for (int p : ch.delays)
            if (p < 0 || p >= n_fft)
                throw std::invalid_argument("synthesize_rx_frame: delay out of range");
    }

    RxFrame frame;
    frame.num_antennas = n_a;
    frame.n_fft = n_fft;
    frame.samples.assign(static_cast<size_t>(n_a) * n_fft, cplx(0.0, 0.0));
    frame.noise_variance = config.noiseless() ? 0.0 : 1.0 / config.snr_linear;

    for (int q = 0; q < big_q; ++q) {
        const double step = 2.0 * M_PI * config.cfo_truth[q] / n_fft;
        const auto& s = symbols[q].samples;
        for (int m = 0; m < n_a; ++m) {
            const auto& ch = channels[static_cast<size_t>(q) * n_a + m];
            for (int n = 0; n < n_fft; ++n) {
                cplx acc(0.0, 0.0);
                for (size_t l = 0; l < ch.delays.size(); ++l)
                    acc += ch.taps[l] * s[circ_index(n, ch.delays[l], n_fft)];
                frame.at(m, n) += std::polar(1.0, step * n) * acc;
            }
        }
    }

    // Noise comes from its own substream so that the realization z_m(n) does
    // not depend on how many users or taps were drawn before it.
    if (!config.noiseless()) {
        Rng noise_rng(mix_seed(config.seed, kStreamNoise));
        const double scale = std::sqrt(frame.noise_variance);
        for (int m = 0; m < n_a; ++m)
            for (int n = 0; n < n_fft; ++n) frame.at(m, n) += noise_rng.cgauss() * scale;
    }
    return frame;
}

}  // namespace muekf
