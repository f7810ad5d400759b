#pragma once

#include <vector>

#include "muekf/cmat.hpp"
#include "muekf/scheduler.hpp"
#include "muekf/sigmodel.hpp"

namespace muekf {

// Per-trial estimation scores.
struct MseReport {
    std::vector<double> mse_cfo;   // per user, squared subcarrier units
    std::vector<double> mse_chan;  // per (user, antenna), normalized
    int trial_count = 1;
};

// sum |est - true|^2 / sum |true|^2
double mse_channel(const CVec& est_taps, const CVec& true_taps);

double mse_cfo(double est, double truth);

MseReport score_frame(const Scenario& scenario, const FrameEstimates& estimates);

// Cramer-Rao bounds: 3Q / (2 pi^2 N_F SNR N_A) for the CFO and
// (L_max/N_F + 3/(2 N_F)) Q / SNR for the normalized channel error.
double crb_cfo(double snr_linear, int q, int n_fft, int n_a);
double crb_chan(double snr_linear, int q, int n_fft, int l_max);

struct FullStateOptions {
    JacobianMode jacobian_mode = JacobianMode::first_order;
    double cfo_prior_var = -1.0;   // < 0 = cfo_range^2
    double chan_prior_var = -1.0;  // < 0 = power-matched, as the scheduler
    double sigma2 = -1.0;          // < 0 = frame noise variance
};

// Joint EKF over the stacked state of all users and antennas: per user one
// CFO entry plus L_max channel entries per antenna. All N_A antenna samples
// are processed jointly each step (vector innovation), so no interference
// mitigation or per-user fusion is involved. Complexity baseline; cost per
// sample is cubic in the stacked dimension.
FrameEstimates full_state_ekf_run(const ScenarioConfig& config, const RxFrame& frame,
                                  const std::vector<TrainingSymbol>& symbols,
                                  const std::vector<std::vector<int>>& delays,
                                  const FullStateOptions& options = {},
                                  StateTrace* trace = nullptr,
                                  MultCounter* mult_counter = nullptr);

// With the CFOs known, the receive model is linear in the taps; solves the
// per-antenna stacked normal equations jointly over all users. Independent
// reference for the channel estimates. Throws on a rank-deficient system.
std::vector<CVec> ls_oracle(const RxFrame& frame, const std::vector<TrainingSymbol>& symbols,
                            const std::vector<std::vector<int>>& delays,
                            const std::vector<double>& true_cfos);

// Complex multiplications in one predict+update cycle of the per-link EKF.
// Pure function of l_max; the band checked in the tests is order-level.
std::uint64_t count_mults_per_link_step(int l_max = 3);

}  // namespace muekf
