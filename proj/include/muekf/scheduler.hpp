#pragma once

#include <span>
#include <vector>

#include "muekf/ekf.hpp"
#include "muekf/sigmodel.hpp"

namespace muekf {

// Residual-noise variance tracker for one link. sigma2 estimates the variance
// of everything the link model does not explain: background noise plus the
// co-channel interference left over by the mitigation stage.
struct NoiseTracker {
    double sigma2 = 1.0;
    double decay_b = 0.99;
    long sample_index = 0;  // n of the next tracked sample
};

// (1-b)/(1-b^{n+1}); equals 1 at n = 0 and decays toward 1-b.
double blend_weight(double decay_b, long n);

// sigma2(n) = [1 - w(n)] sigma2(n-1) + w(n) max(|innovation|^2 - gpg, 0)
NoiseTracker track_noise(NoiseTracker tracker, cplx innovation, double gpg);

struct EngineFlags {
    bool mitigation_enabled = true;
    bool tracking_enabled = true;
    // keep the one-step phase factor e^{j2pi eps_u(n|n-1)/N_F} in front of
    // each reconstructed interference term
    bool mitigation_phase_step_enabled = true;
    // overwrite each link's CFO with the fused per-user value every sample
    bool cfo_writeback_enabled = false;
};

struct EstimatorOptions {
    EngineFlags flags;
    JacobianMode jacobian_mode = JacobianMode::first_order;
    double sigma2_init = 1.0;     // pre-mitigation residual power
    double fixed_sigma2 = -1.0;   // used when tracking is off; < 0 = frame noise variance
    double cfo_prior_var = -1.0;  // < 0 = cfo_range^2
    // < 0 = power-matched: expected per-link receive power (1/Q under the
    // unit-total-power normalization) split evenly over the taps. An
    // overstated channel prior makes G P G^H dwarf the measurement power,
    // which zeros the tracked variance on the first samples and lets the
    // filter lock onto a bad transient estimate.
    double chan_prior_var = -1.0;
    double process_noise = 0.0;
};

// Instrumentation record: one EKF engine invocation on the shared module.
struct StepEvent {
    int n = 0;
    int q = 0;
    int m = 0;
    enum class Op { predict, update } op = Op::predict;
};

// All per-link filters plus the shared scheduling state. Links are stored
// user-major: link(q, m) = q * num_antennas + m.
struct EngineState {
    int n_fft = 0;
    int num_users = 0;
    int num_antennas = 0;
    std::vector<LinkFilterState> links;     // posteriors between samples
    std::vector<NoiseTracker> trackers;
    std::vector<double> refined_cfo;        // eps-hat_q(n|n-1) per user
    EngineFlags flags;
    JacobianMode jacobian_mode = JacobianMode::first_order;
    double fixed_sigma2 = 0.0;
    double process_noise = 0.0;

    // optional instrumentation, not part of the estimate
    std::vector<StepEvent>* step_log = nullptr;
    MultCounter* ekf_mult_counter = nullptr;  // predict+update products only

    int link_index(int q, int m) const { return q * num_antennas + m; }
};

EngineState make_engine(const ScenarioConfig& config, const EstimatorOptions& options,
                        double frame_noise_variance);

// Inverse-variance weighted combination of per-antenna CFO predictions;
// variance is Re P(n|n-1)(0,0).
struct CfoPrediction {
    double cfo_est = 0.0;
    double variance = 0.0;
};
double fuse_cfo(const std::vector<CfoPrediction>& predictions);

// One co-channel term to reconstruct and subtract.
struct InterferenceTerm {
    const LinkFilterState* pred = nullptr;  // (n|n-1)
    const ObservationRow* row = nullptr;
    double refined_cfo = 0.0;
};

// y_{q,m}(n) = y_m(n) - sum_{u != q} e^{j2pi eps_u(n|n-1)/N_F} G_{u,m}(n) X_{u,m}(n|n-1).
// With mitigation disabled the sample passes through untouched.
cplx mitigate(cplx y_mn, const std::vector<InterferenceTerm>& others, int n_fft,
              bool mitigation_enabled, bool extra_phase_enabled);

// One sample period of the time-shared engine: predict all links, fuse CFO
// per user, mitigate each link's sample with the other users' predictions
// (all at n|n-1), then update each link and advance its noise tracker.
void process_sample(EngineState& engine, std::span<const cplx> rx_column, int n,
                    const std::vector<TrainingSymbol>& symbols,
                    const std::vector<std::vector<int>>& delays);

struct LinkSnapshot {
    double cfo_est = 0.0;
    CVec chan_est;
};

// Posterior state of every link after each sample; test/diagnostic output.
struct StateTrace {
    std::vector<std::vector<LinkSnapshot>> samples;  // [n][link]
};

struct FrameEstimates {
    std::vector<double> cfo_per_user;                // fused, after the last sample
    std::vector<CVec> chan_taps;                     // per link, de-rotated h-hat
    std::vector<std::vector<double>> cfo_trajectory; // [user][n], eps-hat_q(n|n-1)
};

FrameEstimates run_frame(const ScenarioConfig& config, const RxFrame& frame,
                         const std::vector<TrainingSymbol>& symbols,
                         const std::vector<std::vector<int>>& delays,
                         const EstimatorOptions& options = {}, StateTrace* trace = nullptr,
                         std::vector<StepEvent>* step_log = nullptr,
                         MultCounter* ekf_mult_counter = nullptr);

}  // namespace muekf
