#include "muekf/scheduler.hpp"

#include <cmath>
#include <stdexcept>

namespace muekf {

namespace {
// A fully converged noiseless link can report a CFO variance of exactly zero;
// floor what is handed to the inverse-variance fusion so its weights stay
// finite (a degenerate all-floor set fuses to the plain average).
constexpr double kCfoVarianceFloor = 1e-300;
// Noiseless frames drive both the tracked variance and G P G^H to exact
// zero once converged; a vanishing floor keeps the innovation variance
// positive without disturbing any operating point with real noise.
constexpr double kSigma2Floor = 1e-15;
}  // namespace

double blend_weight(double decay_b, long n) {
    if (decay_b <= 0.0 || decay_b >= 1.0)
        throw std::invalid_argument("blend_weight: decay factor must be in (0,1)");
    return (1.0 - decay_b) / (1.0 - std::pow(decay_b, static_cast<double>(n + 1)));
}

NoiseTracker track_noise(NoiseTracker tracker, cplx innovation, double gpg) {
    const double e = std::norm(innovation) - gpg;
    const double w = blend_weight(tracker.decay_b, tracker.sample_index);
    tracker.sigma2 = (1.0 - w) * tracker.sigma2 + w * std::max(e, 0.0);
    tracker.sample_index += 1;
    return tracker;
}

EngineState make_engine(const ScenarioConfig& config, const EstimatorOptions& options,
                        double frame_noise_variance) {
    EngineState engine;
    engine.n_fft = config.n_fft;
    engine.num_users = config.num_users;
    engine.num_antennas = config.num_antennas;
    engine.flags = options.flags;
    engine.jacobian_mode = options.jacobian_mode;
    engine.process_noise = options.process_noise;
    engine.fixed_sigma2 =
        options.fixed_sigma2 >= 0.0 ? options.fixed_sigma2 : frame_noise_variance;

    const double cfo_var =
        options.cfo_prior_var >= 0.0 ? options.cfo_prior_var : config.cfo_range * config.cfo_range;
    const double chan_var = options.chan_prior_var >= 0.0
                                ? options.chan_prior_var
                                : 1.0 / (config.num_users * config.l_max());
    const int links = config.num_users * config.num_antennas;
    engine.links.reserve(links);
    engine.trackers.reserve(links);
    for (int i = 0; i < links; ++i) {
        engine.links.push_back(initial_link_state(config.l_max(), cfo_var, chan_var));
        NoiseTracker tracker;
        tracker.sigma2 = options.sigma2_init;
        // The initial sigma2 stands in for the n=0 blend output, so the first
        // advance runs at n=1 (weight 1/(1+b), never 1). Starting at n=0
        // would overwrite the total-power prior with a single-sample power
        // estimate; when |innovation(0)|^2 fluctuates below G P G^H that
        // zeroes sigma2 and the filter free-solves itself onto a wild CFO.
        tracker.sample_index = 1;
        engine.trackers.push_back(tracker);
    }
    engine.refined_cfo.assign(config.num_users, 0.0);
    return engine;
}

double fuse_cfo(const std::vector<CfoPrediction>& predictions) {
    if (predictions.empty()) throw std::invalid_argument("fuse_cfo: no predictions");
    double weight_sum = 0.0;
    for (const auto& p : predictions) {
        if (!(p.variance > 0.0))
            throw std::invalid_argument("fuse_cfo: non-positive CFO variance");
        weight_sum += 1.0 / p.variance;
    }
    double fused = 0.0;
    for (const auto& p : predictions) fused += (1.0 / p.variance) / weight_sum * p.cfo_est;
    return fused;
}

cplx mitigate(cplx y_mn, const std::vector<InterferenceTerm>& others, int n_fft,
              bool mitigation_enabled, bool extra_phase_enabled) {
    if (!mitigation_enabled) return y_mn;
    cplx residual = y_mn;
    for (const auto& term : others) {
        const CVec x = term.pred->state_vector();
        cplx gx(0.0, 0.0);
        for (size_t i = 0; i < x.size(); ++i) gx += term.row->g[i] * x[i];
        if (extra_phase_enabled)
            gx *= std::polar(1.0, 2.0 * M_PI * term.refined_cfo / n_fft);
        residual -= gx;
    }
    return residual;
}

void process_sample(EngineState& engine, std::span<const cplx> rx_column, int n,
                    const std::vector<TrainingSymbol>& symbols,
                    const std::vector<std::vector<int>>& delays) {
    const int big_q = engine.num_users;
    const int n_a = engine.num_antennas;
    if (static_cast<int>(rx_column.size()) != n_a)
        throw std::invalid_argument("process_sample: rx_column size != num_antennas");
    if (n < 0 || n >= engine.n_fft)
        throw std::invalid_argument("process_sample: sample index out of range");

    // (1) one shared EKF module, time-shared across links: predictions first
    std::vector<LinkFilterState> preds(engine.links.size());
    for (int q = 0; q < big_q; ++q) {
        for (int m = 0; m < n_a; ++m) {
            const int i = engine.link_index(q, m);
            {
                ScopedMultCount guard(engine.ekf_mult_counter);
                preds[i] = predict(engine.links[i], engine.n_fft, engine.jacobian_mode,
                                   engine.process_noise);
            }
            if (engine.step_log)
                engine.step_log->push_back({n, q, m, StepEvent::Op::predict});
        }
    }

    // (2) per-user CFO refinement across antennas
    for (int q = 0; q < big_q; ++q) {
        std::vector<CfoPrediction> per_antenna(n_a);
        for (int m = 0; m < n_a; ++m) {
            const auto& p = preds[engine.link_index(q, m)];
            per_antenna[m] = {p.cfo_est, std::max(p.cov(0, 0).real(), kCfoVarianceFloor)};
        }
        engine.refined_cfo[q] = fuse_cfo(per_antenna);
    }
    if (engine.flags.cfo_writeback_enabled) {
        for (int q = 0; q < big_q; ++q)
            for (int m = 0; m < n_a; ++m)
                preds[engine.link_index(q, m)].cfo_est = engine.refined_cfo[q];
    }

    std::vector<ObservationRow> rows(engine.links.size());
    for (int q = 0; q < big_q; ++q)
        for (int m = 0; m < n_a; ++m)
            rows[engine.link_index(q, m)] =
                observation_row(symbols[q], delays[engine.link_index(q, m)], n);

    // (3)+(4) mitigation and update, all against n|n-1 quantities
    for (int q = 0; q < big_q; ++q) {
        for (int m = 0; m < n_a; ++m) {
            const int i = engine.link_index(q, m);
            std::vector<InterferenceTerm> others;
            others.reserve(big_q - 1);
            for (int u = 0; u < big_q; ++u) {
                if (u == q) continue;
                const int j = engine.link_index(u, m);
                others.push_back({&preds[j], &rows[j], engine.refined_cfo[u]});
            }
            const cplx y_qm = mitigate(rx_column[m], others, engine.n_fft,
                                       engine.flags.mitigation_enabled,
                                       engine.flags.mitigation_phase_step_enabled);

            const double sigma2 =
                std::max(engine.flags.tracking_enabled ? engine.trackers[i].sigma2
                                                       : engine.fixed_sigma2,
                         kSigma2Floor);
            UpdateResult res;
            {
                ScopedMultCount guard(engine.ekf_mult_counter);
                res = update(preds[i], rows[i], y_qm, sigma2);
            }
            if (engine.step_log)
                engine.step_log->push_back({n, q, m, StepEvent::Op::update});
            engine.links[i] = std::move(res.state);
            if (engine.flags.tracking_enabled)
                engine.trackers[i] = track_noise(engine.trackers[i], res.innovation, res.gpg);
        }
    }
}

FrameEstimates run_frame(const ScenarioConfig& config, const RxFrame& frame,
                         const std::vector<TrainingSymbol>& symbols,
                         const std::vector<std::vector<int>>& delays,
                         const EstimatorOptions& options, StateTrace* trace,
                         std::vector<StepEvent>* step_log, MultCounter* ekf_mult_counter) {
    const int big_q = config.num_users;
    const int n_a = config.num_antennas;
    if (frame.num_antennas != n_a || frame.n_fft != config.n_fft)
        throw std::invalid_argument("run_frame: frame dimensions do not match config");
    if (static_cast<int>(symbols.size()) != big_q)
        throw std::invalid_argument("run_frame: need one symbol per user");
    if (static_cast<int>(delays.size()) != big_q * n_a)
        throw std::invalid_argument("run_frame: need delays per (user, antenna)");

    EngineState engine = make_engine(config, options, frame.noise_variance);
    engine.step_log = step_log;
    engine.ekf_mult_counter = ekf_mult_counter;

    FrameEstimates est;
    est.cfo_trajectory.assign(big_q, std::vector<double>(config.n_fft, 0.0));
    if (trace) trace->samples.clear();

    std::vector<cplx> column(n_a);
    for (int n = 0; n < config.n_fft; ++n) {
        for (int m = 0; m < n_a; ++m) column[m] = frame.at(m, n);
        process_sample(engine, column, n, symbols, delays);
        for (int q = 0; q < big_q; ++q) est.cfo_trajectory[q][n] = engine.refined_cfo[q];
        if (trace) {
            std::vector<LinkSnapshot> snap(engine.links.size());
            for (size_t i = 0; i < engine.links.size(); ++i)
                snap[i] = {engine.links[i].cfo_est, engine.links[i].chan_est};
            trace->samples.push_back(std::move(snap));
        }
    }

    // Final fused CFO from the last posteriors. The CFO entry and P(0,0) are
    // both invariant under predict, so this equals the next prediction-stage
    // fusion.
    est.cfo_per_user.resize(big_q);
    for (int q = 0; q < big_q; ++q) {
        std::vector<CfoPrediction> per_antenna(n_a);
        for (int m = 0; m < n_a; ++m) {
            const auto& st = engine.links[engine.link_index(q, m)];
            per_antenna[m] = {st.cfo_est, std::max(st.cov(0, 0).real(), kCfoVarianceFloor)};
        }
        est.cfo_per_user[q] = fuse_cfo(per_antenna);
    }

    // H(N_F-1) carries the accumulated CFO rotation; unwind it with the fused
    // estimate to score plain taps.
    est.chan_taps.resize(engine.links.size());
    for (int q = 0; q < big_q; ++q) {
        const cplx derot =
            std::polar(1.0, -2.0 * M_PI * (config.n_fft - 1) * est.cfo_per_user[q] / config.n_fft);
        for (int m = 0; m < n_a; ++m) {
            const int i = engine.link_index(q, m);
            CVec taps = engine.links[i].chan_est;
            for (auto& t : taps) t *= derot;
            est.chan_taps[i] = std::move(taps);
        }
    }
    return est;
}

}  // namespace muekf
