#include "muekf/metrics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "muekf/ekf.hpp"
#include "muekf/rng.hpp"

namespace muekf {

double mse_channel(const CVec& est_taps, const CVec& true_taps) {
    if (est_taps.size() != true_taps.size()) {
        throw std::invalid_argument("mse_channel: tap vectors differ in length");
    }
    double err = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < true_taps.size(); ++i) {
        err += std::norm(est_taps[i] - true_taps[i]);
        ref += std::norm(true_taps[i]);
    }
    if (ref <= 0.0) {
        throw std::invalid_argument("mse_channel: true taps carry no energy");
    }
    return err / ref;
}

double mse_cfo(double est, double truth) {
    const double d = est - truth;
    return d * d;
}

MseReport score_frame(const Scenario& scenario, const FrameEstimates& estimates) {
    const int q = scenario.config.num_users;
    const int n_a = scenario.config.num_antennas;
    if (static_cast<int>(estimates.cfo_per_user.size()) != q ||
        static_cast<int>(estimates.chan_taps.size()) != q * n_a) {
        throw std::invalid_argument("score_frame: estimate shape mismatch");
    }
    MseReport report;
    report.mse_cfo.reserve(q);
    report.mse_chan.reserve(static_cast<std::size_t>(q) * n_a);
    for (int u = 0; u < q; ++u) {
        report.mse_cfo.push_back(mse_cfo(estimates.cfo_per_user[u], scenario.config.cfo_truth[u]));
        for (int m = 0; m < n_a; ++m) {
            report.mse_chan.push_back(
                mse_channel(estimates.chan_taps[static_cast<std::size_t>(u) * n_a + m],
                            scenario.link(u, m).taps));
        }
    }
    return report;
}

double crb_cfo(double snr_linear, int q, int n_fft, int n_a) {
    if (snr_linear <= 0.0 || q <= 0 || n_fft <= 0 || n_a <= 0) {
        throw std::invalid_argument("crb_cfo: all arguments must be positive");
    }
    const double pi = std::numbers::pi;
    return 3.0 * q / (2.0 * pi * pi * n_fft * snr_linear * n_a);
}

double crb_chan(double snr_linear, int q, int n_fft, int l_max) {
    if (snr_linear <= 0.0 || q <= 0 || n_fft <= 0 || l_max <= 0) {
        throw std::invalid_argument("crb_chan: all arguments must be positive");
    }
    const double nf = static_cast<double>(n_fft);
    return (l_max / nf + 3.0 / (2.0 * nf)) * q / snr_linear;
}

namespace {

// Index map for the stacked state: per user one CFO entry followed by the
// channel entries of that user's links in antenna order.
struct StackedLayout {
    int num_users = 0;
    int num_antennas = 0;
    std::vector<int> block_start;              // per user
    std::vector<std::vector<int>> chan_start;  // per user, per antenna
    std::vector<std::vector<int>> chan_len;    // per user, per antenna
    int dim = 0;
};

StackedLayout make_layout(int num_users, int num_antennas,
                          const std::vector<std::vector<int>>& delays) {
    if (static_cast<int>(delays.size()) != num_users * num_antennas) {
        throw std::invalid_argument("full_state_ekf_run: delay table shape mismatch");
    }
    StackedLayout lay;
    lay.num_users = num_users;
    lay.num_antennas = num_antennas;
    lay.block_start.resize(num_users);
    lay.chan_start.assign(num_users, std::vector<int>(num_antennas));
    lay.chan_len.assign(num_users, std::vector<int>(num_antennas));
    int pos = 0;
    for (int u = 0; u < num_users; ++u) {
        lay.block_start[u] = pos;
        ++pos;  // CFO entry
        for (int m = 0; m < num_antennas; ++m) {
            lay.chan_start[u][m] = pos;
            const auto& d = delays[static_cast<std::size_t>(u) * num_antennas + m];
            if (d.empty()) {
                throw std::invalid_argument("full_state_ekf_run: empty delay list");
            }
            lay.chan_len[u][m] = static_cast<int>(d.size());
            pos += static_cast<int>(d.size());
        }
    }
    lay.dim = pos;
    return lay;
}

}  // namespace

FrameEstimates full_state_ekf_run(const ScenarioConfig& config, const RxFrame& frame,
                                  const std::vector<TrainingSymbol>& symbols,
                                  const std::vector<std::vector<int>>& delays,
                                  const FullStateOptions& options, StateTrace* trace,
                                  MultCounter* mult_counter) {
    const int q = config.num_users;
    const int n_a = config.num_antennas;
    const int n_fft = config.n_fft;
    if (static_cast<int>(symbols.size()) != q) {
        throw std::invalid_argument("full_state_ekf_run: symbol count mismatch");
    }
    if (frame.num_antennas != n_a || frame.n_fft != n_fft) {
        throw std::invalid_argument("full_state_ekf_run: frame shape mismatch");
    }
    const StackedLayout lay = make_layout(q, n_a, delays);
    const int dim = lay.dim;

    const double cfo_var = options.cfo_prior_var >= 0.0 ? options.cfo_prior_var
                                                        : config.cfo_range * config.cfo_range;
    const double chan_var = options.chan_prior_var >= 0.0
                                ? options.chan_prior_var
                                : 1.0 / (config.num_users * config.l_max());
    double sigma2 = options.sigma2 >= 0.0 ? options.sigma2 : frame.noise_variance;
    if (sigma2 < 0.0) {
        throw std::invalid_argument("full_state_ekf_run: negative noise variance");
    }
    // same floor as the time-shared scheduler: keeps the innovation
    // covariance invertible on noiseless frames once the state has converged
    sigma2 = std::max(sigma2, 1e-15);

    CVec x(dim, cplx(0.0, 0.0));
    CMat cov(dim, dim);
    for (int u = 0; u < q; ++u) {
        cov(lay.block_start[u], lay.block_start[u]) = cfo_var;
        for (int m = 0; m < n_a; ++m) {
            for (int l = 0; l < lay.chan_len[u][m]; ++l) {
                const int i = lay.chan_start[u][m] + l;
                cov(i, i) = chan_var;
            }
        }
    }

    if (trace != nullptr) {
        trace->samples.clear();
        trace->samples.reserve(n_fft);
    }
    FrameEstimates out;
    out.cfo_per_user.assign(q, 0.0);
    out.chan_taps.assign(static_cast<std::size_t>(q) * n_a, CVec{});
    out.cfo_trajectory.assign(q, std::vector<double>(n_fft, 0.0));

    const double two_pi = 2.0 * std::numbers::pi;
    const cplx coef(0.0, two_pi / n_fft);

    ScopedMultCount guard(mult_counter);

    CMat f(dim, dim);
    CMat g(n_a, dim);
    for (int n = 0; n < n_fft; ++n) {
        // Predict: rotate every channel entry by its user's CFO phase step and
        // propagate the covariance through the linearized transition.
        f = CMat::identity(dim);
        for (int u = 0; u < q; ++u) {
            const int b = lay.block_start[u];
            const double theta = two_pi * x[b].real() / n_fft;
            const cplx rot = std::polar(1.0, theta);
            const cplx col_coef =
                options.jacobian_mode == JacobianMode::exact ? cmul(coef, rot) : coef;
            for (int m = 0; m < n_a; ++m) {
                for (int l = 0; l < lay.chan_len[u][m]; ++l) {
                    const int i = lay.chan_start[u][m] + l;
                    f(i, b) = cmul(col_coef, x[i]);
                    f(i, i) = rot;
                    x[i] = cmul(x[i], rot);
                }
            }
        }
        cov = matmul(matmul(f, cov), f.adjoint());
        cov.hermitize();

        // Update: one innovation per antenna, processed jointly.
        for (int m = 0; m < n_a; ++m) {
            for (int i = 0; i < dim; ++i) g(m, i) = cplx(0.0, 0.0);
        }
        for (int u = 0; u < q; ++u) {
            const auto& sym = symbols[u].samples;
            for (int m = 0; m < n_a; ++m) {
                const auto& d = delays[static_cast<std::size_t>(u) * n_a + m];
                for (int l = 0; l < lay.chan_len[u][m]; ++l) {
                    g(m, lay.chan_start[u][m] + l) = sym[circ_index(n, d[l], n_fft)];
                }
            }
        }
        CMat w = matmul(g, cov);            // N_A x D
        CMat s = matmul(w, g.adjoint());    // N_A x N_A
        for (int m = 0; m < n_a; ++m) s(m, m) += sigma2;
        const CMat s_inv = invert(s);
        const CMat k = matmul(w.adjoint(), s_inv);  // D x N_A, = P G^H S^-1

        CVec innov(n_a);
        for (int m = 0; m < n_a; ++m) {
            cplx pred(0.0, 0.0);
            for (int i = 0; i < dim; ++i) {
                if (g(m, i) != cplx(0.0, 0.0)) pred += cmul(g(m, i), x[i]);
            }
            innov[m] = frame.at(m, n) - pred;
        }
        for (int i = 0; i < dim; ++i) {
            cplx delta(0.0, 0.0);
            for (int m = 0; m < n_a; ++m) delta += cmul(k(i, m), innov[m]);
            x[i] += delta;
        }
        const CMat kw = matmul(k, w);
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) cov(i, j) -= kw(i, j);
        }
        cov.hermitize();
        for (int u = 0; u < q; ++u) {
            const int b = lay.block_start[u];
            x[b] = cplx(x[b].real(), 0.0);
        }

        for (int u = 0; u < q; ++u) {
            out.cfo_trajectory[u][n] = x[lay.block_start[u]].real();
        }
        if (trace != nullptr) {
            std::vector<LinkSnapshot> snap(static_cast<std::size_t>(q) * n_a);
            for (int u = 0; u < q; ++u) {
                for (int m = 0; m < n_a; ++m) {
                    LinkSnapshot& sn = snap[static_cast<std::size_t>(u) * n_a + m];
                    sn.cfo_est = x[lay.block_start[u]].real();
                    sn.chan_est.assign(x.begin() + lay.chan_start[u][m],
                                       x.begin() + lay.chan_start[u][m] + lay.chan_len[u][m]);
                }
            }
            trace->samples.push_back(std::move(snap));
        }
    }

    for (int u = 0; u < q; ++u) {
        const double eps = x[lay.block_start[u]].real();
        out.cfo_per_user[u] = eps;
        const cplx unwind = std::polar(1.0, -two_pi * (n_fft - 1) * eps / n_fft);
        for (int m = 0; m < n_a; ++m) {
            CVec taps(lay.chan_len[u][m]);
            for (int l = 0; l < lay.chan_len[u][m]; ++l) {
                taps[l] = x[lay.chan_start[u][m] + l] * unwind;
            }
            out.chan_taps[static_cast<std::size_t>(u) * n_a + m] = std::move(taps);
        }
    }
    return out;
}

std::vector<CVec> ls_oracle(const RxFrame& frame, const std::vector<TrainingSymbol>& symbols,
                            const std::vector<std::vector<int>>& delays,
                            const std::vector<double>& true_cfos) {
    const int q = static_cast<int>(symbols.size());
    const int n_a = frame.num_antennas;
    const int n_fft = frame.n_fft;
    if (static_cast<int>(true_cfos.size()) != q) {
        throw std::invalid_argument("ls_oracle: CFO count mismatch");
    }
    if (static_cast<int>(delays.size()) != q * n_a) {
        throw std::invalid_argument("ls_oracle: delay table shape mismatch");
    }
    const double two_pi = 2.0 * std::numbers::pi;

    std::vector<CVec> taps(static_cast<std::size_t>(q) * n_a);
    // Per-antenna regressor columns are shared across antennas only through
    // the delays, which may differ per link, so solve each antenna separately.
    for (int m = 0; m < n_a; ++m) {
        std::vector<int> col_user;
        std::vector<int> col_delay;
        std::vector<int> first_col(q, 0);
        for (int u = 0; u < q; ++u) {
            first_col[u] = static_cast<int>(col_user.size());
            const auto& d = delays[static_cast<std::size_t>(u) * n_a + m];
            if (d.empty()) throw std::invalid_argument("ls_oracle: empty delay list");
            for (int p : d) {
                col_user.push_back(u);
                col_delay.push_back(p);
            }
        }
        const int k = static_cast<int>(col_user.size());

        // Accumulate the normal equations column by column.
        CMat gram(k, k);
        CVec rhs(k, cplx(0.0, 0.0));
        CVec col_val(k);
        for (int n = 0; n < n_fft; ++n) {
            for (int c = 0; c < k; ++c) {
                const int u = col_user[c];
                const cplx phase = std::polar(1.0, two_pi * true_cfos[u] * n / n_fft);
                col_val[c] = phase * symbols[u].samples[circ_index(n, col_delay[c], n_fft)];
            }
            const cplx y = frame.at(m, n);
            for (int c1 = 0; c1 < k; ++c1) {
                const cplx a1 = std::conj(col_val[c1]);
                rhs[c1] += a1 * y;
                for (int c2 = 0; c2 < k; ++c2) {
                    gram(c1, c2) += a1 * col_val[c2];
                }
            }
        }
        for (int c = 0; c < k; ++c) {
            if (gram(c, c).real() <= 1e-9 * n_fft) {
                throw std::runtime_error("ls_oracle: rank-deficient regressor");
            }
        }
        const CMat gram_inv = invert(gram);
        const CVec sol = mat_times_col(gram_inv, rhs);
        for (int u = 0; u < q; ++u) {
            const auto& d = delays[static_cast<std::size_t>(u) * n_a + m];
            CVec t(d.size());
            for (std::size_t l = 0; l < d.size(); ++l) {
                t[l] = sol[first_col[u] + l];
            }
            taps[static_cast<std::size_t>(u) * n_a + m] = std::move(t);
        }
    }
    return taps;
}

std::uint64_t count_mults_per_link_step(int l_max) {
    if (l_max <= 0) {
        throw std::invalid_argument("count_mults_per_link_step: l_max must be positive");
    }
    const int n_fft = 2048;
    // Representative mid-run state; the count depends only on the dimensions.
    LinkFilterState state = initial_link_state(l_max);
    state.cfo_est = 0.3;
    Rng rng(12345);
    for (auto& h : state.chan_est) h = rng.cgauss();

    const TrainingSymbol symbol = generate_training_symbol(1, n_fft, 99);
    std::vector<int> delays(l_max);
    for (int l = 0; l < l_max; ++l) delays[l] = l == 0 ? 0 : 2 * l + 1;

    MultCounter counter;
    {
        ScopedMultCount guard(&counter);
        const LinkFilterState pred = predict(state, n_fft);
        const ObservationRow row = observation_row(symbol, delays, 17);
        (void)update(pred, row, cplx(0.4, -0.2), 0.1);
    }
    return counter.count;
}

}  // namespace muekf
