#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "muekf/ekf.hpp"
#include "muekf/rng.hpp"
#include "muekf/sigmodel.hpp"

using namespace muekf;

namespace {

// state transition the jacobian linearizes: [eps, H] -> [eps, e^{j2pi eps/N} H]
CVec transition(double eps, const CVec& h, int n_fft) {
    CVec out(h.size() + 1);
    out[0] = eps;
    const cplx rot = std::polar(1.0, 2.0 * M_PI * eps / n_fft);
    for (size_t l = 0; l < h.size(); ++l) out[l + 1] = rot * h[l];
    return out;
}

LinkFilterState random_state(Rng& rng, int l_max, double cfo_range) {
    LinkFilterState st = initial_link_state(l_max);
    st.cfo_est = rng.uniform_symmetric(cfo_range);
    for (int l = 0; l < l_max; ++l) st.chan_est[l] = rng.cgauss();
    return st;
}

// independent triple-loop F P F^H, no shared code with the library kernels
CMat sandwich(const CMat& f, const CMat& p) {
    const int n = f.rows();
    CMat fp(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            cplx acc(0.0, 0.0);
            for (int k = 0; k < n; ++k) acc += f(i, k) * p(k, j);
            fp(i, j) = acc;
        }
    CMat out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            cplx acc(0.0, 0.0);
            for (int k = 0; k < n; ++k) acc += fp(i, k) * std::conj(f(j, k));
            out(i, j) = acc;
        }
    return out;
}

CMat random_hermitian_psd(Rng& rng, int n) {
    CMat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.cgauss();
    // A A^H is Hermitian positive semidefinite
    CMat p(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            cplx acc(0.0, 0.0);
            for (int k = 0; k < n; ++k) acc += a(i, k) * std::conj(a(j, k));
            p(i, j) = acc;
        }
    p.hermitize();
    return p;
}

}  // namespace

TEST_CASE("observation row layout") {
    const TrainingSymbol s = generate_training_symbol(1, 2048, 4);

    SUBCASE("single zero delay reads the current sample") {
        const ObservationRow row = observation_row(s, {0}, 0);
        REQUIRE(row.g.size() == 2);
        CHECK(row.g[0] == cplx(0.0, 0.0));
        CHECK(row.g[1] == s.samples[0]);
    }

    SUBCASE("multipath delays read circularly shifted samples") {
        const ObservationRow row = observation_row(s, {0, 8, 18}, 0);
        REQUIRE(row.g.size() == 4);
        CHECK(row.g[0] == cplx(0.0, 0.0));
        CHECK(row.g[1] == s.samples[0]);
        CHECK(row.g[2] == s.samples[2040]);
        CHECK(row.g[3] == s.samples[2030]);
    }

    SUBCASE("first entry is structurally zero at any sample index") {
        for (int n : {0, 1, 100, 2047}) {
            const ObservationRow row = observation_row(s, {0, 8, 18}, n);
            CHECK(row.g[0] == cplx(0.0, 0.0));
        }
    }

    SUBCASE("out-of-range delay is rejected") {
        CHECK_THROWS_AS(observation_row(s, {2048}, 0), std::invalid_argument);
        CHECK_THROWS_AS(observation_row(s, {-1}, 0), std::invalid_argument);
    }
}

TEST_CASE("jacobian structure") {
    const int n_fft = 2048;
    Rng rng(17);
    LinkFilterState st = random_state(rng, 3, 2.0);

    SUBCASE("shared layout of both modes") {
        for (JacobianMode mode : {JacobianMode::first_order, JacobianMode::exact}) {
            const CMat f = jacobian(st, n_fft, mode);
            REQUIRE(f.rows() == 4);
            REQUIRE(f.cols() == 4);
            CHECK(f(0, 0) == cplx(1.0, 0.0));
            for (int j = 1; j < 4; ++j) CHECK(f(0, j) == cplx(0.0, 0.0));
            const cplx rot = std::polar(1.0, 2.0 * M_PI * st.cfo_est / n_fft);
            for (int i = 1; i < 4; ++i) {
                for (int j = 1; j < 4; ++j) {
                    if (i == j)
                        CHECK(std::abs(f(i, j) - rot) < 1e-15);
                    else
                        CHECK(f(i, j) == cplx(0.0, 0.0));
                }
            }
        }
    }

    SUBCASE("modes coincide at zero offset and keep the channel column live") {
        st.cfo_est = 0.0;
        const CMat approx = jacobian(st, n_fft, JacobianMode::first_order);
        const CMat exact = jacobian(st, n_fft, JacobianMode::exact);
        const cplx coef(0.0, 2.0 * M_PI / n_fft);
        for (int l = 0; l < 3; ++l) {
            CHECK(std::abs(approx(l + 1, 0) - coef * st.chan_est[l]) < 1e-15);
            CHECK(std::abs(exact(l + 1, 0) - approx(l + 1, 0)) < 1e-15);
            // a zero column here would make the offset unobservable from the
            // default zero-offset start, so it must scale with the channel
            CHECK(std::abs(approx(l + 1, 0)) > 0.0);
        }
        for (int i = 1; i < 4; ++i) CHECK(std::abs(exact(i, i) - 1.0) < 1e-15);
    }
}

TEST_CASE("exact jacobian matches central finite differences") {
    const int n_fft = 2048;
    const double step = 1e-6;
    Rng rng(23);
    double worst = 0.0;

    for (int trial = 0; trial < 100; ++trial) {
        const LinkFilterState st = random_state(rng, 3, 2.0);
        const CMat f = jacobian(st, n_fft, JacobianMode::exact);

        // offset column
        const CVec plus = transition(st.cfo_est + step, st.chan_est, n_fft);
        const CVec minus = transition(st.cfo_est - step, st.chan_est, n_fft);
        for (int i = 0; i < 4; ++i) {
            const cplx fd = (plus[i] - minus[i]) / (2.0 * step);
            const double scale = std::max(std::abs(f(i, 0)), 1.0);
            worst = std::max(worst, std::abs(fd - f(i, 0)) / scale);
        }

        // channel columns; the transition is linear in each tap, so a real
        // perturbation fixes the full complex derivative
        for (int l = 0; l < 3; ++l) {
            CVec hp = st.chan_est, hm = st.chan_est;
            hp[l] += step;
            hm[l] -= step;
            const CVec cp = transition(st.cfo_est, hp, n_fft);
            const CVec cm = transition(st.cfo_est, hm, n_fft);
            for (int i = 0; i < 4; ++i) {
                const cplx fd = (cp[i] - cm[i]) / (2.0 * step);
                const double scale = std::max(std::abs(f(i, l + 1)), 1.0);
                worst = std::max(worst, std::abs(fd - f(i, l + 1)) / scale);
            }
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("mode difference is quadratically small at a large offset") {
    const int n_fft = 2048;
    Rng rng(29);
    for (int trial = 0; trial < 100; ++trial) {
        LinkFilterState st = random_state(rng, 3, 2.0);
        st.cfo_est = 2.0;
        const double alpha = 2.0 * M_PI * st.cfo_est / n_fft;
        const CMat approx = jacobian(st, n_fft, JacobianMode::first_order);
        const CMat exact = jacobian(st, n_fft, JacobianMode::exact);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                const double bound =
                    (j == 0 && i > 0) ? alpha * alpha * std::abs(st.chan_est[i - 1]) : 1e-15;
                CHECK(std::abs(approx(i, j) - exact(i, j)) <= bound + 1e-18);
            }
        }
    }
}

TEST_CASE("prediction rotates the channel and propagates covariance exactly") {
    const int n_fft = 2048;
    Rng rng(31);
    LinkFilterState st = random_state(rng, 3, 2.0);
    st.cov = random_hermitian_psd(rng, 4);

    const LinkFilterState pred = predict(st, n_fft);
    CHECK(pred.kind == StateKind::prediction);
    CHECK(pred.cfo_est == st.cfo_est);

    SUBCASE("tap magnitudes are preserved by the unit-modulus rotation") {
        for (int l = 0; l < 3; ++l) {
            CHECK(std::abs(pred.chan_est[l]) ==
                  doctest::Approx(std::abs(st.chan_est[l])).epsilon(1e-14));
        }
    }

    SUBCASE("zero offset leaves the state untouched") {
        st.cfo_est = 0.0;
        const LinkFilterState p0 = predict(st, n_fft);
        CHECK(p0.cfo_est == 0.0);
        for (int l = 0; l < 3; ++l) CHECK(p0.chan_est[l] == st.chan_est[l]);
    }

    SUBCASE("covariance equals an independent dense sandwich") {
        const CMat f = jacobian(st, n_fft, JacobianMode::first_order);
        CMat expected = sandwich(f, st.cov);
        expected.hermitize();
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                CHECK(std::abs(pred.cov(i, j) - expected(i, j)) < 1e-12);
    }

    SUBCASE("covariance stays Hermitian with non-negative diagonal") {
        CHECK(pred.cov.max_abs_asymmetry() < 1e-10);
        for (int i = 0; i < 4; ++i) CHECK(pred.cov(i, i).real() >= 0.0);
    }

    SUBCASE("process noise adds to the diagonal only") {
        const LinkFilterState noisy = predict(st, n_fft, JacobianMode::first_order, 0.25);
        for (int i = 0; i < 4; ++i) {
            CHECK(noisy.cov(i, i).real() ==
                  doctest::Approx(pred.cov(i, i).real() + 0.25).epsilon(1e-12));
        }
    }
}

TEST_CASE("update arithmetic and degenerate gains") {
    const int n_fft = 256;
    const TrainingSymbol s = generate_training_symbol(1, n_fft, 5);
    Rng rng(37);
    LinkFilterState st = random_state(rng, 3, 1.0);
    st.cov = random_hermitian_psd(rng, 4);
    const LinkFilterState pred = predict(st, n_fft);
    const ObservationRow row = observation_row(s, {0, 3, 7}, 12);
    const cplx y(0.4, -0.9);

    SUBCASE("innovation and its variance are reported faithfully") {
        const UpdateResult res = update(pred, row, y, 0.5);
        cplx gx(0.0, 0.0);
        for (int i = 0; i < 4; ++i)
            gx += row.g[i] * (i == 0 ? cplx(pred.cfo_est, 0.0) : pred.chan_est[i - 1]);
        CHECK(std::abs(res.innovation - (y - gx)) < 1e-12);

        cplx gpg(0.0, 0.0);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) gpg += row.g[i] * pred.cov(i, j) * std::conj(row.g[j]);
        CHECK(res.gpg == doctest::Approx(gpg.real()).epsilon(1e-12));
        CHECK(res.gpg >= 0.0);
        CHECK(std::abs(gpg.imag()) < 1e-12);
    }

    SUBCASE("an all-zero row carries no information") {
        ObservationRow zero;
        zero.g.assign(4, cplx(0.0, 0.0));
        const UpdateResult res = update(pred, zero, y, 0.5);
        CHECK(res.state.cfo_est == pred.cfo_est);
        for (int l = 0; l < 3; ++l) CHECK(res.state.chan_est[l] == pred.chan_est[l]);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) CHECK(res.state.cov(i, j) == pred.cov(i, j));
    }

    SUBCASE("a fully trusted prior ignores the measurement") {
        LinkFilterState sure = pred;
        sure.cov = CMat(4, 4);  // zero covariance: the prior is exact
        const UpdateResult res = update(sure, row, y, 0.5);
        CHECK(res.state.cfo_est == doctest::Approx(pred.cfo_est).epsilon(1e-14));
        for (int l = 0; l < 3; ++l)
            CHECK(std::abs(res.state.chan_est[l] - pred.chan_est[l]) < 1e-14);
    }

    SUBCASE("posterior matches the straight-line gain formulas") {
        const double sigma2 = 0.5;
        const UpdateResult res = update(pred, row, y, sigma2);

        // K = P G^H / (G P G^H + sigma2), x' = x + K (y - G x),
        // P' = P - K (G P); computed here without library kernels
        CVec pg(4, cplx(0.0, 0.0));
        CVec gp(4, cplx(0.0, 0.0));
        cplx gpg(0.0, 0.0);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                pg[i] += pred.cov(i, j) * std::conj(row.g[j]);
                gp[i] += row.g[j] * pred.cov(j, i);
            }
        }
        for (int i = 0; i < 4; ++i) gpg += row.g[i] * pg[i];
        const double s_var = gpg.real() + sigma2;
        cplx gx(0.0, 0.0);
        for (int i = 0; i < 4; ++i)
            gx += row.g[i] * (i == 0 ? cplx(pred.cfo_est, 0.0) : pred.chan_est[i - 1]);
        const cplx innov = y - gx;

        const cplx new_cfo = cplx(pred.cfo_est, 0.0) + pg[0] / s_var * innov;
        CHECK(res.state.cfo_est == doctest::Approx(new_cfo.real()).epsilon(1e-12));
        for (int l = 0; l < 3; ++l) {
            const cplx expected = pred.chan_est[l] + pg[l + 1] / s_var * innov;
            CHECK(std::abs(res.state.chan_est[l] - expected) < 1e-12);
        }
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                const cplx expected = pred.cov(i, j) - pg[i] / s_var * gp[j];
                CHECK(std::abs(res.state.cov(i, j) - expected) < 1e-10);
            }
        }
    }

    SUBCASE("posterior keeps the invariants") {
        const UpdateResult res = update(pred, row, y, 0.5);
        CHECK(res.state.kind == StateKind::posterior);
        CHECK(res.state.cov.max_abs_asymmetry() < 1e-10);
        for (int i = 0; i < 4; ++i) CHECK(res.state.cov(i, i).real() >= 0.0);
    }

    SUBCASE("negative noise variance is rejected, zero is allowed") {
        CHECK_THROWS_AS(update(pred, row, y, -1e-9), std::invalid_argument);
        CHECK_NOTHROW(update(pred, row, y, 0.0));
    }
}

TEST_CASE("with the offset pinned the filter solves the linear problem") {
    // truth: offset 0, so the recursion is a linear filter; it must agree
    // with batch least squares over the same samples
    const int n_fft = 512;
    const std::vector<int> delays = {0, 3, 7};
    const TrainingSymbol s = generate_training_symbol(1, n_fft, 41);
    Rng rng(43);
    CVec h = {cplx(0.8, -0.1), cplx(-0.3, 0.2), cplx(0.1, 0.1)};

    const double sigma2 = 0.01;
    std::vector<cplx> y(n_fft);
    for (int n = 0; n < n_fft; ++n) {
        cplx acc(0.0, 0.0);
        for (size_t l = 0; l < h.size(); ++l)
            acc += h[l] * s.samples[circ_index(n, delays[l], n_fft)];
        y[n] = acc + std::sqrt(sigma2) * rng.cgauss();
    }

    // uninformative channel prior, offset clamped by a zero-variance prior
    LinkFilterState st = initial_link_state(3, 0.0, 1e6);
    for (int n = 0; n < n_fft; ++n) {
        const LinkFilterState pred = predict(st, n_fft);
        st = update(pred, observation_row(s, delays, n), y[n], sigma2).state;
    }
    CHECK(st.cfo_est == 0.0);

    // batch normal equations, independent accumulation
    CMat gram(3, 3);
    CVec rhs(3, cplx(0.0, 0.0));
    for (int n = 0; n < n_fft; ++n) {
        CVec a(3);
        for (int l = 0; l < 3; ++l) a[l] = s.samples[circ_index(n, delays[l], n_fft)];
        for (int i = 0; i < 3; ++i) {
            rhs[i] += std::conj(a[i]) * y[n];
            for (int j = 0; j < 3; ++j) gram(i, j) += std::conj(a[i]) * a[j];
        }
    }
    const CMat gram_inv = invert(gram);
    for (int i = 0; i < 3; ++i) {
        cplx ls(0.0, 0.0);
        for (int j = 0; j < 3; ++j) ls += gram_inv(i, j) * rhs[j];
        CHECK(std::abs(st.chan_est[i] - ls) < 1e-6);
    }
}

TEST_CASE("single link converges on a clean frame") {
    const int n_fft = 2048;
    ScenarioConfig config;
    config.num_users = 1;
    config.num_antennas = 1;
    config.n_fft = n_fft;
    config.cfo_range = 0.5;
    config.seed = 47;
    const Scenario scenario = generate_scenario(config);
    const RxFrame frame =
        synthesize_rx_frame(scenario.config, scenario.symbols, scenario.channels);
    const std::vector<int>& delays = scenario.channels[0].delays;

    LinkFilterState st = initial_link_state(3, 0.25, 1.0 / 3.0);
    for (int n = 0; n < n_fft; ++n) {
        const LinkFilterState pred = predict(st, n_fft);
        st = update(pred, observation_row(scenario.symbols[0], delays, n), frame.at(0, n),
                    1e-12)
                 .state;
    }

    const double eps = scenario.config.cfo_truth[0];
    CHECK(std::abs(st.cfo_est - eps) < 1e-3);

    double err = 0.0, energy = 0.0;
    const cplx derot = std::polar(1.0, -2.0 * M_PI * (n_fft - 1) * st.cfo_est / n_fft);
    for (int l = 0; l < 3; ++l) {
        err += std::norm(st.chan_est[l] * derot - scenario.channels[0].taps[l]);
        energy += std::norm(scenario.channels[0].taps[l]);
    }
    CHECK(err / energy < 1e-4);
}
