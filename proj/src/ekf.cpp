#include "muekf/ekf.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace muekf {

CVec LinkFilterState::state_vector() const {
    CVec x(dim());
    x[0] = cplx(cfo_est, 0.0);
    for (int l = 0; l < l_max(); ++l) x[l + 1] = chan_est[l];
    return x;
}

LinkFilterState initial_link_state(int l_max, double cfo_prior_var, double chan_prior_var) {
    if (l_max < 1) throw std::invalid_argument("initial_link_state: l_max must be >= 1");
    LinkFilterState st;
    st.cfo_est = 0.0;
    st.chan_est.assign(l_max, cplx(0.0, 0.0));
    st.cov = CMat(l_max + 1, l_max + 1);
    st.cov(0, 0) = cfo_prior_var;
    for (int l = 1; l <= l_max; ++l) st.cov(l, l) = chan_prior_var;
    st.kind = StateKind::posterior;
    return st;
}

ObservationRow observation_row(const TrainingSymbol& symbol, const std::vector<int>& delays,
                               int n) {
    const int n_fft = static_cast<int>(symbol.samples.size());
    ObservationRow row;
    row.g.resize(delays.size() + 1);
    row.g[0] = cplx(0.0, 0.0);
    for (size_t l = 0; l < delays.size(); ++l)
        row.g[l + 1] = symbol.samples[circ_index(n, delays[l], n_fft)];
    return row;
}

CMat jacobian(const LinkFilterState& state, int n_fft, JacobianMode mode) {
    assert(state.kind == StateKind::posterior);
    const int l_max = state.l_max();
    const double theta = 2.0 * M_PI * state.cfo_est / n_fft;
    const cplx rot = std::polar(1.0, theta);
    const cplx coef(0.0, 2.0 * M_PI / n_fft);  // d/deps of the per-sample rotation
    const cplx col_coef = (mode == JacobianMode::exact) ? cmul(coef, rot) : coef;

    CMat f(l_max + 1, l_max + 1);
    f(0, 0) = 1.0;
    for (int l = 0; l < l_max; ++l) {
        f(l + 1, 0) = cmul(col_coef, state.chan_est[l]);
        f(l + 1, l + 1) = rot;
    }
    return f;
}

LinkFilterState predict(const LinkFilterState& state, int n_fft, JacobianMode mode,
                        double process_noise) {
    assert(state.kind == StateKind::posterior);
    const CMat f = jacobian(state, n_fft, mode);
    const cplx rot = std::polar(1.0, 2.0 * M_PI * state.cfo_est / n_fft);

    LinkFilterState pred;
    pred.cfo_est = state.cfo_est;
    pred.chan_est.resize(state.chan_est.size());
    for (size_t l = 0; l < state.chan_est.size(); ++l)
        pred.chan_est[l] = cmul(rot, state.chan_est[l]);
    pred.cov = matmul(matmul(f, state.cov), f.adjoint());
    if (process_noise != 0.0) pred.cov = add_diag(std::move(pred.cov), process_noise);
    pred.cov.hermitize();
    pred.kind = StateKind::prediction;
    return pred;
}

UpdateResult update(const LinkFilterState& pred, const ObservationRow& row, cplx y,
                    double sigma2) {
    assert(pred.kind == StateKind::prediction);
    if (sigma2 < 0.0) throw std::invalid_argument("update: sigma2 must be non-negative");
    if (static_cast<int>(row.g.size()) != pred.dim())
        throw std::invalid_argument("update: row dimension mismatch");

    // w = G P; P Hermitian makes P G^H = w^H
    const CVec w = row_times_mat(row.g, pred.cov);
    const double gpg = dot_row_colconj(w, row.g).real();
    const double s = gpg + sigma2;
    if (!(s > 0.0)) throw std::runtime_error("update: innovation variance not positive");
    const double s_inv = 1.0 / s;

    CVec gain(pred.dim());
    for (int i = 0; i < pred.dim(); ++i) gain[i] = std::conj(w[i]) * s_inv;

    const CVec x_pred = pred.state_vector();
    cplx gx(0.0, 0.0);
    for (int i = 0; i < pred.dim(); ++i) gx += cmul(row.g[i], x_pred[i]);
    const cplx innovation = y - gx;

    UpdateResult res;
    res.innovation = innovation;
    res.gpg = gpg;

    CVec x_post(pred.dim());
    for (int i = 0; i < pred.dim(); ++i) x_post[i] = x_pred[i] + cmul(gain[i], innovation);

    res.state.cfo_est = x_post[0].real();  // discard the imaginary part
    res.state.chan_est.assign(x_post.begin() + 1, x_post.end());

    // P(n|n) = (I - K G) P(n|n-1) = P - K w
    const CMat kw = outer(gain, w);
    res.state.cov = pred.cov;
    for (int i = 0; i < pred.dim(); ++i)
        for (int j = 0; j < pred.dim(); ++j) res.state.cov(i, j) -= kw(i, j);
    res.state.cov.hermitize();
    // the subtraction can round a fully-converged variance slightly below
    // zero (noiseless operation drives P toward singular); pin it
    for (int i = 0; i < pred.dim(); ++i)
        if (res.state.cov(i, i).real() < 0.0) res.state.cov(i, i) = 0.0;
    res.state.kind = StateKind::posterior;
    return res;
}

}  // namespace muekf
