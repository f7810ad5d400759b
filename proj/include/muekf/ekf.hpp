#pragma once

#include <vector>

#include "muekf/cmat.hpp"
#include "muekf/sigmodel.hpp"

namespace muekf {

// Per-link EKF over the state X = [eps, H_1 .. H_Lmax]^T where eps is the CFO
// in subcarrier units and H_l(n) = e^{j2pi n eps/N_F} h(p_l) is the
// phase-integrated channel. The state transition is X(n) = D(eps) X(n-1) with
// D = diag(1, e^{j2pi eps/N_F} I), observed through a single training sample:
// y(n) = G(n) X(n) + z(n), G(n) = [0, s[(n-p_1)], ..., s[(n-p_Lmax)]].

enum class StateKind { prediction, posterior };

// The transition Jacobian's CFO column. `exact` is the analytic derivative of
// D(eps)X, with d/deps e^{j2pi eps/N_F} H_l = (j2pi/N_F) e^{j2pi eps/N_F} H_l.
// `first_order` drops the e^{j2pi eps/N_F} factor from that column; the two differ
// by O(|2pi eps/N_F|^2) per unit channel energy and behave identically at
// OFDM-scale N_F.
enum class JacobianMode { first_order, exact };

struct LinkFilterState {
    double cfo_est = 0.0;   // eps-hat, kept real
    CVec chan_est;          // H-hat, length L_max
    CMat cov;               // P, (L_max+1) x (L_max+1), Hermitian
    StateKind kind = StateKind::posterior;

    int l_max() const { return static_cast<int>(chan_est.size()); }
    int dim() const { return l_max() + 1; }
    CVec state_vector() const;
};

// Measurement row G(n); first entry is structurally zero (the CFO is never
// observed directly, only through the predicted channel rotation).
struct ObservationRow {
    CVec g;
};

struct UpdateResult {
    LinkFilterState state;
    cplx innovation = 0.0;  // y - G X(n|n-1)
    double gpg = 0.0;       // Re[G P(n|n-1) G^H], for the noise tracker
};

// Zero state with diagonal prior: cfo_prior_var on the CFO entry (matched to
// the CFO draw range), chan_prior_var on each channel entry.
LinkFilterState initial_link_state(int l_max, double cfo_prior_var = 4.0,
                                   double chan_prior_var = 1.0);

ObservationRow observation_row(const TrainingSymbol& symbol, const std::vector<int>& delays,
                               int n);

CMat jacobian(const LinkFilterState& state, int n_fft,
              JacobianMode mode = JacobianMode::first_order);

// X(n|n-1) = D(eps-hat) X(n-1|n-1), P(n|n-1) = F P F^H + process_noise * I.
LinkFilterState predict(const LinkFilterState& state, int n_fft,
                        JacobianMode mode = JacobianMode::first_order,
                        double process_noise = 0.0);

// Scalar-innovation Kalman update; the updated CFO keeps only its real part.
// sigma2 may be zero (noiseless operation) as long as the innovation variance
// G P G^H + sigma2 stays positive.
UpdateResult update(const LinkFilterState& pred, const ObservationRow& row, cplx y,
                    double sigma2);

}  // namespace muekf
