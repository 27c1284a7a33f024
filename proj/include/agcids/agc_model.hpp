#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "agcids/common.hpp"

namespace agcids::sim {

/// A step change of load demand in one area (area index 0 or 1), p.u.
struct LoadStep {
    double t = 0.0;
    int area = 0;
    double magnitude = 0.0;
};

/// Two-area load-frequency-control plant with integral AGC. Both areas share
/// the same per-area constants.
struct AgcConfig {
    double governor_tc = 0.08;     // T_g, s
    double turbine_tc = 0.3;       // T_t, s
    double inertia = 10.0;         // M, s
    double damping = 1.0;          // D, p.u./Hz
    double tie_stiffness = 0.545;  // T12, p.u./Hz
    double bias = 20.6;            // B, p.u./Hz
    double integral_gain = 0.3;    // K_I
    // Random load process: Ornstein-Uhlenbeck per area, driven by the seed.
    double load_noise_std = 0.0;   // p.u./sqrt(s)
    double load_noise_reversion = 0.05;
    std::vector<LoadStep> load_steps;

    /// Governor droop implied by B = D + 1/R.
    double droop() const { return 1.0 / (bias - damping); }

    void validate() const {
        if (!(governor_tc > 0 && turbine_tc > 0 && inertia > 0 && damping >= 0 && tie_stiffness > 0 &&
              bias > damping && integral_gain > 0))
            throw PreconditionError("AGC gains and time constants must be positive (and bias > damping)");
        if (load_noise_std < 0 || load_noise_reversion < 0)
            throw PreconditionError("load noise parameters must be non-negative");
        for (const auto& s : load_steps)
            if (s.area < 0 || s.area > 1) throw PreconditionError("load step area must be 0 or 1");
    }
};

struct AgcState {
    double t = 0.0;
    double df1 = 0.0, df2 = 0.0;
    double dp_tie = 0.0;
    double dp_m1 = 0.0, dp_m2 = 0.0;
    double dp_g1 = 0.0, dp_g2 = 0.0;
    double ace1 = 0.0, ace2 = 0.0;

    bool operator==(const AgcState&) const = default;
};

/// Fixed-step explicit Euler integration over [0, horizon]. Returns
/// round(horizon/dt) + 1 states, the first being the zero initial state.
inline std::vector<AgcState> simulate_agc(const AgcConfig& cfg, double horizon, double dt, std::uint64_t seed) {
    if (!(dt > 0) || !(horizon >= dt)) throw PreconditionError("simulate_agc requires dt > 0 and horizon >= dt");
    cfg.validate();

    const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    const double two_pi_t12 = 2.0 * std::numbers::pi * cfg.tie_stiffness;
    const double inv_r = 1.0 / cfg.droop();
    const double noise_scale = cfg.load_noise_std * std::sqrt(dt);

    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<AgcState> out;
    out.reserve(steps + 1);
    AgcState s;
    double pc1 = 0.0, pc2 = 0.0;   // AGC setpoint integrators
    double noise1 = 0.0, noise2 = 0.0;
    out.push_back(s);

    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        double pl1 = noise1, pl2 = noise2;
        for (const auto& step : cfg.load_steps)
            if (t >= step.t) (step.area == 0 ? pl1 : pl2) += step.magnitude;

        const double d_df1 = (s.dp_m1 - pl1 - cfg.damping * s.df1 - s.dp_tie) / cfg.inertia;
        const double d_df2 = (s.dp_m2 - pl2 - cfg.damping * s.df2 + s.dp_tie) / cfg.inertia;
        const double d_tie = two_pi_t12 * (s.df1 - s.df2);
        const double d_m1 = (s.dp_g1 - s.dp_m1) / cfg.turbine_tc;
        const double d_m2 = (s.dp_g2 - s.dp_m2) / cfg.turbine_tc;
        const double d_g1 = (pc1 - inv_r * s.df1 - s.dp_g1) / cfg.governor_tc;
        const double d_g2 = (pc2 - inv_r * s.df2 - s.dp_g2) / cfg.governor_tc;

        pc1 += -cfg.integral_gain * s.ace1 * dt;
        pc2 += -cfg.integral_gain * s.ace2 * dt;
        s.df1 += d_df1 * dt;
        s.df2 += d_df2 * dt;
        s.dp_tie += d_tie * dt;
        s.dp_m1 += d_m1 * dt;
        s.dp_m2 += d_m2 * dt;
        s.dp_g1 += d_g1 * dt;
        s.dp_g2 += d_g2 * dt;
        s.ace1 = cfg.bias * s.df1 + s.dp_tie;
        s.ace2 = cfg.bias * s.df2 - s.dp_tie;
        s.t = static_cast<double>(k + 1) * dt;

        if (noise_scale > 0.0) {
            noise1 += -cfg.load_noise_reversion * noise1 * dt + noise_scale * gauss(rng);
            noise2 += -cfg.load_noise_reversion * noise2 * dt + noise_scale * gauss(rng);
        }

        const double vals[] = {s.df1, s.df2, s.dp_tie, s.dp_m1, s.dp_m2, s.dp_g1, s.dp_g2, s.ace1, s.ace2, pc1, pc2};
        for (double v : vals)
            if (!std::isfinite(v))
                throw NumericError("integration diverged at step " + std::to_string(k + 1) +
                                   " (t=" + std::to_string(s.t) + ")");
        out.push_back(s);
    }
    return out;
}

} // namespace agcids::sim
