#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dd/codebook.hpp"
#include "dd/errors.hpp"
#include "dd/teacher_dist.hpp"

namespace dd {

struct SolverConfig {
    enum class Scheme { euler, heun };

    Scheme scheme = Scheme::heun;
    std::uint32_t steps = 64;
    // The velocity carries a 1/(1-t) factor, so integration stops just
    // short of 1; the nearest-token projection absorbs the truncation.
    double t_end = 1.0 - 1e-4;
    // Power warp of the fixed time grid over sigma = 1-t: grid points are
    // sigma_k = (1 + (k/N)((1-t_end)^(1/rho) - 1))^rho. rho = 1 is the
    // uniform grid; larger values concentrate steps near t = 1, where the
    // posterior sharpens and nearby atoms separate.
    double rho = 7.0;

    void validate() const;

    // The k-th grid time, k in [0, steps]; t_0 = 0, t_steps = t_end.
    double grid_time(std::uint32_t k) const;
};

SolverConfig::Scheme scheme_from_string(const std::string& name);
std::string scheme_to_string(SolverConfig::Scheme scheme);

// Linear interpolation between endpoints: (1-t)*x0 + t*x1.
std::vector<double> interpolate(std::span<const double> x0, std::span<const double> x1,
                                double t);

// Posterior mixture weights over codebook entries at state (x, t):
// w_j proportional to p_j * exp(-|x - t c_j|^2 / (2 (1-t)^2)), normalized.
// Computed in log space with log-sum-exp; exponents reach magnitude ~1e6
// near t -> 1.
std::vector<double> mixture_weights(std::span<const double> x, double t,
                                    const NextTokenDist& p, const Codebook& cb);

// Velocity of the probability-flow ODE transporting N(0, I) to the
// discrete mixture sum_j p_j delta(c_j): V(x, t) = sum_j w_j (c_j - x)/(1-t).
std::vector<double> velocity(std::span<const double> x, double t, const NextTokenDist& p,
                             const Codebook& cb);

// Noise-prediction wrap of the velocity: eps(x, t) = x - t V(x, t).
std::vector<double> noise_prediction(std::span<const double> x, double t,
                                     const NextTokenDist& p, const Codebook& cb);

// Integrates dx = V(x, t) dt from t=0 to cfg.t_end with fixed steps.
// Deterministic for fixed inputs. Throws NumericError naming the step
// index if the state goes non-finite.
std::vector<double> solve_ode(std::span<const double> x0, const NextTokenDist& p,
                              const Codebook& cb, const SolverConfig& cfg);

// Same, returning the state after every step; entry k is (t_k, x(t_k)),
// including the initial state at t=0.
struct OdePoint {
    double t;
    std::vector<double> x;
};
std::vector<OdePoint> solve_ode_trace(std::span<const double> x0, const NextTokenDist& p,
                                      const Codebook& cb, const SolverConfig& cfg);

// The deterministic noise-to-token mapping: integrate from the noise
// vector, then project onto the codebook.
std::uint32_t fm_map(std::span<const double> noise, const NextTokenDist& p,
                     const Codebook& cb, const SolverConfig& cfg);

}  // namespace dd
