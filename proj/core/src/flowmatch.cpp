#include "dd/flowmatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dd {

void SolverConfig::validate() const {
    if (steps < 1) throw ConfigError("solver: steps must be >= 1");
    if (!(t_end > 0.0 && t_end <= 1.0)) throw ConfigError("solver: t_end must be in (0, 1]");
    if (scheme == Scheme::heun && t_end >= 1.0)
        throw ConfigError("solver: heun evaluates the velocity at t_end, which needs t_end < 1");
    if (!(rho >= 1.0)) throw ConfigError("solver: rho must be >= 1");
}

double SolverConfig::grid_time(std::uint32_t k) const {
    if (k == 0) return 0.0;
    if (k >= steps) return t_end;
    double sigma_min = 1.0 - t_end;
    double frac = static_cast<double>(k) / steps;
    double root = 1.0 + frac * (std::pow(sigma_min, 1.0 / rho) - 1.0);
    return 1.0 - std::pow(root, rho);
}

SolverConfig::Scheme scheme_from_string(const std::string& name) {
    if (name == "euler") return SolverConfig::Scheme::euler;
    if (name == "heun") return SolverConfig::Scheme::heun;
    throw ConfigError("solver: unknown scheme '" + name + "' (expected euler or heun)");
}

std::string scheme_to_string(SolverConfig::Scheme scheme) {
    return scheme == SolverConfig::Scheme::euler ? "euler" : "heun";
}

std::vector<double> interpolate(std::span<const double> x0, std::span<const double> x1,
                                double t) {
    if (x0.size() != x1.size()) throw DomainError("interpolate: dimension mismatch");
    std::vector<double> out(x0.size());
    for (std::size_t k = 0; k < x0.size(); ++k) out[k] = (1.0 - t) * x0[k] + t * x1[k];
    return out;
}

std::vector<double> mixture_weights(std::span<const double> x, double t,
                                    const NextTokenDist& p, const Codebook& cb) {
    if (!(t >= 0.0 && t < 1.0))
        throw DomainError("mixture_weights: t=" + std::to_string(t) + " outside [0, 1)");
    if (x.size() != cb.dim()) throw DomainError("mixture_weights: dimension mismatch");
    if (p.vocab() != cb.size()) throw DomainError("mixture_weights: vocab mismatch");

    const double inv_var = 1.0 / (2.0 * (1.0 - t) * (1.0 - t));
    const std::uint32_t V = cb.size();
    const std::uint32_t C = cb.dim();

    std::vector<double> logw(V, -std::numeric_limits<double>::infinity());
    double max_logw = -std::numeric_limits<double>::infinity();
    for (std::uint32_t j = 0; j < V; ++j) {
        double pj = p.probs[j];
        if (pj <= 0.0) continue;
        const float* c = cb.raw().data() + static_cast<std::size_t>(j) * C;
        double d2 = 0.0;
        for (std::uint32_t k = 0; k < C; ++k) {
            double diff = x[k] - t * static_cast<double>(c[k]);
            d2 += diff * diff;
        }
        logw[j] = std::log(pj) - d2 * inv_var;
        max_logw = std::max(max_logw, logw[j]);
    }
    if (!std::isfinite(max_logw))
        throw DomainError("mixture_weights: distribution has no positive mass");

    std::vector<double> w(V, 0.0);
    double denom = 0.0;
    for (std::uint32_t j = 0; j < V; ++j) {
        if (std::isfinite(logw[j])) {
            w[j] = std::exp(logw[j] - max_logw);
            denom += w[j];
        }
    }
    for (double& wj : w) wj /= denom;
    return w;
}

std::vector<double> velocity(std::span<const double> x, double t, const NextTokenDist& p,
                             const Codebook& cb) {
    std::vector<double> w = mixture_weights(x, t, p, cb);
    const std::uint32_t V = cb.size();
    const std::uint32_t C = cb.dim();
    const double inv_gap = 1.0 / (1.0 - t);

    std::vector<double> v(C, 0.0);
    for (std::uint32_t j = 0; j < V; ++j) {
        if (w[j] == 0.0) continue;
        const float* c = cb.raw().data() + static_cast<std::size_t>(j) * C;
        for (std::uint32_t k = 0; k < C; ++k)
            v[k] += w[j] * (static_cast<double>(c[k]) - x[k]);
    }
    for (double& vk : v) vk *= inv_gap;
    return v;
}

std::vector<double> noise_prediction(std::span<const double> x, double t,
                                     const NextTokenDist& p, const Codebook& cb) {
    std::vector<double> v = velocity(x, t, p, cb);
    std::vector<double> eps(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) eps[k] = x[k] - t * v[k];
    return eps;
}

namespace {

void check_finite(const std::vector<double>& x, std::uint32_t step) {
    for (double v : x)
        if (!std::isfinite(v))
            throw NumericError("ode solver: non-finite state at step " + std::to_string(step));
}

template <typename OnStep>
void integrate(std::span<const double> x0, const NextTokenDist& p, const Codebook& cb,
               const SolverConfig& cfg, OnStep&& on_step) {
    cfg.validate();
    p.validate();
    std::vector<double> x(x0.begin(), x0.end());
    check_finite(x, 0);
    on_step(0.0, x);
    std::vector<double> xe(x.size());
    for (std::uint32_t s = 0; s < cfg.steps; ++s) {
        double t = cfg.grid_time(s);
        double t_next = cfg.grid_time(s + 1);
        std::vector<double> k1 = velocity(x, t, p, cb);
        if (cfg.scheme == SolverConfig::Scheme::euler) {
            for (std::size_t k = 0; k < x.size(); ++k) x[k] += (t_next - t) * k1[k];
        } else {
            for (std::size_t k = 0; k < x.size(); ++k) xe[k] = x[k] + (t_next - t) * k1[k];
            std::vector<double> k2 = velocity(xe, t_next, p, cb);
            for (std::size_t k = 0; k < x.size(); ++k)
                x[k] += 0.5 * (t_next - t) * (k1[k] + k2[k]);
        }
        check_finite(x, s + 1);
        on_step(t_next, x);
    }
}

}  // namespace

std::vector<double> solve_ode(std::span<const double> x0, const NextTokenDist& p,
                              const Codebook& cb, const SolverConfig& cfg) {
    std::vector<double> out;
    integrate(x0, p, cb, cfg, [&](double, const std::vector<double>& x) { out = x; });
    return out;
}

std::vector<OdePoint> solve_ode_trace(std::span<const double> x0, const NextTokenDist& p,
                                      const Codebook& cb, const SolverConfig& cfg) {
    std::vector<OdePoint> trace;
    trace.reserve(cfg.steps + 1);
    integrate(x0, p, cb, cfg,
              [&](double t, const std::vector<double>& x) { trace.push_back({t, x}); });
    return trace;
}

std::uint32_t fm_map(std::span<const double> noise, const NextTokenDist& p,
                     const Codebook& cb, const SolverConfig& cfg) {
    std::vector<double> endpoint = solve_ode(noise, p, cb, cfg);
    return nearest_token(endpoint, cb);
}

}  // namespace dd
