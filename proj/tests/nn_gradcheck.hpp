#pragma once

// Central finite-difference gradient oracle for the tensor engine. Kept
// independent of the backward implementation: it only re-evaluates the
// forward pass at perturbed inputs.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dd/nn.hpp"
#include "dd/rng.hpp"

namespace gradcheck {

using dd::nn::Graph;
using dd::nn::Tensor;

using BuildFn =
    std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>;

struct Result {
    bool ok = true;
    double worst = 0.0;
    std::string detail;
};

// Compares analytic gradients with (f(x+h) - f(x-h)) / 2h elementwise.
// Error is measured relative to max(|analytic|, |fd|, 1).
inline Result check(std::vector<Tensor> leaves, const BuildFn& build, double h = 1e-3,
                    double tol = 1e-4) {
    Result result;

    auto eval = [&](const std::vector<Tensor>& values) {
        Graph g;
        std::vector<Graph::NodeId> ids;
        ids.reserve(values.size());
        for (const Tensor& t : values) ids.push_back(g.constant(t));
        Graph::NodeId out = build(g, ids);
        return g.value(out).v[0];
    };

    Graph g;
    std::vector<Graph::NodeId> ids;
    for (const Tensor& t : leaves) ids.push_back(g.constant(t));
    Graph::NodeId out = build(g, ids);
    g.backward(out);

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const Tensor& analytic = g.gradient(ids[li]);
        for (std::size_t e = 0; e < leaves[li].v.size(); ++e) {
            std::vector<Tensor> plus = leaves, minus = leaves;
            plus[li].v[e] += h;
            minus[li].v[e] -= h;
            double fd = (eval(plus) - eval(minus)) / (2.0 * h);
            double a = analytic.v[e];
            double denom = std::max({std::abs(a), std::abs(fd), 1.0});
            double rel = std::abs(a - fd) / denom;
            result.worst = std::max(result.worst, rel);
            if (rel > tol) {
                result.ok = false;
                if (result.detail.empty())
                    result.detail = "leaf " + std::to_string(li) + " elem " +
                                    std::to_string(e) + ": analytic=" + std::to_string(a) +
                                    " fd=" + std::to_string(fd);
            }
        }
    }
    return result;
}

// Reduces an arbitrary (m, n) node to a scalar through fixed random
// weights, so every output element influences the loss.
inline Graph::NodeId scalarize(Graph& g, Graph::NodeId node, std::uint64_t seed) {
    const Tensor& t = g.value(node);
    dd::Rng rng(seed);
    Tensor left({1, t.shape[0]});
    for (double& v : left.v) v = rng.next_gaussian();
    Tensor right({t.shape.size() > 1 ? t.shape[1] : 1, 1});
    for (double& v : right.v) v = rng.next_gaussian();
    return g.matmul(g.matmul(g.constant(left), node), g.constant(right));
}

// One named primitive check over `seeds` random draws; returns the first
// failure (if any) and the worst relative error seen.
struct PrimitiveReport {
    std::string name;
    bool ok = true;
    double worst = 0.0;
    std::string detail;
};

inline PrimitiveReport run_many(const std::string& name, std::uint32_t seeds,
                                const std::function<Result(dd::Rng&)>& trial) {
    PrimitiveReport report;
    report.name = name;
    for (std::uint32_t s = 0; s < seeds; ++s) {
        dd::Rng rng(1000 + s);
        Result r = trial(rng);
        report.worst = std::max(report.worst, r.worst);
        if (!r.ok && report.ok) {
            report.ok = false;
            report.detail = "seed " + std::to_string(s) + ": " + r.detail;
        }
    }
    return report;
}

inline Tensor randt(std::vector<std::int64_t> shape, dd::Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.v) v = scale * rng.next_gaussian();
    return t;
}

// The full primitive suite at the given seed count. Shapes stay small so
// finite differences stay well-conditioned.
inline std::vector<PrimitiveReport> run_all(std::uint32_t seeds) {
    using dd::Rng;
    std::vector<PrimitiveReport> reports;

    reports.push_back(run_many("matmul", seeds, [](Rng& rng) {
        auto a = randt({3, 4}, rng);
        auto b = randt({4, 2}, rng);
        std::uint64_t salt = rng.next_u64();
        return check({a, b}, [salt](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return scalarize(g, g.matmul(ids[0], ids[1]), salt);
        });
    }));

    reports.push_back(run_many("add", seeds, [](Rng& rng) {
        auto a = randt({3, 4}, rng);
        auto b = randt({3, 4}, rng);
        std::uint64_t salt = rng.next_u64();
        return check({a, b}, [salt](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return scalarize(g, g.add(ids[0], ids[1]), salt);
        });
    }));

    reports.push_back(run_many("add_broadcast", seeds, [](Rng& rng) {
        auto a = randt({3, 4}, rng);
        auto b = randt({4}, rng);
        std::uint64_t salt = rng.next_u64();
        return check({a, b}, [salt](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return scalarize(g, g.add(ids[0], ids[1]), salt);
        });
    }));

    reports.push_back(run_many("scale", seeds, [](Rng& rng) {
        auto a = randt({2, 5}, rng);
        std::uint64_t salt = rng.next_u64();
        return check({a}, [salt](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return scalarize(g, g.scale(ids[0], -1.7), salt);
        });
    }));

    reports.push_back(run_many("gelu", seeds, [](Rng& rng) {
        auto a = randt({3, 3}, rng);
        std::uint64_t salt = rng.next_u64();
        return check({a}, [salt](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return scalarize(g, g.gelu(ids[0]), salt);
        });
    }));

    reports.push_back(run_many("layer_norm", seeds, [](Rng& rng) {
        auto x = randt({4, 6}, rng);
        auto gain = randt({6}, rng, 0.5);
        auto bias = randt({6}, rng, 0.5);
        std::uint64_t salt = rng.next_u64();
        return check({x, gain, bias},
                     [salt](Graph& g, const std::vector<Graph::NodeId>& ids) {
                         return scalarize(g, g.layer_norm(ids[0], ids[1], ids[2]), salt);
                     });
    }));

    reports.push_back(run_many("select_rows", seeds, [](Rng& rng) {
        auto table = randt({5, 3}, rng);
        std::vector<std::int64_t> rows{2, 0, 2, 4};  // repeats exercise accumulation
        std::uint64_t salt = rng.next_u64();
        return check({table}, [rows, salt](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return scalarize(g, g.select_rows(ids[0], rows), salt);
        });
    }));

    reports.push_back(run_many("vstack_slice", seeds, [](Rng& rng) {
        auto a = randt({2, 3}, rng);
        auto b = randt({3, 3}, rng);
        std::uint64_t salt = rng.next_u64();
        return check({a, b}, [salt](Graph& g, const std::vector<Graph::NodeId>& ids) {
            auto stacked = g.vstack({ids[0], ids[1]});
            return scalarize(g, g.slice_rows(stacked, 1, 4), salt);
        });
    }));

    reports.push_back(run_many("attention", seeds, [](Rng& rng) {
        auto q = randt({4, 3}, rng);
        auto k = randt({4, 3}, rng);
        auto v = randt({4, 3}, rng);
        std::vector<std::uint8_t> mask(16, 0);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j <= i; ++j) mask[static_cast<std::size_t>(i * 4 + j)] = 1;
        std::uint64_t salt = rng.next_u64();
        return check({q, k, v},
                     [mask, salt](Graph& g, const std::vector<Graph::NodeId>& ids) {
                         return scalarize(g, g.attention(ids[0], ids[1], ids[2], mask), salt);
                     });
    }));

    reports.push_back(run_many("softmax_cross_entropy", seeds, [](Rng& rng) {
        auto logits = randt({4, 5}, rng);
        std::vector<std::int64_t> targets;
        std::vector<std::uint8_t> active;
        for (int i = 0; i < 4; ++i) {
            targets.push_back(static_cast<std::int64_t>(rng.next_index(5)));
            active.push_back(i == 1 ? 0 : 1);
        }
        return check({logits},
                     [targets, active](Graph& g, const std::vector<Graph::NodeId>& ids) {
                         return g.softmax_cross_entropy(ids[0], targets, active);
                     });
    }));

    reports.push_back(run_many("mean_squared_error", seeds, [](Rng& rng) {
        auto pred = randt({3, 4}, rng);
        auto target = randt({3, 4}, rng);
        std::vector<std::uint8_t> active{1, 0, 1};
        return check({pred},
                     [target, active](Graph& g, const std::vector<Graph::NodeId>& ids) {
                         return g.mean_squared_error(ids[0], g.constant(target), active);
                     });
    }));

    reports.push_back(run_many("add_weighted", seeds, [](Rng& rng) {
        auto a = randt({2, 2}, rng);
        auto b = randt({2, 2}, rng);
        std::uint64_t salt = rng.next_u64();
        return check({a, b}, [salt](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return scalarize(g, g.add_weighted(ids[0], ids[1], 0.8, -1.3), salt);
        });
    }));

    return reports;
}

}  // namespace gradcheck
