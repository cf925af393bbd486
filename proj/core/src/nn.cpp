#include "dd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dd/io.hpp"
#include "dd/parallel.hpp"

namespace dd::nn {

namespace {

// Below this many multiply-adds a matmul runs single-threaded; the pool
// dispatch costs more than the loop.
constexpr std::int64_t kParallelFlops = 1 << 16;

void check_finite_scalar(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    v.assign(static_cast<std::size_t>(numel()), 0.0);
}

std::int64_t Tensor::numel() const {
    std::int64_t n = 1;
    for (std::int64_t e : shape) {
        if (e <= 0) throw DomainError("tensor: extents must be positive");
        n *= e;
    }
    return n;
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
}

Tensor Tensor::randn(std::vector<std::int64_t> shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (double& x : t.v) x = stddev * rng.next_gaussian();
    return t;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

Param::Param(std::string name, Tensor init) : name(std::move(name)), w(std::move(init)) {
    g = Tensor::zeros(w.shape);
}

void Param::zero_grad() { std::fill(g.v.begin(), g.v.end(), 0.0); }

Graph::NodeId Graph::push(Tensor val) {
    nodes_.push_back(Node{std::move(val), Tensor{}, nullptr, nullptr});
    return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::Node& Graph::at(NodeId id) { return nodes_.at(static_cast<std::size_t>(id)); }

const Tensor& Graph::value(NodeId id) const {
    return nodes_.at(static_cast<std::size_t>(id)).val;
}

const Tensor& Graph::gradient(NodeId id) const {
    return nodes_.at(static_cast<std::size_t>(id)).grad;
}

Graph::NodeId Graph::constant(Tensor t) { return push(std::move(t)); }

Graph::NodeId Graph::input(const Param& frozen) { return push(frozen.w); }

Graph::NodeId Graph::param(Param& p) {
    NodeId id = push(p.w);
    at(id).bound = &p;
    return id;
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
        throw DomainError("matmul: incompatible shapes");
    const std::int64_t m = A.shape[0], k = A.shape[1], n = B.shape[1];

    Tensor C({m, n});
    auto run_rows = [&](const double* av, const double* bv, double* cv, std::int64_t r0,
                        std::int64_t r1) {
        for (std::int64_t i = r0; i < r1; ++i) {
            double* crow = cv + i * n;
            const double* arow = av + i * k;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                double aik = arow[kk];
                if (aik == 0.0) continue;
                const double* brow = bv + kk * n;
                for (std::int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
            }
        }
    };
    if (m * n * k >= kParallelFlops) {
        parallel_ranges(static_cast<std::size_t>(m), [&](std::size_t r0, std::size_t r1) {
            run_rows(A.v.data(), B.v.data(), C.v.data(), static_cast<std::int64_t>(r0),
                     static_cast<std::int64_t>(r1));
        });
    } else {
        run_rows(A.v.data(), B.v.data(), C.v.data(), 0, m);
    }

    NodeId id = push(std::move(C));
    at(id).back = [this, id, a, b, m, k, n]() {
        const Tensor& dC = at(id).grad;
        const Tensor& A2 = value(a);
        const Tensor& B2 = value(b);
        // dA = dC * B^T
        {
            Tensor& dA = at(a).grad;
            auto rows = [&](std::size_t r0, std::size_t r1) {
                for (std::size_t i = r0; i < r1; ++i)
                    for (std::int64_t j = 0; j < n; ++j) {
                        double d = dC.v[i * static_cast<std::size_t>(n) +
                                        static_cast<std::size_t>(j)];
                        if (d == 0.0) continue;
                        const double* brow = B2.v.data() + j;
                        double* darow = dA.v.data() + i * static_cast<std::size_t>(k);
                        for (std::int64_t kk = 0; kk < k; ++kk)
                            darow[kk] += d * brow[kk * n];
                    }
            };
            if (m * n * k >= kParallelFlops)
                parallel_ranges(static_cast<std::size_t>(m), rows);
            else
                rows(0, static_cast<std::size_t>(m));
        }
        // dB = A^T * dC, partitioned over B's rows (the k axis) so each
        // output element has a single writer.
        {
            Tensor& dB = at(b).grad;
            auto rows = [&](std::size_t k0, std::size_t k1) {
                for (std::size_t kk = k0; kk < k1; ++kk) {
                    double* dbrow = dB.v.data() + kk * static_cast<std::size_t>(n);
                    for (std::int64_t i = 0; i < m; ++i) {
                        double aik = A2.v[static_cast<std::size_t>(i) *
                                              static_cast<std::size_t>(k) +
                                          kk];
                        if (aik == 0.0) continue;
                        const double* dcrow =
                            dC.v.data() + static_cast<std::size_t>(i) *
                                              static_cast<std::size_t>(n);
                        for (std::int64_t j = 0; j < n; ++j) dbrow[j] += aik * dcrow[j];
                    }
                }
            };
            if (m * n * k >= kParallelFlops)
                parallel_ranges(static_cast<std::size_t>(k), rows);
            else
                rows(0, static_cast<std::size_t>(k));
        }
    };
    return id;
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    bool broadcast = false;
    if (!same_shape(A, B)) {
        // (m,n) + (n) row broadcast
        if (A.shape.size() == 2 && B.shape.size() == 1 && A.shape[1] == B.shape[0])
            broadcast = true;
        else
            throw DomainError("add: incompatible shapes");
    }
    Tensor C = A;
    if (broadcast) {
        const std::size_t n = static_cast<std::size_t>(A.shape[1]);
        for (std::size_t i = 0; i < static_cast<std::size_t>(A.shape[0]); ++i)
            for (std::size_t j = 0; j < n; ++j) C.v[i * n + j] += B.v[j];
    } else {
        for (std::size_t i = 0; i < C.v.size(); ++i) C.v[i] += B.v[i];
    }
    NodeId id = push(std::move(C));
    at(id).back = [this, id, a, b, broadcast]() {
        const Tensor& dC = at(id).grad;
        Tensor& dA = at(a).grad;
        for (std::size_t i = 0; i < dC.v.size(); ++i) dA.v[i] += dC.v[i];
        Tensor& dB = at(b).grad;
        if (broadcast) {
            const std::size_t n = dB.v.size();
            for (std::size_t i = 0; i < dC.v.size(); ++i) dB.v[i % n] += dC.v[i];
        } else {
            for (std::size_t i = 0; i < dC.v.size(); ++i) dB.v[i] += dC.v[i];
        }
    };
    return id;
}

Graph::NodeId Graph::scale(NodeId a, double s) {
    Tensor C = value(a);
    for (double& x : C.v) x *= s;
    NodeId id = push(std::move(C));
    at(id).back = [this, id, a, s]() {
        const Tensor& dC = at(id).grad;
        Tensor& dA = at(a).grad;
        for (std::size_t i = 0; i < dC.v.size(); ++i) dA.v[i] += s * dC.v[i];
    };
    return id;
}

Graph::NodeId Graph::gelu(NodeId a) {
    const Tensor& A = value(a);
    Tensor C = A;
    for (double& x : C.v) x = 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
    NodeId id = push(std::move(C));
    at(id).back = [this, id, a]() {
        const Tensor& dC = at(id).grad;
        const Tensor& A2 = value(a);
        Tensor& dA = at(a).grad;
        constexpr double inv_sqrt2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < dC.v.size(); ++i) {
            double x = A2.v[i];
            double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            dA.v[i] += dC.v[i] * (cdf + x * pdf);
        }
    };
    return id;
}

Graph::NodeId Graph::layer_norm(NodeId x, NodeId gain, NodeId bias) {
    const Tensor& X = value(x);
    const Tensor& G = value(gain);
    const Tensor& B = value(bias);
    if (X.shape.size() != 2) throw DomainError("layer_norm: input must be rank 2");
    const std::int64_t rows = X.shape[0], cols = X.shape[1];
    if (G.shape != std::vector<std::int64_t>{cols} || B.shape != std::vector<std::int64_t>{cols})
        throw DomainError("layer_norm: gain/bias must be shaped (cols)");
    constexpr double eps = 1e-5;

    Tensor C({rows, cols});
    std::vector<double> mean(static_cast<std::size_t>(rows));
    std::vector<double> rstd(static_cast<std::size_t>(rows));
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* xr = X.v.data() + i * cols;
        double mu = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) mu += xr[j];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(cols);
        double rs = 1.0 / std::sqrt(var + eps);
        mean[static_cast<std::size_t>(i)] = mu;
        rstd[static_cast<std::size_t>(i)] = rs;
        double* cr = C.v.data() + i * cols;
        for (std::int64_t j = 0; j < cols; ++j)
            cr[j] = (xr[j] - mu) * rs * G.v[static_cast<std::size_t>(j)] +
                    B.v[static_cast<std::size_t>(j)];
    }
    NodeId id = push(std::move(C));
    at(id).back = [this, id, x, gain, bias, rows, cols, mean, rstd]() {
        const Tensor& dC = at(id).grad;
        const Tensor& X2 = value(x);
        const Tensor& G2 = value(gain);
        Tensor& dX = at(x).grad;
        Tensor& dG = at(gain).grad;
        Tensor& dB = at(bias).grad;
        for (std::int64_t i = 0; i < rows; ++i) {
            const double* xr = X2.v.data() + i * cols;
            const double* dcr = dC.v.data() + i * cols;
            double mu = mean[static_cast<std::size_t>(i)];
            double rs = rstd[static_cast<std::size_t>(i)];
            // xhat = (x - mu) * rs; dL/dxhat = dC * gain
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (std::int64_t j = 0; j < cols; ++j) {
                double xhat = (xr[j] - mu) * rs;
                double dxhat = dcr[j] * G2.v[static_cast<std::size_t>(j)];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
                dG.v[static_cast<std::size_t>(j)] += dcr[j] * xhat;
                dB.v[static_cast<std::size_t>(j)] += dcr[j];
            }
            double inv_cols = 1.0 / static_cast<double>(cols);
            double* dxr = dX.v.data() + i * cols;
            for (std::int64_t j = 0; j < cols; ++j) {
                double xhat = (xr[j] - mu) * rs;
                double dxhat = dcr[j] * G2.v[static_cast<std::size_t>(j)];
                dxr[j] += rs * (dxhat - inv_cols * sum_dxhat - xhat * inv_cols * sum_dxhat_xhat);
            }
        }
    };
    return id;
}

Graph::NodeId Graph::select_rows(NodeId table, std::vector<std::int64_t> rows) {
    const Tensor& T = value(table);
    if (T.shape.size() != 2) throw DomainError("select_rows: table must be rank 2");
    const std::int64_t num = T.shape[0], k = T.shape[1];
    for (std::int64_t r : rows)
        if (r < 0 || r >= num) throw DomainError("select_rows: row index out of range");
    Tensor C({static_cast<std::int64_t>(rows.size()), k});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(T.v.data() + rows[i] * k, k, C.v.data() + static_cast<std::int64_t>(i) * k);
    NodeId id = push(std::move(C));
    at(id).back = [this, id, table, rows = std::move(rows), k]() {
        const Tensor& dC = at(id).grad;
        Tensor& dT = at(table).grad;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* src = dC.v.data() + static_cast<std::int64_t>(i) * k;
            double* dst = dT.v.data() + rows[i] * k;
            for (std::int64_t j = 0; j < k; ++j) dst[j] += src[j];
        }
    };
    return id;
}

Graph::NodeId Graph::vstack(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw DomainError("vstack: no parts");
    std::int64_t cols = value(parts[0]).cols();
    std::int64_t rows = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        if (t.shape.size() != 2 || t.shape[1] != cols)
            throw DomainError("vstack: parts must be rank 2 with equal cols");
        rows += t.shape[0];
    }
    Tensor C({rows, cols});
    std::int64_t off = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        std::copy(t.v.begin(), t.v.end(), C.v.begin() + off * cols);
        off += t.shape[0];
    }
    NodeId id = push(std::move(C));
    at(id).back = [this, id, parts, cols]() {
        const Tensor& dC = at(id).grad;
        std::int64_t off2 = 0;
        for (NodeId p : parts) {
            Tensor& dP = at(p).grad;
            std::int64_t r = value(p).shape[0];
            for (std::int64_t i = 0; i < r * cols; ++i)
                dP.v[static_cast<std::size_t>(i)] +=
                    dC.v[static_cast<std::size_t>((off2 + i / cols) * cols + i % cols)];
            off2 += r;
        }
    };
    return id;
}

Graph::NodeId Graph::slice_rows(NodeId a, std::int64_t r0, std::int64_t r1) {
    const Tensor& A = value(a);
    if (A.shape.size() != 2) throw DomainError("slice_rows: input must be rank 2");
    if (r0 < 0 || r1 > A.shape[0] || r0 >= r1) throw DomainError("slice_rows: bad range");
    const std::int64_t cols = A.shape[1];
    Tensor C({r1 - r0, cols});
    std::copy(A.v.begin() + r0 * cols, A.v.begin() + r1 * cols, C.v.begin());
    NodeId id = push(std::move(C));
    at(id).back = [this, id, a, r0, cols]() {
        const Tensor& dC = at(id).grad;
        Tensor& dA = at(a).grad;
        for (std::size_t i = 0; i < dC.v.size(); ++i)
            dA.v[static_cast<std::size_t>(r0 * cols) + i] += dC.v[i];
    };
    return id;
}

Graph::NodeId Graph::attention(NodeId q, NodeId k, NodeId v,
                               const std::vector<std::uint8_t>& mask) {
    const Tensor& Q = value(q);
    const Tensor& K = value(k);
    const Tensor& V = value(v);
    if (Q.shape.size() != 2 || !same_shape(Q, K) || K.shape[0] != V.shape[0])
        throw DomainError("attention: bad shapes");
    const std::int64_t T = Q.shape[0], d = Q.shape[1], dv = V.shape[1];
    if (mask.size() != static_cast<std::size_t>(T * T))
        throw DomainError("attention: mask must be T*T");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    // probs[i,j]: attention of row i to row j, zero where masked.
    Tensor probs({T, T});
    for (std::int64_t i = 0; i < T; ++i) {
        double maxs = -std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < T; ++j) {
            if (!mask[static_cast<std::size_t>(i * T + j)]) continue;
            double s = 0.0;
            for (std::int64_t e = 0; e < d; ++e)
                s += Q.v[static_cast<std::size_t>(i * d + e)] *
                     K.v[static_cast<std::size_t>(j * d + e)];
            s *= inv_sqrt_d;
            probs.v[static_cast<std::size_t>(i * T + j)] = s;
            maxs = std::max(maxs, s);
        }
        if (!std::isfinite(maxs)) continue;  // fully masked row -> zero output
        double denom = 0.0;
        for (std::int64_t j = 0; j < T; ++j) {
            std::size_t idx = static_cast<std::size_t>(i * T + j);
            if (!mask[idx]) {
                probs.v[idx] = 0.0;
                continue;
            }
            probs.v[idx] = std::exp(probs.v[idx] - maxs);
            denom += probs.v[idx];
        }
        for (std::int64_t j = 0; j < T; ++j) probs.v[static_cast<std::size_t>(i * T + j)] /= denom;
    }

    Tensor C({T, dv});
    for (std::int64_t i = 0; i < T; ++i)
        for (std::int64_t j = 0; j < T; ++j) {
            double p = probs.v[static_cast<std::size_t>(i * T + j)];
            if (p == 0.0) continue;
            for (std::int64_t e = 0; e < dv; ++e)
                C.v[static_cast<std::size_t>(i * dv + e)] +=
                    p * V.v[static_cast<std::size_t>(j * dv + e)];
        }

    NodeId id = push(std::move(C));
    at(id).back = [this, id, q, k, v, probs = std::move(probs), T, d, dv, inv_sqrt_d]() {
        const Tensor& dC = at(id).grad;
        const Tensor& Q2 = value(q);
        const Tensor& K2 = value(k);
        const Tensor& V2 = value(v);
        Tensor& dQ = at(q).grad;
        Tensor& dK = at(k).grad;
        Tensor& dV = at(v).grad;

        // dV += P^T dC ; dP = dC V^T ; dS = P o (dP - rowsum(dP o P)) / sqrt(d)
        for (std::int64_t i = 0; i < T; ++i) {
            double row_dot = 0.0;
            std::vector<double> dP(static_cast<std::size_t>(T), 0.0);
            for (std::int64_t j = 0; j < T; ++j) {
                double p = probs.v[static_cast<std::size_t>(i * T + j)];
                if (p == 0.0) continue;
                double dp = 0.0;
                for (std::int64_t e = 0; e < dv; ++e) {
                    double dc = dC.v[static_cast<std::size_t>(i * dv + e)];
                    dV.v[static_cast<std::size_t>(j * dv + e)] += p * dc;
                    dp += dc * V2.v[static_cast<std::size_t>(j * dv + e)];
                }
                dP[static_cast<std::size_t>(j)] = dp;
                row_dot += dp * p;
            }
            for (std::int64_t j = 0; j < T; ++j) {
                double p = probs.v[static_cast<std::size_t>(i * T + j)];
                if (p == 0.0) continue;
                double ds = p * (dP[static_cast<std::size_t>(j)] - row_dot) * inv_sqrt_d;
                for (std::int64_t e = 0; e < d; ++e) {
                    dQ.v[static_cast<std::size_t>(i * d + e)] +=
                        ds * K2.v[static_cast<std::size_t>(j * d + e)];
                    dK.v[static_cast<std::size_t>(j * d + e)] +=
                        ds * Q2.v[static_cast<std::size_t>(i * d + e)];
                }
            }
        }
    };
    return id;
}

Graph::NodeId Graph::softmax_cross_entropy(NodeId logits,
                                           const std::vector<std::int64_t>& targets,
                                           const std::vector<std::uint8_t>& active) {
    const Tensor& L = value(logits);
    if (L.shape.size() != 2) throw DomainError("softmax_cross_entropy: logits must be rank 2");
    const std::int64_t rows = L.shape[0], cols = L.shape[1];
    if (targets.size() != static_cast<std::size_t>(rows) ||
        active.size() != static_cast<std::size_t>(rows))
        throw DomainError("softmax_cross_entropy: targets/active must have one entry per row");

    std::int64_t n_active = 0;
    for (std::uint8_t a : active) n_active += a ? 1 : 0;

    Tensor probs({rows, cols});
    double loss = 0.0;
    for (std::int64_t i = 0; i < rows; ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        std::int64_t tgt = targets[static_cast<std::size_t>(i)];
        if (tgt < 0 || tgt >= cols) throw DomainError("softmax_cross_entropy: target out of range");
        const double* lr = L.v.data() + i * cols;
        double maxl = lr[0];
        for (std::int64_t j = 1; j < cols; ++j) maxl = std::max(maxl, lr[j]);
        double denom = 0.0;
        double* pr = probs.v.data() + i * cols;
        for (std::int64_t j = 0; j < cols; ++j) {
            pr[j] = std::exp(lr[j] - maxl);
            denom += pr[j];
        }
        for (std::int64_t j = 0; j < cols; ++j) pr[j] /= denom;
        loss -= std::log(pr[tgt]);
    }
    if (n_active > 0) loss /= static_cast<double>(n_active);
    check_finite_scalar(loss, "softmax_cross_entropy");

    Tensor out({1});
    out.v[0] = loss;
    NodeId id = push(std::move(out));
    at(id).back = [this, id, logits, targets, active, probs = std::move(probs), rows, cols,
                   n_active]() {
        if (n_active == 0) return;
        double gout = at(id).grad.v[0] / static_cast<double>(n_active);
        Tensor& dL = at(logits).grad;
        for (std::int64_t i = 0; i < rows; ++i) {
            if (!active[static_cast<std::size_t>(i)]) continue;
            const double* pr = probs.v.data() + i * cols;
            double* dlr = dL.v.data() + i * cols;
            std::int64_t tgt = targets[static_cast<std::size_t>(i)];
            for (std::int64_t j = 0; j < cols; ++j)
                dlr[j] += gout * (pr[j] - (j == tgt ? 1.0 : 0.0));
        }
    };
    return id;
}

Graph::NodeId Graph::mean_squared_error(NodeId pred, NodeId target,
                                        const std::vector<std::uint8_t>& active) {
    const Tensor& P = value(pred);
    const Tensor& T = value(target);
    if (!same_shape(P, T) || P.shape.size() != 2)
        throw DomainError("mean_squared_error: pred/target must be rank 2 with equal shape");
    const std::int64_t rows = P.shape[0], cols = P.shape[1];
    if (active.size() != static_cast<std::size_t>(rows))
        throw DomainError("mean_squared_error: active must have one entry per row");

    std::int64_t n_active = 0;
    for (std::uint8_t a : active) n_active += a ? 1 : 0;

    double loss = 0.0;
    for (std::int64_t i = 0; i < rows; ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        for (std::int64_t j = 0; j < cols; ++j) {
            double diff = P.v[static_cast<std::size_t>(i * cols + j)] -
                          T.v[static_cast<std::size_t>(i * cols + j)];
            loss += diff * diff;
        }
    }
    if (n_active > 0) loss /= static_cast<double>(n_active * cols);
    check_finite_scalar(loss, "mean_squared_error");

    Tensor out({1});
    out.v[0] = loss;
    NodeId id = push(std::move(out));
    at(id).back = [this, id, pred, target, active, rows, cols, n_active]() {
        if (n_active == 0) return;
        double gout = at(id).grad.v[0] * 2.0 / static_cast<double>(n_active * cols);
        const Tensor& P2 = value(pred);
        const Tensor& T2 = value(target);
        Tensor& dP = at(pred).grad;
        for (std::int64_t i = 0; i < rows; ++i) {
            if (!active[static_cast<std::size_t>(i)]) continue;
            for (std::int64_t j = 0; j < cols; ++j) {
                std::size_t idx = static_cast<std::size_t>(i * cols + j);
                dP.v[idx] += gout * (P2.v[idx] - T2.v[idx]);
            }
        }
    };
    return id;
}

Graph::NodeId Graph::add_weighted(NodeId a, NodeId b, double wa, double wb) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!same_shape(A, B)) throw DomainError("add_weighted: shape mismatch");
    Tensor C = A;
    for (std::size_t i = 0; i < C.v.size(); ++i) C.v[i] = wa * A.v[i] + wb * B.v[i];
    NodeId id = push(std::move(C));
    at(id).back = [this, id, a, b, wa, wb]() {
        const Tensor& dC = at(id).grad;
        Tensor& dA = at(a).grad;
        Tensor& dB = at(b).grad;
        for (std::size_t i = 0; i < dC.v.size(); ++i) {
            dA.v[i] += wa * dC.v[i];
            dB.v[i] += wb * dC.v[i];
        }
    };
    return id;
}

void Graph::backward(NodeId id) {
    Node& root = at(id);
    if (root.val.numel() != 1) throw DomainError("backward: root must be scalar");
    for (Node& node : nodes_) {
        node.grad = Tensor::zeros(node.val.shape);
    }
    root.grad.v[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back();
    }
    for (Node& node : nodes_) {
        if (!node.bound) continue;
        for (std::size_t i = 0; i < node.grad.v.size(); ++i)
            node.bound->g.v[i] += node.grad.v[i];
    }
}

AdamW::AdamW(std::vector<Param*> params, AdamwConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Param* p : params_) {
        m_.push_back(Tensor::zeros(p->w.shape));
        v_.push_back(Tensor::zeros(p->w.shape));
    }
}

void AdamW::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Param& p = *params_[pi];
        for (double gv : p.g.v)
            if (!std::isfinite(gv))
                throw NumericError("adamw: non-finite gradient for parameter '" + p.name + "'");
        for (std::size_t i = 0; i < p.w.v.size(); ++i) {
            double g = p.g.v[i];
            m_[pi].v[i] = cfg_.beta1 * m_[pi].v[i] + (1.0 - cfg_.beta1) * g;
            v_[pi].v[i] = cfg_.beta2 * v_[pi].v[i] + (1.0 - cfg_.beta2) * g * g;
            double mhat = m_[pi].v[i] / bc1;
            double vhat = v_[pi].v[i] / bc2;
            p.w.v[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                   cfg_.weight_decay * p.w.v[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (Param* p : params_) p->zero_grad();
}

Ema::Ema(std::vector<Param*> params, double decay)
    : params_(std::move(params)), decay_(decay) {
    if (!(decay_ >= 0.0 && decay_ <= 1.0)) throw DomainError("ema: decay must be in [0, 1]");
    shadow_.reserve(params_.size());
    for (Param* p : params_) shadow_.push_back(p->w);
}

void Ema::update() {
    if (swapped_) throw DomainError("ema: update while shadow weights are swapped in");
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        const Tensor& w = params_[pi]->w;
        Tensor& s = shadow_[pi];
        if (!same_shape(w, s)) throw DomainError("ema: shape mismatch");
        for (std::size_t i = 0; i < s.v.size(); ++i)
            s.v[i] = decay_ * s.v[i] + (1.0 - decay_) * w.v[i];
    }
}

void Ema::swap() {
    for (std::size_t pi = 0; pi < params_.size(); ++pi)
        std::swap(params_[pi]->w.v, shadow_[pi].v);
    swapped_ = !swapped_;
}

void write_params(std::ostream& os, const std::vector<const Param*>& params) {
    ByteWriter w(os);
    w.u64(params.size());
    for (const Param* p : params) {
        w.str(p->name);
        w.u32(static_cast<std::uint32_t>(p->w.shape.size()));
        for (std::int64_t e : p->w.shape) w.u64(static_cast<std::uint64_t>(e));
        for (double v : p->w.v) w.f32(static_cast<float>(v));
    }
}

void read_params(std::istream& is, const std::vector<Param*>& params) {
    ByteReader r(is);
    std::uint64_t count = r.u64();
    if (count != params.size())
        throw IoError("checkpoint: expected " + std::to_string(params.size()) +
                      " parameters, found " + std::to_string(count));
    for (Param* p : params) {
        std::string name = r.str();
        if (name != p->name)
            throw IoError("checkpoint: expected parameter '" + p->name + "', found '" + name +
                          "'");
        std::uint32_t rank = r.u32();
        std::vector<std::int64_t> shape(rank);
        for (auto& e : shape) e = static_cast<std::int64_t>(r.u64());
        if (shape != p->w.shape) throw IoError("checkpoint: shape mismatch for '" + name + "'");
        for (double& v : p->w.v) v = static_cast<double>(r.f32());
    }
}

}  // namespace dd::nn
