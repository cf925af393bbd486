#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dd/errors.hpp"

namespace dd {

// Probability vector over the codebook for one position. Entries are
// non-negative and sum to 1 within 1e-9.
struct NextTokenDist {
    std::vector<double> probs;

    std::uint32_t vocab() const { return static_cast<std::uint32_t>(probs.size()); }

    void validate() const {
        if (probs.empty()) throw DomainError("next-token distribution: empty");
        double sum = 0.0;
        for (double p : probs) {
            if (!(p >= 0.0) || !std::isfinite(p))
                throw DomainError("next-token distribution: negative or non-finite entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw DomainError("next-token distribution: sums to " + std::to_string(sum) +
                              ", expected 1");
    }

    // 1-based accessor matching token ids.
    double prob(std::uint32_t id) const { return probs.at(id - 1); }
};

}  // namespace dd
