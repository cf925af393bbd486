#include "dd/sequence.hpp"

#include <string>

namespace dd {

NoiseSeq::NoiseSeq(std::uint32_t dim, std::vector<double> values,
                   std::optional<std::uint64_t> seed)
    : dim_(dim), values_(std::move(values)), seed_(seed) {
    if (dim_ == 0 && !values_.empty())
        throw DomainError("noise sequence: dim must be >= 1 when nonempty");
    if (dim_ != 0 && values_.size() % dim_ != 0)
        throw DomainError("noise sequence: value count must be a multiple of dim");
}

NoiseSeq NoiseSeq::generate(std::uint64_t seed, std::uint32_t n, std::uint32_t dim) {
    Rng rng(seed);
    std::vector<double> values(static_cast<std::size_t>(n) * dim);
    for (double& v : values) v = rng.next_gaussian();
    return NoiseSeq(dim, std::move(values), seed);
}

std::span<const double> NoiseSeq::vec(std::uint32_t i) const {
    if (i < 1 || i > size())
        throw DomainError("noise sequence: index " + std::to_string(i) + " out of [1, " +
                          std::to_string(size()) + "]");
    return {values_.data() + static_cast<std::size_t>(i - 1) * dim_, dim_};
}

TokenSeq slice_head(const TokenSeq& seq, std::uint32_t t) {
    if (t > seq.size())
        throw DomainError("slice_head: t=" + std::to_string(t) + " exceeds length " +
                          std::to_string(seq.size()));
    TokenSeq out;
    out.ids.assign(seq.ids.begin(), seq.ids.begin() + t);
    out.condition = seq.condition;
    return out;
}

NoiseSeq slice_head(const NoiseSeq& seq, std::uint32_t t) {
    if (t > seq.size())
        throw DomainError("slice_head: t=" + std::to_string(t) + " exceeds length " +
                          std::to_string(seq.size()));
    std::vector<double> values(seq.raw().begin(),
                               seq.raw().begin() + static_cast<std::size_t>(t) * seq.dim());
    return NoiseSeq(seq.dim(), std::move(values));
}

NoiseSeq slice_tail(const NoiseSeq& seq, std::uint32_t t) {
    if (t < 1 || t > seq.size() + 1)
        throw DomainError("slice_tail: t=" + std::to_string(t) + " out of [1, " +
                          std::to_string(seq.size() + 1) + "]");
    std::vector<double> values(seq.raw().begin() + static_cast<std::size_t>(t - 1) * seq.dim(),
                               seq.raw().end());
    return NoiseSeq(seq.dim(), std::move(values));
}

TrajectoryPoint concat_mixed(TokenSeq data_head, NoiseSeq noise_tail, std::uint32_t t) {
    if (t < 1) throw DomainError("concat_mixed: t must be >= 1");
    if (data_head.size() != t - 1)
        throw DomainError("concat_mixed: data head has length " +
                          std::to_string(data_head.size()) + ", expected t-1 = " +
                          std::to_string(t - 1));
    TrajectoryPoint point;
    point.prefix = std::move(data_head);
    point.suffix = std::move(noise_tail);
    point.t = t;
    return point;
}

}  // namespace dd
