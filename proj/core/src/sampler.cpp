#include "dd/sampler.hpp"

#include <string>

namespace dd {

TrajectoryPoint jump_back(const TokenSeq& current, const NoiseSeq& original_noise,
                          std::uint32_t t) {
    const std::uint32_t n = current.size();
    if (original_noise.size() != n)
        throw DomainError("jump_back: noise length does not match sequence length");
    if (t < 1 || t > n + 1)
        throw DomainError("jump_back: t=" + std::to_string(t) + " out of [1, " +
                          std::to_string(n + 1) + "]");
    return concat_mixed(slice_head(current, t - 1), slice_tail(original_noise, t), t);
}

void SamplePath::validate(const TimestepSchedule& schedule) const {
    if (timesteps.empty()) throw DomainError("sample path: empty");
    if (timesteps.front() != 1) throw DomainError("sample path: must start at timestep 1");
    for (std::size_t i = 0; i < timesteps.size(); ++i) {
        if (i > 0 && timesteps[i] <= timesteps[i - 1])
            throw DomainError("sample path: timesteps must be strictly increasing");
        if (!schedule.contains(timesteps[i]))
            throw DomainError("sample path: timestep " + std::to_string(timesteps[i]) +
                              " is not in the trained schedule");
    }
}

std::pair<TokenSeq, StepReport> sample(FinalPredictor& model, const TimestepSchedule& schedule,
                                       const SamplePath& path,
                                       std::optional<std::uint32_t> condition, Rng& rng) {
    path.validate(schedule);
    const std::uint32_t n = model.seq_len();
    NoiseSeq x1 = NoiseSeq::generate(rng.next_u64(), n, model.dim());

    StepReport report;
    TokenSeq current;
    current.condition = condition;
    for (std::uint32_t t : path.timesteps) {
        TrajectoryPoint xt;
        if (t == 1) {
            xt.prefix.condition = condition;
            xt.suffix = x1;
            xt.t = 1;
        } else {
            xt = jump_back(current, x1, t);
        }
        current = model.predict(xt, condition);
        ++report.student_calls;
    }
    return {current, report};
}

std::pair<TokenSeq, StepReport> sample_hybrid(FinalPredictor& model, const Teacher& teacher,
                                              const Codebook& cb, const SolverConfig& solver,
                                              const TimestepSchedule& schedule,
                                              std::uint32_t t_k2, std::uint32_t t_s,
                                              std::optional<std::uint32_t> condition, Rng& rng,
                                              HybridTeacherMode mode) {
    const std::uint32_t n = model.seq_len();
    if (!(1 < t_s && t_s < t_k2))
        throw DomainError("sample_hybrid: need 1 < t_s < t_k2");
    if (t_k2 > n) throw DomainError("sample_hybrid: t_k2 exceeds n");
    if (!schedule.contains(1) || !schedule.contains(t_k2))
        throw DomainError("sample_hybrid: path {1, t_k2} must lie in the trained schedule");

    NoiseSeq x1 = NoiseSeq::generate(rng.next_u64(), n, model.dim());
    StepReport report;

    // First jump from pure noise.
    TrajectoryPoint start;
    start.prefix.condition = condition;
    start.suffix = x1;
    start.t = 1;
    TokenSeq current = model.predict(start, condition);
    ++report.student_calls;

    // Teacher regenerates positions t_s .. t_k2-1, one token per call.
    TokenSeq prefix = slice_head(current, t_s - 1);
    prefix.condition = condition;
    for (std::uint32_t pos = t_s; pos < t_k2; ++pos) {
        NextTokenDist dist = teacher.next_dist(prefix);
        ++report.teacher_calls;
        std::uint32_t token;
        if (mode == HybridTeacherMode::deterministic)
            token = fm_map(x1.vec(pos), dist, cb, solver);
        else
            token = rng.next_categorical(dist.probs);
        prefix.ids.push_back(token);
    }

    // Second jump: keep the regenerated prefix, re-noise the rest.
    TokenSeq merged = prefix;
    merged.ids.insert(merged.ids.end(), current.ids.begin() + (t_k2 - 1), current.ids.end());
    TrajectoryPoint xt = jump_back(merged, x1, t_k2);
    current = model.predict(xt, condition);
    ++report.student_calls;

    return {current, report};
}

}  // namespace dd
