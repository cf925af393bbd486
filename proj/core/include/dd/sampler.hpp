#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dd/codebook.hpp"
#include "dd/flowmatch.hpp"
#include "dd/sequence.hpp"
#include "dd/student.hpp"
#include "dd/teacher.hpp"
#include "dd/trajgen.hpp"

namespace dd {

// Invocation accounting, one entry per forward pass actually executed.
struct StepReport {
    std::uint64_t student_calls = 0;
    std::uint64_t teacher_calls = 0;

    std::uint64_t total() const { return student_calls + teacher_calls; }
};

// Anything that can jump from a trajectory point to the final sequence.
class FinalPredictor {
public:
    virtual ~FinalPredictor() = default;
    virtual std::uint32_t seq_len() const = 0;
    virtual std::uint32_t dim() const = 0;
    virtual TokenSeq predict(const TrajectoryPoint& xt,
                             std::optional<std::uint32_t> condition) = 0;
};

// Trained student behind the predictor interface.
class StudentPredictor : public FinalPredictor {
public:
    StudentPredictor(const StudentModel& model, const Codebook& cb,
                     LogitDecode decode = LogitDecode::argmax, Rng* decode_rng = nullptr)
        : model_(model), cb_(cb), decode_(decode), decode_rng_(decode_rng) {}

    std::uint32_t seq_len() const override { return model_.seq_len(); }
    std::uint32_t dim() const override { return model_.dim(); }
    TokenSeq predict(const TrajectoryPoint& xt,
                     std::optional<std::uint32_t> condition) override {
        return model_.predict_final(xt, cb_, condition, decode_, decode_rng_);
    }

private:
    const StudentModel& model_;
    const Codebook& cb_;
    LogitDecode decode_;
    Rng* decode_rng_;
};

// Perfect student: continues the trajectory with the teacher's own flow
// mapping. Useful as a ground-truth reference for sampler behavior.
class OraclePredictor : public FinalPredictor {
public:
    OraclePredictor(const Teacher& teacher, const Codebook& cb, SolverConfig solver)
        : teacher_(teacher), cb_(cb), solver_(solver) {}

    std::uint32_t seq_len() const override { return teacher_.seq_len(); }
    std::uint32_t dim() const override { return cb_.dim(); }
    TokenSeq predict(const TrajectoryPoint& xt,
                     std::optional<std::uint32_t> condition) override {
        return complete_trajectory(teacher_, cb_, solver_, xt, condition);
    }

private:
    const Teacher& teacher_;
    const Codebook& cb_;
    SolverConfig solver_;
};

// Replaces everything from position t on with the original noise:
// (current_1 .. current_{t-1}, noise_t .. noise_n).
TrajectoryPoint jump_back(const TokenSeq& current, const NoiseSeq& original_noise,
                          std::uint32_t t);

// Timesteps to visit, a subset of the trained schedule starting at 1.
struct SamplePath {
    std::vector<std::uint32_t> timesteps;

    void validate(const TimestepSchedule& schedule) const;
};

// Few-step generation: draw one noise sequence, then for each path
// timestep re-noise positions >= t and apply the predictor. The result of
// the last jump is returned. Invocations: |path| predictor calls.
std::pair<TokenSeq, StepReport> sample(FinalPredictor& model, const TimestepSchedule& schedule,
                                       const SamplePath& path,
                                       std::optional<std::uint32_t> condition, Rng& rng);

enum class HybridTeacherMode {
    // Teacher tokens come from the flow mapping on the stored noise; the
    // whole sample stays a deterministic function of the noise sequence.
    deterministic,
    // Teacher tokens are drawn categorically from rng.
    stochastic,
};

// Two predictor jumps with a teacher segment in between: predictor at
// t=1, re-noise at t_s, teacher regenerates positions t_s .. t_k2 - 1 one
// at a time, predictor at t_k2. Requires 1 < t_s < t_k2 and both 1 and
// t_k2 in the schedule. Invocations: 2 + (t_k2 - t_s).
std::pair<TokenSeq, StepReport> sample_hybrid(FinalPredictor& model, const Teacher& teacher,
                                              const Codebook& cb, const SolverConfig& solver,
                                              const TimestepSchedule& schedule,
                                              std::uint32_t t_k2, std::uint32_t t_s,
                                              std::optional<std::uint32_t> condition, Rng& rng,
                                              HybridTeacherMode mode =
                                                  HybridTeacherMode::deterministic);

}  // namespace dd
