#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <vector>

#include "dd/codebook.hpp"
#include "dd/flowmatch.hpp"
#include "dd/sequence.hpp"
#include "dd/teacher.hpp"

namespace dd {

// A (noise sequence, data sequence) training pair. The noise is fully
// determined by `seed`, and the data is fully determined by (teacher,
// codebook, solver, seed, condition), so stores persist only the compact
// fields and re-derive the noise on load.
struct PairRecord {
    NoiseSeq noise;
    TokenSeq data;
    std::optional<std::uint32_t> condition;
    std::uint64_t seed = 0;
};

// Continues a trajectory point to the full data sequence: for each
// position from t to n, queries the teacher on the data prefix and maps
// that position's noise vector through the flow. Exactly n-t+1 teacher
// queries and ODE solves. Solver failures rethrow tagged with the
// position.
TokenSeq complete_trajectory(const Teacher& teacher, const Codebook& cb,
                             const SolverConfig& solver, const TrajectoryPoint& point,
                             std::optional<std::uint32_t> condition);

// Draws the noise sequence from `seed` and walks it to data.
PairRecord generate_pair(const Teacher& teacher, const Codebook& cb,
                         std::optional<std::uint32_t> condition, std::uint64_t seed,
                         const SolverConfig& solver);

// Restores the trajectory point at position t from a stored pair: data
// prefix 1..t-1, original noise from t on.
TrajectoryPoint build_xt(const PairRecord& pair, std::uint32_t t);

// Pair dataset plus the header needed to validate and regenerate it.
// File format "DDPR": header (version, N, n, V, C, teacher fingerprint,
// solver scheme/steps/t_end), then per record: seed u64, condition u32
// (0xFFFFFFFF = none), n token ids u32.
class PairStore {
public:
    PairStore() = default;
    PairStore(std::uint32_t n, std::uint32_t vocab, std::uint32_t dim,
              std::uint64_t teacher_fingerprint, SolverConfig solver);

    std::uint32_t seq_len() const { return n_; }
    std::uint32_t vocab() const { return vocab_; }
    std::uint32_t dim() const { return dim_; }
    std::uint64_t teacher_fingerprint() const { return teacher_fingerprint_; }
    const SolverConfig& solver() const { return solver_; }

    std::size_t size() const { return records_.size(); }
    const PairRecord& record(std::size_t i) const { return records_.at(i); }
    void append(PairRecord record);

    void save(std::ostream& os) const;
    void save_file(const std::filesystem::path& path) const;
    static PairStore load(std::istream& is);
    static PairStore load_file(const std::filesystem::path& path);

private:
    std::uint32_t n_ = 0, vocab_ = 0, dim_ = 0;
    std::uint64_t teacher_fingerprint_ = 0;
    SolverConfig solver_;
    std::vector<PairRecord> records_;
};

// Generates N pairs with per-pair seeds split_seed(base_seed, i).
// Conditions cycle through `conditions` (empty means unconditioned).
// Generation parallelizes across records; output is identical for any
// worker count. Throws on N = 0; a failed pair aborts with its index.
PairStore generate_dataset(const Teacher& teacher, const Codebook& cb, std::uint64_t count,
                           const std::vector<std::uint32_t>& conditions,
                           std::uint64_t base_seed, const SolverConfig& solver);

}  // namespace dd
