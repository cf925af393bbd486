#include "dd/trajgen.hpp"

#include <fstream>
#include <mutex>
#include <string>

#include "dd/io.hpp"
#include "dd/parallel.hpp"

namespace dd {

namespace {
constexpr std::uint32_t kPairStoreVersion = 1;
constexpr std::uint32_t kNoCondition = 0xFFFFFFFFu;
}  // namespace

TokenSeq complete_trajectory(const Teacher& teacher, const Codebook& cb,
                             const SolverConfig& solver, const TrajectoryPoint& point,
                             std::optional<std::uint32_t> condition) {
    const std::uint32_t n = point.size();
    if (n != teacher.seq_len())
        throw DomainError("complete_trajectory: trajectory length " + std::to_string(n) +
                          " does not match teacher n = " + std::to_string(teacher.seq_len()));
    TokenSeq data = point.prefix;
    data.condition = condition;
    for (std::uint32_t pos = point.t; pos <= n; ++pos) {
        NextTokenDist dist = teacher.next_dist(data);
        std::uint32_t noise_index = pos - point.t + 1;
        std::uint32_t token;
        try {
            token = fm_map(point.suffix.vec(noise_index), dist, cb, solver);
        } catch (const NumericError& e) {
            throw NumericError("position " + std::to_string(pos) + ": " + e.what());
        }
        data.ids.push_back(token);
    }
    return data;
}

PairRecord generate_pair(const Teacher& teacher, const Codebook& cb,
                         std::optional<std::uint32_t> condition, std::uint64_t seed,
                         const SolverConfig& solver) {
    PairRecord pair;
    pair.seed = seed;
    pair.condition = condition;
    pair.noise = NoiseSeq::generate(seed, teacher.seq_len(), cb.dim());
    TrajectoryPoint start;
    start.prefix.condition = condition;
    start.suffix = pair.noise;
    start.t = 1;
    pair.data = complete_trajectory(teacher, cb, solver, start, condition);
    return pair;
}

TrajectoryPoint build_xt(const PairRecord& pair, std::uint32_t t) {
    const std::uint32_t n = pair.data.size();
    if (t < 1 || t > n + 1)
        throw DomainError("build_xt: t=" + std::to_string(t) + " out of [1, " +
                          std::to_string(n + 1) + "]");
    return concat_mixed(slice_head(pair.data, t - 1), slice_tail(pair.noise, t), t);
}

PairStore::PairStore(std::uint32_t n, std::uint32_t vocab, std::uint32_t dim,
                     std::uint64_t teacher_fingerprint, SolverConfig solver)
    : n_(n), vocab_(vocab), dim_(dim), teacher_fingerprint_(teacher_fingerprint),
      solver_(solver) {}

void PairStore::append(PairRecord record) {
    if (record.data.size() != n_) throw DomainError("pair store: record length mismatch");
    records_.push_back(std::move(record));
}

void PairStore::save(std::ostream& os) const {
    ByteWriter w(os);
    w.magic("DDPR");
    w.u32(kPairStoreVersion);
    w.u64(records_.size());
    w.u32(n_);
    w.u32(vocab_);
    w.u32(dim_);
    w.u64(teacher_fingerprint_);
    w.u32(solver_.scheme == SolverConfig::Scheme::euler ? 0u : 1u);
    w.u32(solver_.steps);
    w.f64(solver_.t_end);
    w.f64(solver_.rho);
    for (const PairRecord& rec : records_) {
        w.u64(rec.seed);
        w.u32(rec.condition.value_or(kNoCondition));
        for (std::uint32_t id : rec.data.ids) w.u32(id);
    }
}

void PairStore::save_file(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    save(os);
}

PairStore PairStore::load(std::istream& is) {
    ByteReader r(is);
    r.expect_magic("DDPR", "pair store");
    std::uint32_t version = r.u32();
    if (version != kPairStoreVersion)
        throw IoError("pair store: unsupported version " + std::to_string(version));
    std::uint64_t count = r.u64();
    std::uint32_t n = r.u32();
    std::uint32_t vocab = r.u32();
    std::uint32_t dim = r.u32();
    std::uint64_t fingerprint = r.u64();
    SolverConfig solver;
    solver.scheme = r.u32() == 0 ? SolverConfig::Scheme::euler : SolverConfig::Scheme::heun;
    solver.steps = r.u32();
    solver.t_end = r.f64();
    solver.rho = r.f64();
    PairStore store(n, vocab, dim, fingerprint, solver);
    for (std::uint64_t i = 0; i < count; ++i) {
        PairRecord rec;
        rec.seed = r.u64();
        std::uint32_t cond = r.u32();
        if (cond != kNoCondition) rec.condition = cond;
        rec.data.condition = rec.condition;
        rec.data.ids.resize(n);
        for (std::uint32_t& id : rec.data.ids) {
            id = r.u32();
            if (id < 1 || id > vocab) throw IoError("pair store: token id out of range");
        }
        rec.noise = NoiseSeq::generate(rec.seed, n, dim);
        store.records_.push_back(std::move(rec));
    }
    return store;
}

PairStore PairStore::load_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open pair store: " + path.string());
    return PairStore::load(is);
}

PairStore generate_dataset(const Teacher& teacher, const Codebook& cb, std::uint64_t count,
                           const std::vector<std::uint32_t>& conditions,
                           std::uint64_t base_seed, const SolverConfig& solver) {
    if (count == 0) throw DomainError("generate_dataset: count must be >= 1");
    solver.validate();
    PairStore store(teacher.seq_len(), teacher.vocab(), cb.dim(), teacher.fingerprint(),
                    solver);
    std::vector<PairRecord> records(count);
    std::string failure;
    std::mutex failure_mu;
    parallel_for(count, [&](std::size_t i) {
        std::optional<std::uint32_t> condition;
        if (!conditions.empty()) condition = conditions[i % conditions.size()];
        try {
            records[i] = generate_pair(teacher, cb, condition, split_seed(base_seed, i),
                                       solver);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(failure_mu);
            if (failure.empty())
                failure = "pair " + std::to_string(i) + ": " + e.what();
        }
    });
    if (!failure.empty()) throw NumericError("generate_dataset: " + failure);
    for (PairRecord& rec : records) store.append(std::move(rec));
    return store;
}

}  // namespace dd
