#include "dd/codebook.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "dd/io.hpp"

namespace dd {

namespace {
constexpr std::uint32_t kCodebookVersion = 1;
}

Codebook::Codebook(std::uint32_t dim, std::vector<float> entries_row_major)
    : dim_(dim), data_(std::move(entries_row_major)) {
    if (dim_ == 0) throw DomainError("codebook: dim must be >= 1");
    if (data_.empty() || data_.size() % dim_ != 0)
        throw DomainError("codebook: entry data size must be a nonzero multiple of dim");
    size_ = static_cast<std::uint32_t>(data_.size() / dim_);
    for (float v : data_)
        if (!std::isfinite(v)) throw DomainError("codebook: entries must be finite");
    // Duplicate entries make nearest-token projection ambiguous; reject.
    for (std::uint32_t i = 0; i < size_; ++i) {
        for (std::uint32_t j = i + 1; j < size_; ++j) {
            if (std::memcmp(data_.data() + static_cast<std::size_t>(i) * dim_,
                            data_.data() + static_cast<std::size_t>(j) * dim_,
                            sizeof(float) * dim_) == 0)
                throw DomainError("codebook: duplicate entries " + std::to_string(i + 1) +
                                  " and " + std::to_string(j + 1));
        }
    }
}

std::span<const float> Codebook::entry(std::uint32_t id) const {
    if (id < 1 || id > size_)
        throw DomainError("codebook: entry index " + std::to_string(id) + " out of [1, " +
                          std::to_string(size_) + "]");
    return {data_.data() + static_cast<std::size_t>(id - 1) * dim_, dim_};
}

void Codebook::save(std::ostream& os) const {
    ByteWriter w(os);
    w.magic("DDCB");
    w.u32(kCodebookVersion);
    w.u32(size_);
    w.u32(dim_);
    for (float v : data_) w.f32(v);
}

void Codebook::save_file(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    save(os);
}

Codebook Codebook::load(std::istream& is) {
    ByteReader r(is);
    r.expect_magic("DDCB", "codebook");
    std::uint32_t version = r.u32();
    if (version != kCodebookVersion)
        throw IoError("codebook: unsupported format version " + std::to_string(version));
    std::uint32_t size = r.u32();
    std::uint32_t dim = r.u32();
    if (size == 0 || dim == 0) throw IoError("codebook: empty dimensions in header");
    std::vector<float> data(static_cast<std::size_t>(size) * dim);
    for (float& v : data) v = r.f32();
    return Codebook(dim, std::move(data));
}

Codebook Codebook::load_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open codebook: " + path.string());
    return load(is);
}

Codebook Codebook::random(std::uint32_t size, std::uint32_t dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> data(static_cast<std::size_t>(size) * dim);
    for (float& v : data) v = static_cast<float>(rng.next_gaussian());
    return Codebook(dim, std::move(data));
}

std::uint32_t nearest_token(std::span<const double> x, const Codebook& cb) {
    if (x.size() != cb.dim()) throw DomainError("nearest_token: dimension mismatch");
    for (double v : x)
        if (!std::isfinite(v)) throw DomainError("nearest_token: query must be finite");
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_id = 1;
    for (std::uint32_t j = 1; j <= cb.size(); ++j) {
        auto c = cb.entry(j);
        double d2 = 0.0;
        for (std::uint32_t k = 0; k < cb.dim(); ++k) {
            double diff = x[k] - static_cast<double>(c[k]);
            d2 += diff * diff;
        }
        if (d2 < best) {
            best = d2;
            best_id = j;
        }
    }
    return best_id;
}

}  // namespace dd
