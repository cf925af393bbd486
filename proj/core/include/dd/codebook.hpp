#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "dd/errors.hpp"
#include "dd/rng.hpp"

namespace dd {

// The discrete token space: `size` embedding vectors of dimension `dim`.
// Entries are stored as 32-bit floats (the on-disk precision) and must be
// finite and pairwise distinct; projection onto the codebook is otherwise
// ill-defined. Immutable after construction.
class Codebook {
public:
    Codebook(std::uint32_t dim, std::vector<float> entries_row_major);

    std::uint32_t size() const { return size_; }  // V
    std::uint32_t dim() const { return dim_; }    // C

    // 1-based entry access.
    std::span<const float> entry(std::uint32_t id) const;

    const std::vector<float>& raw() const { return data_; }

    // File format: "DDCB", version u32, V u32, C u32, then V*C f32
    // row-major per entry, all little-endian.
    void save(std::ostream& os) const;
    void save_file(const std::filesystem::path& path) const;
    static Codebook load(std::istream& is);
    static Codebook load_file(const std::filesystem::path& path);

    // Standard-normal entries; distinct with probability one (checked).
    static Codebook random(std::uint32_t size, std::uint32_t dim, std::uint64_t seed);

private:
    std::uint32_t size_;
    std::uint32_t dim_;
    std::vector<float> data_;
};

// Index (1-based) of the entry closest to x in Euclidean distance.
// Ties break toward the smallest index.
std::uint32_t nearest_token(std::span<const double> x, const Codebook& cb);

}  // namespace dd
