#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dd/errors.hpp"

namespace dd {

// Little-endian binary primitives. x86 is little-endian already; the
// explicit byte shuffling keeps the file formats well-defined everywhere.
class ByteWriter {
public:
    explicit ByteWriter(std::ostream& os) : os_(os) {}

    void u8(std::uint8_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void bytes(std::span<const std::uint8_t> data);
    void magic(const char tag[4]);
    void str(const std::string& s);  // u32 length + bytes

private:
    std::ostream& os_;
};

class ByteReader {
public:
    explicit ByteReader(std::istream& is) : is_(is) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    void bytes(std::span<std::uint8_t> out);
    void expect_magic(const char tag[4], const std::string& what);
    std::string str();

private:
    std::istream& is_;
};

// FNV-1a 64-bit, used for file fingerprints and provenance manifests.
std::uint64_t fnv1a64(std::span<const std::uint8_t> data);
std::uint64_t fnv1a64(const std::string& s);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::uint64_t hash_file(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> data);

std::string hex64(std::uint64_t v);

}  // namespace dd
