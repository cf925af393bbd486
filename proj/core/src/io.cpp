#include "dd/io.hpp"

#include <cstring>
#include <fstream>

namespace dd {

namespace {

void put_le(std::ostream& os, std::uint64_t v, int nbytes) {
    char buf[8];
    for (int i = 0; i < nbytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(buf, nbytes);
    if (!os) throw IoError("write failed");
}

std::uint64_t get_le(std::istream& is, int nbytes) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), nbytes);
    if (!is) throw IoError("read failed: truncated stream");
    std::uint64_t v = 0;
    for (int i = 0; i < nbytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void ByteWriter::u8(std::uint8_t v) { put_le(os_, v, 1); }
void ByteWriter::u32(std::uint32_t v) { put_le(os_, v, 4); }
void ByteWriter::u64(std::uint64_t v) { put_le(os_, v, 8); }

void ByteWriter::f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
}

void ByteWriter::f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
}

void ByteWriter::bytes(std::span<const std::uint8_t> data) {
    os_.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!os_) throw IoError("write failed");
}

void ByteWriter::magic(const char tag[4]) {
    os_.write(tag, 4);
    if (!os_) throw IoError("write failed");
}

void ByteWriter::str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!os_) throw IoError("write failed");
}

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(get_le(is_, 1)); }
std::uint32_t ByteReader::u32() { return static_cast<std::uint32_t>(get_le(is_, 4)); }
std::uint64_t ByteReader::u64() { return get_le(is_, 8); }

float ByteReader::f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

double ByteReader::f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void ByteReader::bytes(std::span<std::uint8_t> out) {
    is_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!is_) throw IoError("read failed: truncated stream");
}

void ByteReader::expect_magic(const char tag[4], const std::string& what) {
    char buf[4];
    is_.read(buf, 4);
    if (!is_ || std::memcmp(buf, tag, 4) != 0)
        throw IoError("bad magic: not a " + what + " file");
}

std::string ByteReader::str() {
    std::uint32_t len = u32();
    std::string s(len, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(len));
    if (!is_) throw IoError("read failed: truncated stream");
    return s;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> data) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::uint8_t b : data) {
        h ^= b;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open file: " + path.string());
    is.seekg(0, std::ios::end);
    auto size = is.tellg();
    is.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> data(static_cast<std::size_t>(size));
    is.read(reinterpret_cast<char*>(data.data()), size);
    if (!is) throw IoError("cannot read file: " + path.string());
    return data;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
    auto data = read_file_bytes(path);
    return fnv1a64(std::span<const std::uint8_t>(data));
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open file for writing: " + path.string());
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size()));
    if (!os) throw IoError("cannot write file: " + path.string());
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace dd
