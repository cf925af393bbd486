#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dd/errors.hpp"

namespace dd {

// Run configuration: dotted keys, one `key = value` per line, '#'
// comments. Unknown keys are rejected so typos fail fast; every query
// marks its key as read so a fully resolved config can be logged.
class RunConfig {
public:
    RunConfig() = default;

    static RunConfig parse(const std::string& text);
    static RunConfig load_file(const std::filesystem::path& path);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated unsigned list, e.g. "1,3,7".
    std::vector<std::uint32_t> get_u32_list(const std::string& key,
                                            const std::vector<std::uint32_t>& fallback) const;

    void set(const std::string& key, const std::string& value);

    // The full key=value map in sorted order.
    void dump(std::ostream& os) const;
    std::uint64_t content_hash() const;

    // Every key this binary understands; parse() rejects anything else.
    static const std::vector<std::string>& known_keys();

private:
    std::string require(const std::string& key) const;

    std::map<std::string, std::string> values_;
};

}  // namespace dd
