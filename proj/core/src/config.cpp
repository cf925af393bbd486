#include "dd/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dd/io.hpp"

namespace dd {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = {
        // Token domain
        "domain.n", "domain.vocab", "domain.dim", "domain.codebook",
        "domain.codebook_seed",
        // Teacher
        "teacher.kind", "teacher.alpha", "teacher.checkpoint", "teacher.data",
        "teacher.toy", "teacher.toy_count", "teacher.toy_seed", "teacher.toy_stay_prob",
        "teacher.num_classes", "teacher.arch.width", "teacher.arch.layers",
        "teacher.arch.mlp_mult", "teacher.epochs", "teacher.batch", "teacher.lr",
        "teacher.lr_rule", "teacher.holdout_fraction", "teacher.guidance_scale",
        "teacher.guidance_enabled",
        // ODE solver
        "solver.scheme", "solver.steps", "solver.t_end", "solver.rho",
        // Pair dataset
        "dataset.count", "dataset.base_seed", "dataset.path", "dataset.conditions",
        // Distillation
        "train.schedule", "train.lambda", "train.lr", "train.lr_rule", "train.batch",
        "train.epochs", "train.ema_decay", "train.weight_decay", "train.split_point",
        "train.loss_w_embed", "train.loss_w_logits", "train.seed", "train.arch.width",
        "train.arch.layers", "train.arch.mlp_mult",
        // Sampling
        "sample.path", "sample.t_s", "sample.variant", "sample.count", "sample.seed",
        "sample.condition", "sample.decode", "sample.student",
        // Evaluation
        "eval.samples", "eval.seed", "eval.condition", "eval.systems",
        "eval.hybrid_t_s", "eval.student",
        // Plot
        "plot.inputs", "plot.title",
    };
    return keys;
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    const auto& keys = known_keys();
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value'");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" +
                              key + "'");
        if (cfg.values_.count(key))
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

RunConfig RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path.string());
    std::ostringstream buffer;
    buffer << is.rdbuf();
    return parse(buffer.str());
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string RunConfig::require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
}

std::string RunConfig::get_string(const std::string& key) const { return require(key); }

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string raw = require(key);
    try {
        std::size_t used = 0;
        std::uint64_t v = std::stoull(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an unsigned integer: '" + raw +
                          "'");
    }
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string raw = require(key);
    try {
        std::size_t used = 0;
        double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not a number: '" + raw + "'");
    }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string raw = require(key);
    if (raw == "true" || raw == "1" || raw == "yes") return true;
    if (raw == "false" || raw == "0" || raw == "no") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: '" + raw + "'");
}

std::vector<std::uint32_t> RunConfig::get_u32_list(
    const std::string& key, const std::vector<std::uint32_t>& fallback) const {
    if (!has(key)) return fallback;
    std::string raw = require(key);
    std::vector<std::uint32_t> out;
    std::istringstream is(raw);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            unsigned long v = std::stoul(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(static_cast<std::uint32_t>(v));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' has a bad list item: '" + item + "'");
        }
    }
    if (out.empty())
        throw ConfigError("config: key '" + key + "' is an empty list");
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw ConfigError("config: unknown key '" + key + "'");
    values_[key] = value;
}

void RunConfig::dump(std::ostream& os) const {
    for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
}

std::uint64_t RunConfig::content_hash() const {
    std::ostringstream os;
    dump(os);
    return fnv1a64(os.str());
}

}  // namespace dd
