#pragma once

#include <array>
#include <fstream>
#include <sstream>

#include "rsgld/experiment.hpp"

namespace rsgld {

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "m",          "p",        "eta1",       "eta2_list",   "delta",
        "beta",       "lambda",   "n_iter",     "ell",         "jj",
        "theta_star", "theta_bar_0", "q",       "n_train",     "n_test",
        "seeds",      "snap_samples", "record_every"};
    return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw std::invalid_argument("config: bad numeric value '" + v + "' for key " + key);
    }
}

inline Vec parse_list(const std::string& v, const std::string& key) {
    Vec out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_double(item, key));
    }
    if (out.empty()) throw std::invalid_argument("config: empty list for key " + key);
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean value '" + v + "' for key " + key);
}

}  // namespace detail

/// Sets one key of the configuration; unknown keys are rejected with the full
/// list of valid keys (overrides share this path with file parsing).
inline void apply_config_entry(ExpConfig& cfg, const std::string& key,
                               const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_list;
    if (key == "m")
        cfg.m = static_cast<int>(parse_double(value, key));
    else if (key == "p")
        cfg.p = parse_double(value, key);
    else if (key == "eta1")
        cfg.eta1 = parse_double(value, key);
    else if (key == "eta2_list")
        cfg.eta2_list = parse_list(value, key);
    else if (key == "delta")
        cfg.delta = parse_double(value, key);
    else if (key == "beta")
        cfg.beta = parse_double(value, key);
    else if (key == "lambda")
        cfg.lambda = parse_double(value, key);
    else if (key == "n_iter")
        cfg.n_iter = static_cast<std::size_t>(parse_double(value, key));
    else if (key == "ell")
        cfg.ell = static_cast<int>(parse_double(value, key));
    else if (key == "jj")
        cfg.jj = static_cast<int>(parse_double(value, key));
    else if (key == "theta_star")
        cfg.theta_star = parse_list(value, key);
    else if (key == "theta_bar_0")
        cfg.theta_bar_0 = parse_list(value, key);
    else if (key == "q")
        cfg.q = parse_double(value, key);
    else if (key == "n_train")
        cfg.n_train = static_cast<std::size_t>(parse_double(value, key));
    else if (key == "n_test")
        cfg.n_test = static_cast<std::size_t>(parse_double(value, key));
    else if (key == "seeds") {
        cfg.seeds.clear();
        for (double v : parse_list(value, key))
            cfg.seeds.push_back(static_cast<std::uint64_t>(v));
    } else if (key == "snap_samples")
        cfg.snap_samples = parse_bool(value, key);
    else if (key == "record_every")
        cfg.record_every = static_cast<std::size_t>(parse_double(value, key));
    else {
        std::ostringstream os;
        os << "config: unknown key '" << key << "'; valid keys:";
        for (const auto& k : config_keys()) os << " " << k;
        throw std::invalid_argument(os.str());
    }
}

/// key = value format, one entry per line, '#' comments.
inline ExpConfig parse_config(std::istream& in) {
    ExpConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        " is not key = value");
        apply_config_entry(cfg, detail::trim(line.substr(0, eq)),
                           detail::trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline ExpConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {}) {
    ExpConfig cfg;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("config: cannot open " + path);
        cfg = parse_config(in);
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override '" + ov + "' is not key=value");
        apply_config_entry(cfg, detail::trim(ov.substr(0, eq)),
                           detail::trim(ov.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

inline std::string format_config(const ExpConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    auto list = [&os](const char* key, const auto& values) {
        os << key << " = ";
        for (std::size_t i = 0; i < values.size(); ++i)
            os << (i ? "," : "") << values[i];
        os << "\n";
    };
    os << "m = " << cfg.m << "\n";
    os << "p = " << cfg.p << "\n";
    os << "eta1 = " << cfg.eta1 << "\n";
    list("eta2_list", cfg.eta2_list);
    os << "delta = " << cfg.delta << "\n";
    os << "beta = " << cfg.beta << "\n";
    os << "lambda = " << cfg.lambda << "\n";
    os << "n_iter = " << cfg.n_iter << "\n";
    os << "ell = " << cfg.ell << "\n";
    os << "jj = " << cfg.jj << "\n";
    list("theta_star", cfg.theta_star);
    list("theta_bar_0", cfg.theta_bar_0);
    os << "q = " << cfg.q << "\n";
    os << "n_train = " << cfg.n_train << "\n";
    os << "n_test = " << cfg.n_test << "\n";
    list("seeds", cfg.seeds);
    os << "snap_samples = " << (cfg.snap_samples ? "true" : "false") << "\n";
    os << "record_every = " << cfg.record_every << "\n";
    return os.str();
}

}  // namespace rsgld
