#include "kpshift/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "kpshift/errors.hpp"

namespace kpshift {

std::size_t k_from_regions(std::size_t K) {
    switch (K) {
        case 1: return 1;
        case 4: return 2;
        case 9: return 3;
        case 16: return 4;
        default: throw ConfigError("K must be one of 1, 4, 9, 16, got " + std::to_string(K));
    }
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
    throw ConfigError(what + " at line " + std::to_string(line));
}

double parse_double(const std::string& v, std::size_t line, const std::string& key) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        bad_line(line, "invalid number for '" + key + "'");
    }
    if (used != v.size()) bad_line(line, "invalid number for '" + key + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& v, std::size_t line, const std::string& key) {
    std::size_t used = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::exception&) {
        bad_line(line, "invalid integer for '" + key + "'");
    }
    if (used != v.size()) bad_line(line, "invalid integer for '" + key + "'");
    return static_cast<std::uint64_t>(out);
}

std::size_t parse_size(const std::string& v, std::size_t line, const std::string& key) {
    return static_cast<std::size_t>(parse_u64(v, line, key));
}

bool parse_bool(const std::string& v, std::size_t line, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_line(line, "invalid boolean for '" + key + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string stripped = trim(raw);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) bad_line(line, "expected key=value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) bad_line(line, "empty key");
        if (value.empty()) bad_line(line, "empty value for '" + key + "'");

        if (key == "K") cfg.K = parse_size(value, line, key);
        else if (key == "G") cfg.G = parse_size(value, line, key);
        else if (key == "embed_dim") cfg.embed_dim = parse_size(value, line, key);
        else if (key == "epsilon") cfg.epsilon = parse_double(value, line, key);
        else if (key == "soft_tau_point") cfg.soft_tau_point = parse_double(value, line, key);
        else if (key == "soft_tau_region") cfg.soft_tau_region = parse_double(value, line, key);
        else if (key == "normalize_shifts") cfg.normalize_shifts = parse_bool(value, line, key);
        else if (key == "seed") cfg.seed = parse_u64(value, line, key);
        else if (key == "lr") cfg.lr = parse_double(value, line, key);
        else if (key == "momentum") cfg.momentum = parse_double(value, line, key);
        else if (key == "weight_decay") cfg.weight_decay = parse_double(value, line, key);
        else if (key == "batch") cfg.batch = parse_size(value, line, key);
        else if (key == "epochs") cfg.epochs = parse_size(value, line, key);
        else if (key == "mode") {
            if (value != "hard" && value != "soft") bad_line(line, "mode must be hard or soft");
            cfg.mode = value;
        } else if (key == "use_kpsem") cfg.use_kpsem = parse_bool(value, line, key);
        else if (key == "position") cfg.position = parse_size(value, line, key);
        else if (key == "train_samples") cfg.train_samples = parse_size(value, line, key);
        else if (key == "test_samples") cfg.test_samples = parse_size(value, line, key);
        else if (key == "noise") cfg.noise = parse_double(value, line, key);
        else bad_line(line, "unknown key '" + key + "'");
    }
    validate_run_config(cfg);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open config file " + path, 0);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

void validate_run_config(const RunConfig& cfg) {
    k_from_regions(cfg.K);
    if (cfg.G < 1) throw ConfigError("G must be at least 1");
    if (cfg.embed_dim == 0 || cfg.embed_dim % 4 != 0)
        throw ConfigError("embed_dim must be a positive multiple of 4");
    if (cfg.epsilon <= 0.0) throw ConfigError("epsilon must be positive");
    if (cfg.soft_tau_point <= 0.0 || cfg.soft_tau_region <= 0.0)
        throw ConfigError("soft temperatures must be positive");
    if (cfg.mode != "hard" && cfg.mode != "soft")
        throw ConfigError("mode must be hard or soft");
    if (cfg.position != 1 && cfg.position != 2) throw ConfigError("position must be 1 or 2");
    if (cfg.batch < 1) throw ConfigError("batch must be at least 1");
    if (cfg.lr < 0.0) throw ConfigError("learning rate must be non-negative");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw ConfigError("momentum must be in [0, 1)");
    if (cfg.weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    if (cfg.noise < 0.0) throw ConfigError("noise amplitude must be non-negative");
}

std::string echo_run_config(const RunConfig& cfg) {
    std::ostringstream out;
    char num[64];
    auto put_double = [&](const char* key, double v) {
        std::snprintf(num, sizeof num, "%.17g", v);
        out << key << " = " << num << "\n";
    };
    out << "K = " << cfg.K << "\n";
    out << "G = " << cfg.G << "\n";
    out << "embed_dim = " << cfg.embed_dim << "\n";
    put_double("epsilon", cfg.epsilon);
    put_double("soft_tau_point", cfg.soft_tau_point);
    put_double("soft_tau_region", cfg.soft_tau_region);
    out << "normalize_shifts = " << (cfg.normalize_shifts ? "true" : "false") << "\n";
    out << "seed = " << cfg.seed << "\n";
    put_double("lr", cfg.lr);
    put_double("momentum", cfg.momentum);
    put_double("weight_decay", cfg.weight_decay);
    out << "batch = " << cfg.batch << "\n";
    out << "epochs = " << cfg.epochs << "\n";
    out << "mode = " << cfg.mode << "\n";
    out << "use_kpsem = " << (cfg.use_kpsem ? "true" : "false") << "\n";
    out << "position = " << cfg.position << "\n";
    out << "train_samples = " << cfg.train_samples << "\n";
    out << "test_samples = " << cfg.test_samples << "\n";
    put_double("noise", cfg.noise);
    return out.str();
}

KpsemConfig kpsem_config(const RunConfig& cfg) {
    KpsemConfig kc;
    kc.k = k_from_regions(cfg.K);
    kc.sets = cfg.G;
    kc.embed_dim = cfg.embed_dim;
    kc.epsilon = cfg.epsilon;
    kc.normalize_shifts = cfg.normalize_shifts;
    return kc;
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig tc;
    tc.lr = cfg.lr;
    tc.momentum = cfg.momentum;
    tc.weight_decay = cfg.weight_decay;
    tc.batch = cfg.batch;
    tc.epochs = cfg.epochs;
    tc.seed = cfg.seed;
    tc.mode = cfg.mode == "soft" ? Mode::Soft : Mode::Hard;
    tc.use_kpsem = cfg.use_kpsem;
    tc.k = k_from_regions(cfg.K);
    tc.sets = cfg.G;
    tc.embed_dim = cfg.embed_dim;
    tc.kpsem_stage = cfg.position;
    tc.epsilon = cfg.epsilon;
    tc.soft = soft_config(cfg);
    return tc;
}

SoftConfig soft_config(const RunConfig& cfg) {
    SoftConfig sc;
    sc.tau_point = cfg.soft_tau_point;
    sc.tau_region = cfg.soft_tau_region;
    return sc;
}

}  // namespace kpshift
