#include "catlab/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace catlab {

namespace {

enum class PType { F64, I64, U64, Str, Ints };

// typed key schema per experiment; unknown keys are rejected at parse time
const std::map<std::string, std::map<std::string, PType>>& schema() {
    static const std::map<std::string, std::map<std::string, PType>> s = {
        {"verify-partition", {{"samples", PType::U64}}},
        {"properties",
         {{"samples", PType::U64}, {"burn_in", PType::I64}, {"iterates", PType::I64}}},
        {"estimate-mu",
         {{"x1", PType::F64},
          {"x2", PType::F64},
          {"theta", PType::F64},
          {"settle", PType::I64},
          {"particles", PType::U64},
          {"iterates", PType::I64},
          {"burn_in", PType::I64}}},
        {"hitting",
         {{"x1", PType::F64},
          {"x2", PType::F64},
          {"theta", PType::F64},
          {"observable", PType::Str},
          {"section_rect", PType::I64},
          {"section_u", PType::F64},
          {"n_lo", PType::I64},
          {"n_exact_hi", PType::I64},
          {"n_mc_hi", PType::I64},
          {"mc_samples", PType::U64},
          {"noise_floor", PType::F64},
          {"mu_particles", PType::U64},
          {"mu_iterates", PType::I64},
          {"mu_burn_in", PType::I64}}},
        {"transverse",
         {{"x1", PType::F64},
          {"x2", PType::F64},
          {"theta", PType::F64},
          {"particles", PType::U64},
          {"iterates", PType::I64},
          {"burn_in", PType::I64},
          {"rect1", PType::I64},
          {"u1", PType::F64},
          {"rect2", PType::I64},
          {"u2", PType::F64},
          {"t_max", PType::F64},
          {"bins", PType::I64},
          {"fault_scale", PType::F64}}},
        {"coupling",
         {{"x1a", PType::F64},
          {"x2a", PType::F64},
          {"thetaa", PType::F64},
          {"x1b", PType::F64},
          {"x2b", PType::F64},
          {"thetab", PType::F64},
          {"depth_cap", PType::I64},
          {"profile_samples", PType::I64},
          {"pairs", PType::U64},
          {"horizon", PType::I64}}},
        {"ldp",
         {{"x1", PType::F64},
          {"x2", PType::F64},
          {"theta", PType::F64},
          {"observable", PType::Str},
          {"center", PType::F64},
          {"alpha", PType::F64},
          {"n_values", PType::Ints},
          {"samples", PType::U64},
          {"burn_in", PType::I64}}},
        {"correlations",
         {{"x1", PType::F64},
          {"x2", PType::F64},
          {"theta", PType::F64},
          {"phi", PType::Str},
          {"psi", PType::Str},
          {"n_values", PType::Ints},
          {"samples", PType::U64},
          {"burn_in", PType::I64}}},
        {"center-atoms",
         {{"x1", PType::F64},
          {"x2", PType::F64},
          {"theta", PType::F64},
          {"settle", PType::I64},
          {"particles", PType::U64},
          {"iterates", PType::I64},
          {"burn_in", PType::I64},
          {"rect", PType::I64},
          {"u0", PType::F64},
          {"slab_halfwidth", PType::F64},
          {"eps", PType::F64}}},
    };
    return s;
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& what) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double to_f64(const std::string& v, const std::string& origin, int line) {
    errno = 0;
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || v.empty() || errno == ERANGE)
        fail(origin, line, "expected a real number, got '" + v + "'");
    return x;
}

std::int64_t to_i64(const std::string& v, const std::string& origin, int line) {
    errno = 0;
    char* end = nullptr;
    long long x = std::strtoll(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v.empty() || errno == ERANGE)
        fail(origin, line, "expected an integer, got '" + v + "'");
    return x;
}

std::uint64_t to_u64(const std::string& v, const std::string& origin, int line) {
    errno = 0;
    char* end = nullptr;
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v.empty() || v[0] == '-' || errno == ERANGE)
        fail(origin, line, "expected an unsigned integer, got '" + v + "'");
    return x;
}

std::vector<double> to_f64_list(const std::string& v, const std::string& origin, int line) {
    std::istringstream in(v);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) out.push_back(to_f64(tok, origin, line));
    return out;
}

void check_typed(PType t, const std::string& v, const std::string& origin, int line) {
    switch (t) {
        case PType::F64: to_f64(v, origin, line); break;
        case PType::I64: to_i64(v, origin, line); break;
        case PType::U64: to_u64(v, origin, line); break;
        case PType::Str: break;
        case PType::Ints: {
            std::istringstream in(v);
            std::string tok;
            int count = 0;
            while (in >> tok) {
                to_i64(tok, origin, line);
                ++count;
            }
            if (count == 0) fail(origin, line, "expected a list of integers, got '" + v + "'");
            break;
        }
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    cfg.origin = origin;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    std::map<std::string, int> seen;  // "section/key" -> first line
    std::map<std::string, int> exp_lines;

    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(origin, line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section != "system" && section != "partition" && section != "run" &&
                section != "experiment")
                fail(origin, line, "unknown section [" + section + "]");
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) fail(origin, line, "expected 'key = value'");
        const std::string key = trim(s.substr(0, eq));
        const std::string val = trim(s.substr(eq + 1));
        if (key.empty()) fail(origin, line, "empty key");
        if (section.empty()) fail(origin, line, "key '" + key + "' before any section");

        const std::string id = section + "/" + key;
        if (key != "rect") {
            auto it = seen.find(id);
            if (it != seen.end())
                fail(origin, line,
                     "duplicate key '" + key + "' in [" + section + "] (first at line " +
                         std::to_string(it->second) + ")");
            seen[id] = line;
        }

        if (section == "system") {
            if (key == "matrix") {
                std::istringstream mi(val);
                std::string tok;
                std::vector<std::int64_t> m;
                while (mi >> tok) m.push_back(to_i64(tok, origin, line));
                if (m.size() != 4) fail(origin, line, "matrix needs exactly 4 integers");
                cfg.system.matrix = {m[0], m[1], m[2], m[3]};
            } else if (key == "kappa") {
                cfg.system.kappa = to_f64(val, origin, line);
            } else if (key == "delta") {
                cfg.system.delta = to_f64(val, origin, line);
            } else if (key == "alpha") {
                cfg.system.alpha = to_f64(val, origin, line);
            } else if (key == "depth") {
                cfg.system.depth = static_cast<int>(to_i64(val, origin, line));
            } else {
                fail(origin, line, "unknown key '" + key + "' in [system]");
            }
        } else if (section == "partition") {
            if (key == "kind") {
                if (val != "builtin" && val != "explicit")
                    fail(origin, line, "kind must be 'builtin' or 'explicit'");
                cfg.partition.kind = val;
            } else if (key == "rect") {
                const auto nums = to_f64_list(val, origin, line);
                if (nums.size() != 4)
                    fail(origin, line, "rect needs 'x1 x2 Lu Ls' (4 numbers)");
                cfg.partition.rects.push_back(
                    Rectangle{TorusPoint{nums[0], nums[1]}, nums[2], nums[3]});
            } else {
                fail(origin, line, "unknown key '" + key + "' in [partition]");
            }
        } else if (section == "run") {
            if (key == "seed") {
                cfg.seed = to_u64(val, origin, line);
            } else if (key == "output_dir") {
                cfg.output_dir = val;
            } else {
                fail(origin, line, "unknown key '" + key + "' in [run]");
            }
        } else {  // experiment
            if (key == "name") {
                if (schema().find(val) == schema().end())
                    fail(origin, line, "unknown experiment '" + val + "'");
                cfg.experiment = val;
            } else {
                cfg.params[key] = val;
                exp_lines[key] = line;
            }
        }
    }

    // experiment keys are validated against the named schema once the whole
    // block is read, so 'name' may appear anywhere in its section
    if (!cfg.params.empty() && cfg.experiment.empty())
        fail(origin, exp_lines.begin()->second,
             "[experiment] parameters given but no 'name' key");
    if (!cfg.experiment.empty()) {
        const auto& allowed = schema().at(cfg.experiment);
        for (const auto& [k, v] : cfg.params) {
            auto it = allowed.find(k);
            if (it == allowed.end())
                fail(origin, exp_lines.at(k),
                     "unknown key '" + k + "' for experiment '" + cfg.experiment + "'");
            check_typed(it->second, v, origin, exp_lines.at(k));
        }
    }
    if (cfg.partition.kind == "explicit" && cfg.partition.rects.empty())
        fail(origin, line, "kind = explicit requires at least one rect");
    return cfg;
}

std::vector<std::string> fixture_names() { return {"product", "coupled", "isometric-control"}; }

ExperimentConfig fixture_config(const std::string& name) {
    ExperimentConfig cfg;
    cfg.origin = name;
    if (name == "product") {
        cfg.system.kappa = 0.5;
        cfg.system.delta = 0.0;
        cfg.system.alpha = 0.0;
    } else if (name == "coupled") {
        cfg.system.kappa = 0.5;
        cfg.system.delta = 0.05;
        cfg.system.alpha = 0.0;
    } else if (name == "isometric-control") {
        cfg.system.kappa = 0.0;
        cfg.system.delta = 0.05;
        cfg.system.alpha = 0.3819660113;
    } else {
        throw ConfigError("unknown fixture '" + name + "'");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path_or_fixture) {
    std::ifstream f(path_or_fixture);
    if (!f) {
        for (const auto& n : fixture_names())
            if (n == path_or_fixture) return fixture_config(n);
        throw ConfigError("cannot open config '" + path_or_fixture +
                          "' and it names no shipped fixture");
    }
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_config(buf.str(), path_or_fixture);
}

std::vector<std::string> experiment_names() {
    std::vector<std::string> out;
    for (const auto& [k, v] : schema()) out.push_back(k);
    return out;
}

namespace {

const std::string* find_param(const ExperimentConfig& cfg, const std::string& key) {
    auto it = cfg.params.find(key);
    return it == cfg.params.end() ? nullptr : &it->second;
}

}  // namespace

double param_f64(const ExperimentConfig& cfg, const std::string& key, double dflt) {
    const auto* v = find_param(cfg, key);
    return v ? to_f64(*v, cfg.origin, 0) : dflt;
}

std::int64_t param_i64(const ExperimentConfig& cfg, const std::string& key, std::int64_t dflt) {
    const auto* v = find_param(cfg, key);
    return v ? to_i64(*v, cfg.origin, 0) : dflt;
}

std::uint64_t param_u64(const ExperimentConfig& cfg, const std::string& key,
                        std::uint64_t dflt) {
    const auto* v = find_param(cfg, key);
    return v ? to_u64(*v, cfg.origin, 0) : dflt;
}

std::string param_str(const ExperimentConfig& cfg, const std::string& key,
                      const std::string& dflt) {
    const auto* v = find_param(cfg, key);
    return v ? *v : dflt;
}

std::vector<int> param_ints(const ExperimentConfig& cfg, const std::string& key,
                            const std::vector<int>& dflt) {
    const auto* v = find_param(cfg, key);
    if (!v) return dflt;
    std::istringstream in(*v);
    std::vector<int> out;
    std::string tok;
    while (in >> tok) out.push_back(static_cast<int>(to_i64(tok, cfg.origin, 0)));
    return out;
}

}
