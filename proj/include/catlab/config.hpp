#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "catlab/markov.hpp"

namespace catlab {

// Raised for malformed config text; the message carries "<origin>:<line>:".
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SystemConfig {
    std::array<std::int64_t, 4> matrix{2, 1, 1, 1};
    double kappa = 0.5;
    double delta = 0.05;
    double alpha = 0.0;
    int depth = 20;  // holonomy pullback depth cap
};

struct PartitionConfig {
    std::string kind = "builtin";      // builtin | explicit
    std::vector<Rectangle> rects;      // used when kind == explicit
};

// Flat typed config: [system], [partition], [run] and one [experiment] block.
// Unknown sections, unknown keys, duplicate keys and malformed values are
// hard errors with line numbers.
struct ExperimentConfig {
    SystemConfig system;
    PartitionConfig partition;
    std::string experiment;                     // empty until a subcommand or [experiment] sets it
    std::map<std::string, std::string> params;  // experiment parameters, schema-checked
    std::uint64_t seed = 1;
    std::string output_dir = ".";
    std::string origin = "<builtin>";           // file path or fixture name, for diagnostics
};

ExperimentConfig parse_config(const std::string& text, const std::string& origin);

// Reads the file at `path_or_fixture`; when no such file exists and the name
// matches a shipped fixture, returns that fixture instead.
ExperimentConfig load_config(const std::string& path_or_fixture);

std::vector<std::string> fixture_names();
// Throws ConfigError for unknown names.
ExperimentConfig fixture_config(const std::string& name);

// Names of experiments the schema knows; used to validate [experiment] name.
std::vector<std::string> experiment_names();

// Typed parameter access; the key must belong to the experiment's schema.
// Values were syntax-checked at parse time, so these only convert.
double param_f64(const ExperimentConfig& cfg, const std::string& key, double dflt);
std::int64_t param_i64(const ExperimentConfig& cfg, const std::string& key, std::int64_t dflt);
std::uint64_t param_u64(const ExperimentConfig& cfg, const std::string& key, std::uint64_t dflt);
std::string param_str(const ExperimentConfig& cfg, const std::string& key, const std::string& dflt);
std::vector<int> param_ints(const ExperimentConfig& cfg, const std::string& key,
                            const std::vector<int>& dflt);

}
