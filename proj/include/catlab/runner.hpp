#pragma once

#include <iosfwd>

#include "catlab/config.hpp"

namespace catlab {

// Runs one experiment and writes its artifacts (CSV series, summary.json,
// provenance.json) into cfg.output_dir. Returns the process exit code:
// 0 when every checked invariant passed, 3 on a validation gate failure or
// a failed check. Configuration problems throw ConfigError (mapped to exit
// code 2 by the CLI). Outputs depend only on the config content and seed,
// never on the thread count or the output directory.
int run_experiment(const ExperimentConfig& cfg, int threads, std::ostream& out,
                   std::ostream& err);

}
