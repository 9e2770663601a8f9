#pragma once
// Command layer of the olgsim tool: each command reads a RunConfig, runs one
// solver and writes its CSV files and manifest into a run directory.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "olg/io/config.hpp"

namespace olg::cli {

enum ExitCode : int { kOk = 0, kValidationFailure = 1, kNotConverged = 2, kConfigError = 64 };

struct CommandOptions {
    std::optional<std::string> out;   // root of the run directories (else output.dir)
    std::optional<std::uint64_t> seed;
    bool force = false;
    unsigned threads = 1;
    std::ostream* console = nullptr;  // progress and tables; stdout when null
};

/// One row of the invariant table printed by `validate`.
struct CheckRow {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool passed = false;
    std::string note;
};

/// Applies the overrides carried by the options (seed).
io::RunConfig effective_config(io::RunConfig c, const CommandOptions& o);

/// Run directory <root>/<command>-<first 12 hex digits of the config hash>.
std::string run_directory(const io::RunConfig& c, const std::string& command, const CommandOptions& o);

int cmd_det_lifecycle(const io::RunConfig& c, const CommandOptions& o);
int cmd_sto_lifecycle(const io::RunConfig& c, const CommandOptions& o);
int cmd_nbl(const io::RunConfig& c, const CommandOptions& o);
int cmd_equilibrium(const io::RunConfig& c, const std::string& mode, const CommandOptions& o);
int cmd_sweep(const io::RunConfig& c, const CommandOptions& o);

/// Runs the invariant suite; fills `rows` when given.
int cmd_validate(const io::RunConfig& c, const CommandOptions& o, std::vector<CheckRow>* rows = nullptr);

/// Entry point shared by the executable and the tests: parses argv and
/// dispatches; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace olg::cli
