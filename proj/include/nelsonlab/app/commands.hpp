// Subcommand dispatch for the nelsonlab command line tool.
#pragma once

#include "nelsonlab/app/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace nelsonlab::app {

enum ExitCode : int {
    exit_pass = 0,
    exit_verdict = 1,
    exit_config = 2,
    exit_convergence = 3,
};

const std::vector<std::string>& command_names();

// Runs one subcommand, writing <command>_*.csv and <command>_manifest.json into out.
// Returns exit_pass or exit_verdict; ConfigError and ConvergenceError propagate.
int run_command(const std::string& command, const RunConfig& cfg, const std::filesystem::path& out,
                std::ostream& log);

// Full command line (args excludes the program name). Exceptions are mapped to exit codes.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace nelsonlab::app
