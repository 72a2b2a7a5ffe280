#pragma once

namespace cctsne {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitValidation = 2,
    kExitDivergence = 3,
    kExitPortInUse = 4,
};

/// Subcommands: embed, sweep, metrics, synth, serve. Logs go to stderr.
int run_cli(int argc, char** argv);

}  // namespace cctsne
