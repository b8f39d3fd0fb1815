#pragma once

namespace surcol {

// Full command-line entry point. Parses argv, dispatches the subcommand,
// prints human-readable results to stdout and errors to stderr.
// Exit codes: 0 success, 2 usage, 3 data or schema problem, 4 numerical
// failure (a diagnostics.json is left next to the outputs).
int cli_main(int argc, const char* const* argv);

}  // namespace surcol
