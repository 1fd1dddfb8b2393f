#pragma once

#include <string>
#include <vector>

namespace visage {

// Single entry point behind the command-line tool.  Subcommands: gen-data,
// curate, prompts, synth-lq, train-stage1, train-stage2, restore, swap,
// sweep, eval, gallery.  Returns 0 on success, 1 on a domain error, 2 on a
// usage error.  Every run echoes its effective configuration and a manifest
// of input/output digests into the output directory.
int cli_run(int argc, const char* const* argv);
int cli_run(const std::vector<std::string>& args);  // args exclude the program name

}  // namespace visage
