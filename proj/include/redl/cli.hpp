#pragma once

namespace redl {

/// Entry point for the `redl` tool. Returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace redl
