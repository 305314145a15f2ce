#pragma once

#include <string>
#include <vector>

namespace usamkit {

// Full command-line front end; args excludes argv[0]. Returns the process
// exit code (0 = all outputs written and validated). Reads USAMKIT_THREADS
// to cap parallelism.
int run_cli(const std::vector<std::string>& args);

}  // namespace usamkit
