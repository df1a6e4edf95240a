#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nightdehaze::cli {

/// Runs one command line (argv[0] is the program name). Returns 0 on success,
/// 1 on a runtime failure and 2 on a usage error. Failures print a single
/// `error stage=... file=... kind=... message="..."` line to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nightdehaze::cli
