#pragma once

#include "depbounds/config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace depbounds::cli {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitMisspecified = 2;

// args excludes the program name. JSON goes to out unless --out is given.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env);
int dispatch(int argc, char** argv);

}  // namespace depbounds::cli
