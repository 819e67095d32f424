#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bsauth::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kDomainError = 1;
inline constexpr int kIoError = 2;

struct Console {
    std::ostream& out;
    std::ostream& err;
    bool color = false;
};

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, Console console);

}  // namespace bsauth::cli
