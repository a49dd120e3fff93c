#pragma once

#include <iosfwd>

namespace cpd::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kDataError = 3;
inline constexpr int kIoError = 4;

int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace cpd::cli
