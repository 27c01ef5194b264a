#pragma once

#include <iosfwd>

namespace ehvm::cli {

enum ExitCode : int {
  kOk = 0,
  kFault = 1,
  kBoundExhausted = 2,
  kUsage = 3,
};

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ehvm::cli
