#pragma once

// Runs a program through both the full pipeline and the reference
// interpreter and compares the multisets of observable executions.

#include <filesystem>
#include <string>
#include <vector>

#include "ehvm/explorer.hpp"
#include "ehvm/ir.hpp"

namespace oracle {

ehvm::ir::Module load_module(const std::filesystem::path& path);

// OUT lines and landing-pad entries ("LPAD fn block") of one machine execution.
std::vector<std::string> observable_log(const ehvm::vm::Image& image, const ehvm::explore::Execution& e);

// Label of the block holding `pc` in function `fn` of `m`.
std::string block_label(const ehvm::ir::Module& m, const std::string& fn, uint32_t pc);

struct Comparison {
  std::string program;
  bool agree = false;
  size_t machine_executions = 0;
  size_t oracle_executions = 0;
  std::string detail;
};

// Files named fi_* are explored with fault injection.
Comparison compare_program(const std::filesystem::path& path);

std::vector<std::filesystem::path> corpus_files(const std::filesystem::path& dir);

}  // namespace oracle
