#pragma once

// IR-to-IR exception lowering: per-function LSDA constants, static selector
// values for typeid.for, and `resume` rewritten into runtime calls.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ehvm/ir.hpp"
#include "ehvm/lsda.hpp"

namespace ehvm::ehpass {

class PassError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Selector values of one function.  Catch types (and the catch-all marker)
// receive 1, 2, ... in first-appearance order; filter clauses receive
// -1, -2, ... in appearance order.
struct SelectorAssignment {
  struct CatchType {
    std::string name;  // empty for catch-all
    bool catch_all = false;
  };
  std::vector<CatchType> catch_types;
  std::vector<std::vector<std::string>> filters;

  // Positive selector for a named catch type, if present.
  std::optional<int64_t> selector_for(const std::string& type) const;
  std::optional<int64_t> catch_all_selector() const;
};

SelectorAssignment assign_selectors(const ir::Function& f);

// One record per call, invoke and resume (which becomes a call), in pc
// order; invokes point at their landing pad head and action chain.
std::vector<lsda::CallSiteRecord> callsite_map(const ir::Function& f);

lsda::LsdaTable build_lsda(const ir::Module& m, const ir::Function& f);

ir::Module run_pass(const ir::Module& m);

}  // namespace ehvm::ehpass
