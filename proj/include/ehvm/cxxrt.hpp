#pragma once

// Minimal C++-style language runtime: exception allocation, throw, catch
// bracketing, rethrow, terminate semantics and the personality routine.

#include <cstdint>
#include <optional>

#include "ehvm/ir.hpp"
#include "ehvm/lsda.hpp"
#include "ehvm/machine.hpp"
#include "ehvm/unwind.hpp"

namespace ehvm::cxxrt {

// Language part of the exception header, after the unwind header cells.
namespace header {
inline constexpr uint32_t kTypeInfo = unwind::header::kCells;
inline constexpr uint32_t kDestructor = kTypeInfo + 1;  // code address or 0
inline constexpr uint32_t kHandlerCount = kTypeInfo + 2;
inline constexpr uint32_t kRethrown = kTypeInfo + 3;
inline constexpr uint32_t kCells = kTypeInfo + 4;
}  // namespace header

// Runtime token of the built-in deletion hook of language exceptions.
inline constexpr vm::Word kCxxCleanupHook = vm::runtime_token(1);

// Reflexive-transitive reachability from `thrown` to `clause` along base
// edges; clause 0 is the catch-all.
bool match_type(const ir::TypeInfoRegistry& registry, uint32_t thrown, uint32_t clause);

struct HandlerDecision {
  enum class Outcome { HandlerFound, CleanupFound, SpecViolation, Continue, NoCallSite };
  Outcome outcome = Outcome::Continue;
  int64_t selector = 0;
  uint64_t landing_pad = 0;
  bool has_cleanup = false;  // the chain also carries a cleanup entry

  friend bool operator==(const HandlerDecision&, const HandlerDecision&) = default;
};

// Pure decision of the personality for one frame.  `thrown` is ignored for
// foreign exceptions, which only a catch-all matches.
HandlerDecision decide(const ir::TypeInfoRegistry& registry, const lsda::LsdaTable& table,
                       uint64_t ip, bool native, uint32_t thrown);

unwind::ReasonCode personality(vm::Machine& m, int version, unwind::Actions actions,
                               uint64_t exception_class, vm::Word exc, unwind::UnwindContext& ctx);

// Header address of the exception owning `payload`; faults if there is none.
vm::Word exception_of_payload(vm::Machine& m, vm::Word payload);

vm::Word allocate_exception(vm::Machine& m, vm::Word payload_cells);
vm::BuiltinResult cxa_throw(vm::Machine& m, vm::Word payload, vm::Word typeinfo, vm::Word dtor);
vm::Word begin_catch(vm::Machine& m, vm::Word exc);
vm::BuiltinResult end_catch(vm::Machine& m);
vm::BuiltinResult rethrow(vm::Machine& m);

const unwind::Runtime& unwind_runtime();
// The runtime linked into every machine by the pipeline.
const vm::RuntimeHooks& standard_runtime();

}  // namespace ehvm::cxxrt
