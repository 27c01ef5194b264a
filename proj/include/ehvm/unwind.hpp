#pragma once

// Unwinder library: two-phase RaiseException over the machine's linked
// frames, Resume, context register access and the setjmp family.
//
// Deviations from a native unwinder: a frame of a nounwind function crossed
// during the search phase is a verification fault, and when a language
// exception finds no handler the unwinder chooses nondeterministically
// whether to run the cleanups before reporting END_OF_STACK.

#include <cstdint>
#include <optional>
#include <string_view>

#include "ehvm/machine.hpp"

namespace ehvm::unwind {

enum class ReasonCode : int {
  NoReason = 0,
  ForeignExceptionCaught = 1,
  FatalPhase2Error = 2,
  FatalPhase1Error = 3,
  EndOfStack = 5,
  HandlerFound = 6,
  InstallContext = 7,
  ContinueUnwind = 8,
};

std::string_view reason_name(ReasonCode r);

using Actions = int;
inline constexpr Actions kSearchPhase = 1;
inline constexpr Actions kCleanupPhase = 2;
inline constexpr Actions kHandlerFrame = 4;

inline constexpr int kPersonalityVersion = 1;

// 8-byte class tag of exceptions raised by the bundled language runtime.
inline constexpr uint64_t kCxxExceptionClass = 0x4548564D43585800ull;  // "EHVMCXX\0"

// Guest-visible header of an unwind exception (cell offsets).  The cursor
// cells hold the phase-2 resumption state between a cleanup landing pad and
// the Resume it ends with.
namespace header {
inline constexpr uint32_t kClass = 0;
inline constexpr uint32_t kCleanup = 1;        // deletion hook: code address or 0
inline constexpr uint32_t kCursorFrame = 2;    // frame whose landing pad was installed
inline constexpr uint32_t kHandlerFrame = 3;   // frame flagged by phase 1, or 0
inline constexpr uint32_t kCursorFlags = 4;
inline constexpr uint32_t kCells = 5;
}  // namespace header

inline constexpr vm::Word kFlagSavedMask = 1;
inline constexpr vm::Word kFlagNoHandler = 2;

struct UnwindContext {
  uint32_t frame = 0;
  std::optional<uint32_t> landing_pad;  // set by SetIP
};

using PersonalityFn = ReasonCode (*)(vm::Machine& m, int version, Actions actions,
                                     uint64_t exception_class, vm::Word exc, UnwindContext& ctx);
using PersonalityLookup = PersonalityFn (*)(std::string_view name);
// Runs a host-implemented deletion hook (a runtime token); may push frames.
using CleanupRunner = vm::BuiltinResult (*)(vm::Machine& m, vm::Word hook, vm::Word exc);

struct Runtime {
  PersonalityLookup personality = nullptr;
  CleanupRunner cleanup = nullptr;
};

// Returns INSTALL_CONTEXT when control was transferred to a landing pad;
// any other code means the exception was not delivered and the stack is as
// it was at entry.
ReasonCode raise_exception(vm::Machine& m, vm::Word exc, const Runtime& rt);
// Continues phase 2 after a cleanup landing pad.  Faults with terminate when
// the exception has no cursor or reaches the end of the stack.
void resume(vm::Machine& m, vm::Word exc, const Runtime& rt);
vm::BuiltinResult delete_exception(vm::Machine& m, vm::Word exc, const Runtime& rt);

vm::Word get_gr(vm::Machine& m, const UnwindContext& ctx, vm::Word index);
void set_gr(vm::Machine& m, const UnwindContext& ctx, vm::Word index, vm::Word value);
vm::Word get_ip(vm::Machine& m, const UnwindContext& ctx);
void set_ip(vm::Machine& m, UnwindContext& ctx, vm::Word address);
vm::Word get_lsda(vm::Machine& m, const UnwindContext& ctx);
vm::Word get_region_start(vm::Machine& m, const UnwindContext& ctx);

vm::Word setjmp(vm::Machine& m, vm::Word env);
void longjmp(vm::Machine& m, vm::Word env, vm::Word value);

vm::Word header_get(vm::Machine& m, vm::Word exc, uint32_t cell);
void header_set(vm::Machine& m, vm::Word exc, uint32_t cell, vm::Word value);

// Guest-callable context handles are frame handles.
UnwindContext context_of(vm::Machine& m, vm::Word handle);

}  // namespace ehvm::unwind
