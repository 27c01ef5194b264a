#pragma once

// Runtime symbols callable from EHIR without a definition in the module:
// machine hypercalls, the unwinder interface, the language runtime and the
// setjmp family.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace ehvm::ir {

enum class Builtin : uint8_t {
  // machine hypercalls
  VmChoose,
  VmMask,
  Out,
  Malloc,
  Free,
  Spawn,
  CurrentFrame,
  ParentFrame,
  DiosUnwind,
  DiosJump,
  // unwinder
  UnwindRaiseException,
  UnwindResume,
  UnwindDeleteException,
  UnwindGetGR,
  UnwindSetGR,
  UnwindGetIP,
  UnwindSetIP,
  UnwindGetLSDA,
  UnwindGetRegionStart,
  Setjmp,
  Longjmp,
  // language runtime
  CxaAllocateException,
  CxaThrow,
  CxaBeginCatch,
  CxaEndCatch,
  CxaRethrow,
  // removed by the pass
  TypeidFor,
};

struct BuiltinInfo {
  Builtin id;
  std::string_view name;
  int arity;
  bool noreturn;
};

std::span<const BuiltinInfo> builtin_table();
std::optional<BuiltinInfo> find_builtin(std::string_view name);
const BuiltinInfo& builtin_info(Builtin b);

}  // namespace ehvm::ir
