#include <string>

#include "ehvm/cxxrt.hpp"

namespace ehvm::cxxrt {

using vm::BuiltinResult;
using vm::FaultKind;
using vm::Machine;
using vm::Word;

namespace {

unwind::PersonalityFn lookup_personality(std::string_view name) {
  return name == ir::kPersonalityName ? &personality : nullptr;
}

BuiltinResult run_cleanup_hook(Machine& m, Word hook, Word exc) {
  if (hook != kCxxCleanupHook) m.fault(FaultKind::Trap, "unknown runtime cleanup hook");
  Word dtor = unwind::header_get(m, exc, header::kDestructor);
  if (dtor == 0) {
    m.free_object(exc, vm::Origin::Exception);
    return BuiltinResult::of(0);
  }
  Word payload = exc + header::kCells;
  m.push_call(vm::code_function(dtor), std::span<const Word>(&payload, 1),
              vm::Frame::OnReturn::FreeException, exc);
  return BuiltinResult::pending();
}

class StandardRuntime final : public vm::RuntimeHooks {
 public:
  BuiltinResult call(Machine& m, ir::Builtin b, std::span<const Word> args) const override {
    using B = ir::Builtin;
    const auto& rt = unwind_runtime();
    switch (b) {
      case B::UnwindRaiseException: {
        auto r = unwind::raise_exception(m, args[0], rt);
        if (r == unwind::ReasonCode::InstallContext) return BuiltinResult::transferred();
        return BuiltinResult::of(Word(r));
      }
      case B::UnwindResume:
        unwind::resume(m, args[0], rt);
        return BuiltinResult::transferred();
      case B::UnwindDeleteException:
        return unwind::delete_exception(m, args[0], rt);
      case B::UnwindGetGR:
        return BuiltinResult::of(unwind::get_gr(m, unwind::context_of(m, args[0]), args[1]));
      case B::UnwindSetGR:
        unwind::set_gr(m, unwind::context_of(m, args[0]), args[1], args[2]);
        return BuiltinResult::of(0);
      case B::UnwindGetIP:
        return BuiltinResult::of(unwind::get_ip(m, unwind::context_of(m, args[0])));
      case B::UnwindSetIP: {
        auto ctx = unwind::context_of(m, args[0]);
        unwind::set_ip(m, ctx, args[1]);
        m.frame(ctx.frame).redirect = *ctx.landing_pad;
        return BuiltinResult::of(0);
      }
      case B::UnwindGetLSDA:
        return BuiltinResult::of(unwind::get_lsda(m, unwind::context_of(m, args[0])));
      case B::UnwindGetRegionStart:
        return BuiltinResult::of(unwind::get_region_start(m, unwind::context_of(m, args[0])));
      case B::Setjmp:
        return BuiltinResult::of(unwind::setjmp(m, args[0]));
      case B::Longjmp:
        unwind::longjmp(m, args[0], args[1]);
        return BuiltinResult::transferred();
      case B::CxaAllocateException:
        return BuiltinResult::of(allocate_exception(m, args[0]));
      case B::CxaThrow:
        return cxa_throw(m, args[0], args[1], args[2]);
      case B::CxaBeginCatch:
        return BuiltinResult::of(begin_catch(m, args[0]));
      case B::CxaEndCatch:
        return end_catch(m);
      case B::CxaRethrow:
        return rethrow(m);
      default:
        m.fault(FaultKind::Trap,
                "no runtime implementation of @" + std::string(ir::builtin_info(b).name));
    }
  }
};

}  // namespace

const unwind::Runtime& unwind_runtime() {
  static const unwind::Runtime rt{&lookup_personality, &run_cleanup_hook};
  return rt;
}

const vm::RuntimeHooks& standard_runtime() {
  static const StandardRuntime rt;
  return rt;
}

}  // namespace ehvm::cxxrt
