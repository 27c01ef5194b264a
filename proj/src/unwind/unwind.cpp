#include "ehvm/unwind.hpp"

#include <string>

namespace ehvm::unwind {

using vm::FaultKind;
using vm::Machine;
using vm::Word;

std::string_view reason_name(ReasonCode r) {
  switch (r) {
    case ReasonCode::NoReason: return "NO_REASON";
    case ReasonCode::ForeignExceptionCaught: return "FOREIGN_EXCEPTION_CAUGHT";
    case ReasonCode::FatalPhase2Error: return "FATAL_PHASE2_ERROR";
    case ReasonCode::FatalPhase1Error: return "FATAL_PHASE1_ERROR";
    case ReasonCode::EndOfStack: return "END_OF_STACK";
    case ReasonCode::HandlerFound: return "HANDLER_FOUND";
    case ReasonCode::InstallContext: return "INSTALL_CONTEXT";
    case ReasonCode::ContinueUnwind: return "CONTINUE_UNWIND";
  }
  return "?";
}

Word header_get(Machine& m, Word exc, uint32_t cell) {
  return m.load(vm::make_address(vm::address_object(exc), vm::address_offset(exc) + cell));
}

void header_set(Machine& m, Word exc, uint32_t cell, Word value) {
  m.store(vm::make_address(vm::address_object(exc), vm::address_offset(exc) + cell), value);
}

namespace {

PersonalityFn personality_of(Machine& m, uint32_t frame, const Runtime& rt) {
  const auto& fn = m.function_of(frame);
  if (!fn.ir->personality || !rt.personality) return nullptr;
  return rt.personality(*fn.ir->personality);
}

std::string phase_name(Actions a) {
  if (a & kSearchPhase) return "SEARCH";
  return (a & kHandlerFrame) ? "CLEANUP+HANDLER" : "CLEANUP";
}

// The personality runs with the mask the raiser had; the unwinder itself is
// atomic.
ReasonCode call_personality(Machine& m, PersonalityFn pers, Actions actions, uint64_t cls, Word exc,
                            UnwindContext& ctx, bool saved_mask) {
  m.set_mask(saved_mask);
  ReasonCode r = pers(m, kPersonalityVersion, actions, cls, exc, ctx);
  m.emit("PERSONALITY " + m.location(ctx.frame) + " " + phase_name(actions) + " " +
         std::string(reason_name(r)));
  m.set_mask(true);
  return r;
}

// Checks performed when the search walks out of `frame`.
void leave_frame(Machine& m, uint32_t frame, Word exc) {
  const auto& f = m.frame(frame);
  const auto& fn = m.function_of(frame);
  if (fn.ir->nounwind)
    m.fault_at(frame, FaultKind::NounwindViolation,
               "exception propagates out of nounwind function @" + fn.ir->name);
  if (f.active_cleanup != 0 && f.active_cleanup != exc)
    m.fault_at(frame, FaultKind::Terminate,
               "exception thrown while a cleanup of another exception is running");
}

int32_t landing_slot(Machine& m, uint32_t frame) {
  const auto& f = m.frame(frame);
  const auto& fn = m.function_of(frame);
  const auto& c = fn.code.at(f.pc);
  if (c.op != ir::Opcode::Invoke)
    m.fault(FaultKind::Trap, "unwind context is not suspended on an invoke");
  uint32_t lp = fn.block_start.at(c.targets[1]);
  if (!fn.is_landing_pad(lp)) m.fault(FaultKind::Trap, "unwind target is not a landing pad");
  return fn.code[lp].result;
}

void install(Machine& m, Word exc, const UnwindContext& ctx, bool saved_mask) {
  if (!ctx.landing_pad)
    m.fault(FaultKind::Terminate, "personality installed a context without a landing pad");
  uint32_t lp = *ctx.landing_pad;
  const auto& fn = m.function_of(ctx.frame);
  if (!fn.is_landing_pad(lp)) m.fault(FaultKind::Trap, "installed pc is not a landing pad");
  // Registers are read before the frames above are discarded.
  Word selector = get_gr(m, ctx, 1);
  uint32_t active = m.active_frame();
  if (active != ctx.frame) m.dios_unwind(active, ctx.frame);
  header_set(m, exc, header::kCursorFrame, Machine::frame_handle(ctx.frame));
  Word flags = header_get(m, exc, header::kCursorFlags);
  header_set(m, exc, header::kCursorFlags, (flags & ~kFlagSavedMask) | (saved_mask ? kFlagSavedMask : 0));
  m.frame(ctx.frame).active_cleanup = selector == 0 ? exc : 0;
  m.dios_jump(ctx.frame, lp, saved_mask);
  m.emit("INSTALL " + m.location(ctx.frame) + " " + std::to_string(selector));
}

ReasonCode phase2(Machine& m, Word exc, uint32_t start, bool saved_mask, const Runtime& rt) {
  uint64_t cls = uint64_t(header_get(m, exc, header::kClass));
  Word handler_handle = header_get(m, exc, header::kHandlerFrame);
  uint32_t handler = handler_handle == 0 ? 0 : uint32_t(handler_handle & 0xFFFFFFFF);
  for (uint32_t f = start; f != 0; f = m.frame(f).parent) {
    PersonalityFn pers = personality_of(m, f, rt);
    if (!pers) continue;
    UnwindContext ctx{f, std::nullopt};
    Actions actions = kCleanupPhase | (f == handler ? kHandlerFrame : 0);
    ReasonCode r = call_personality(m, pers, actions, cls, exc, ctx, saved_mask);
    if (r == ReasonCode::InstallContext) {
      install(m, exc, ctx, saved_mask);
      return r;
    }
    if (f == handler || r != ReasonCode::ContinueUnwind) {
      m.set_mask(saved_mask);
      return ReasonCode::FatalPhase2Error;
    }
  }
  m.set_mask(saved_mask);
  return handler == 0 ? ReasonCode::EndOfStack : ReasonCode::FatalPhase2Error;
}

}  // namespace

ReasonCode raise_exception(Machine& m, Word exc, const Runtime& rt) {
  ++m.state().unwinder_entries;
  uint32_t top = m.active_frame();
  m.emit("RAISE " + m.location(top));
  uint64_t cls = uint64_t(header_get(m, exc, header::kClass));
  bool saved = m.set_mask(true);

  uint32_t handler = 0;
  for (uint32_t f = top; f != 0; f = m.frame(f).parent) {
    if (PersonalityFn pers = personality_of(m, f, rt)) {
      UnwindContext ctx{f, std::nullopt};
      ReasonCode r = call_personality(m, pers, kSearchPhase, cls, exc, ctx, saved);
      if (r == ReasonCode::HandlerFound) {
        handler = f;
        break;
      }
      if (r != ReasonCode::ContinueUnwind) {
        m.set_mask(saved);
        return ReasonCode::FatalPhase1Error;
      }
    }
    leave_frame(m, f, exc);
  }

  bool cleanups_only = false;
  if (handler == 0) {
    if (cls == kCxxExceptionClass) cleanups_only = m.choose(2) == 1;
    if (!cleanups_only) {
      m.set_mask(saved);
      return ReasonCode::EndOfStack;
    }
  }
  header_set(m, exc, header::kHandlerFrame, Machine::frame_handle(handler));
  header_set(m, exc, header::kCursorFrame, 0);
  header_set(m, exc, header::kCursorFlags, cleanups_only ? kFlagNoHandler : 0);
  return phase2(m, exc, top, saved, rt);
}

void resume(Machine& m, Word exc, const Runtime& rt) {
  ++m.state().unwinder_entries;
  uint32_t active = m.active_frame();
  m.emit("RESUME " + m.location(active));
  Word cursor = header_get(m, exc, header::kCursorFrame);
  uint32_t frame = vm::is_frame_handle(cursor) ? uint32_t(cursor & 0xFFFFFFFF) : 0;
  if (frame == 0 || !m.is_live_frame(frame) || !m.is_ancestor_or_self(frame, active))
    m.fault(FaultKind::Terminate, "resume of an exception without an unwinder cursor");
  bool saved = m.set_mask(true);
  m.frame(frame).active_cleanup = 0;
  uint32_t start = m.frame(frame).parent;
  ReasonCode r = phase2(m, exc, start, saved, rt);
  if (r == ReasonCode::InstallContext) return;
  header_set(m, exc, header::kCursorFrame, 0);
  m.fault(FaultKind::Terminate, r == ReasonCode::EndOfStack
                                    ? "uncaught exception reached the end of the stack"
                                    : "unwinder error " + std::string(reason_name(r)));
}

vm::BuiltinResult delete_exception(Machine& m, Word exc, const Runtime& rt) {
  ++m.state().unwinder_entries;
  if (header_get(m, exc, header::kCursorFrame) != 0)
    m.fault(FaultKind::Terminate, "delete of an exception that is being unwound");
  Word hook = header_get(m, exc, header::kCleanup);
  if (hook == 0) return vm::BuiltinResult::of(0);
  if (!vm::is_code_address(hook)) m.fault(FaultKind::Trap, "corrupt exception cleanup hook");
  if (vm::code_function(hook) == vm::kRuntimeFunction) {
    if (!rt.cleanup) m.fault(FaultKind::Trap, "no runtime cleanup hook");
    return rt.cleanup(m, hook, exc);
  }
  if (vm::code_function(hook) >= m.image().functions().size() || vm::code_pc(hook) != 0)
    m.fault(FaultKind::Trap, "corrupt exception cleanup hook");
  Word args[2] = {Word(ReasonCode::ForeignExceptionCaught), exc};
  m.push_call(vm::code_function(hook), args);
  return vm::BuiltinResult::pending();
}

UnwindContext context_of(Machine& m, Word handle) {
  return UnwindContext{m.frame_of_handle(handle), std::nullopt};
}

Word get_gr(Machine& m, const UnwindContext& ctx, Word index) {
  if (index != 0 && index != 1) m.fault(FaultKind::Trap, "unsupported register " + std::to_string(index));
  int32_t slot = landing_slot(m, ctx.frame);
  return m.get_reg(m.frame(ctx.frame), slot + int32_t(index));
}

void set_gr(Machine& m, const UnwindContext& ctx, Word index, Word value) {
  if (index != 0 && index != 1) m.fault(FaultKind::Trap, "unsupported register " + std::to_string(index));
  int32_t slot = landing_slot(m, ctx.frame);
  m.set_reg(m.frame(ctx.frame), slot + int32_t(index), value);
}

Word get_ip(Machine& m, const UnwindContext& ctx) { return m.frame(ctx.frame).pc; }

void set_ip(Machine& m, UnwindContext& ctx, Word address) {
  const auto& fn = m.function_of(ctx.frame);
  if (!vm::is_code_address(address) || vm::code_function(address) != fn.index ||
      vm::code_pc(address) >= fn.code.size())
    m.fault(FaultKind::Trap, "SetIP outside the context's function");
  ctx.landing_pad = vm::code_pc(address);
}

Word get_lsda(Machine& m, const UnwindContext& ctx) {
  const auto& fn = m.function_of(ctx.frame);
  return fn.lsda_global ? vm::global_address(*fn.lsda_global) : 0;
}

Word get_region_start(Machine& m, const UnwindContext& ctx) {
  return vm::code_address(m.function_of(ctx.frame).index, 0);
}

Word setjmp(Machine& m, Word env) {
  uint32_t frame = m.active_frame();
  m.store(env, Machine::frame_handle(frame));
  m.store(vm::make_address(vm::address_object(env), vm::address_offset(env) + 1), m.frame(frame).pc);
  return 0;
}

void longjmp(Machine& m, Word env, Word value) {
  Word handle = m.load(env);
  Word pc = m.load(vm::make_address(vm::address_object(env), vm::address_offset(env) + 1));
  if (!vm::is_frame_handle(handle)) m.fault(FaultKind::Trap, "longjmp through a corrupt buffer");
  uint32_t target = uint32_t(handle & 0xFFFFFFFF);
  if (!m.is_live_frame(target)) m.fault(FaultKind::UseAfterFree, "longjmp to a frame that has returned");
  uint32_t active = m.active_frame();
  if (!m.is_ancestor_or_self(target, active))
    m.fault(FaultKind::Trap, "longjmp target is not on the current stack");
  const auto& fn = m.function_of(target);
  if (pc < 0 || size_t(pc) >= fn.code.size() || !fn.code[pc].builtin ||
      *fn.code[pc].builtin != ir::Builtin::Setjmp)
    m.fault(FaultKind::Trap, "longjmp buffer does not name a setjmp call");
  const auto& call = fn.code[pc];
  if (active != target) m.dios_unwind(active, target);
  vm::Frame& f = m.frame(target);
  m.set_reg(f, call.result, value == 0 ? 1 : value);
  f.block = fn.block_of_pc.at(pc);
  uint32_t next = call.op == ir::Opcode::Invoke ? fn.block_start.at(call.targets[0]) : uint32_t(pc) + 1;
  m.dios_jump(target, next, std::nullopt);
}

}  // namespace ehvm::unwind
