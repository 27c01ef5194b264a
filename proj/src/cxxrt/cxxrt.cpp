#include "ehvm/cxxrt.hpp"

#include <algorithm>
#include <string>

namespace ehvm::cxxrt {

using unwind::ReasonCode;
using vm::FaultKind;
using vm::Machine;
using vm::Word;

bool match_type(const ir::TypeInfoRegistry& registry, uint32_t thrown, uint32_t clause) {
  if (clause == 0) return true;
  return registry.derives_from(thrown, clause);
}

HandlerDecision decide(const ir::TypeInfoRegistry& registry, const lsda::LsdaTable& table,
                       uint64_t ip, bool native, uint32_t thrown) {
  using O = HandlerDecision::Outcome;
  HandlerDecision d;
  auto site = lsda::find_callsite(table, ip);
  if (!site) {
    d.outcome = O::NoCallSite;
    return d;
  }
  if (site->landing_pad == 0) return d;
  d.landing_pad = site->landing_pad;
  if (site->action == 0) {
    d.has_cleanup = true;
    d.outcome = O::CleanupFound;
    return d;
  }
  for (const auto& a : lsda::action_chain(table, site->action)) {
    if (a.type_filter > 0) {
      uint64_t id = table.types.at(size_t(a.type_filter - 1));
      if (id == 0 || (native && match_type(registry, thrown, uint32_t(id)))) {
        d.outcome = O::HandlerFound;
        d.selector = a.type_filter;
        return d;
      }
    } else if (a.type_filter < 0) {
      const auto& spec = table.specs.at(size_t(-a.type_filter - 1));
      bool permitted = native && std::any_of(spec.begin(), spec.end(), [&](uint64_t id) {
                         return match_type(registry, thrown, uint32_t(id));
                       });
      if (!permitted) {
        d.outcome = O::SpecViolation;
        d.selector = a.type_filter;
        return d;
      }
    } else {
      d.has_cleanup = true;
    }
  }
  if (d.has_cleanup) d.outcome = O::CleanupFound;
  return d;
}

namespace {

ReasonCode install(Machine& m, Word exc, unwind::UnwindContext& ctx, int64_t selector,
                   uint64_t landing_pad) {
  unwind::set_gr(m, ctx, 0, exc);
  unwind::set_gr(m, ctx, 1, selector);
  unwind::set_ip(m, ctx, unwind::get_region_start(m, ctx) + Word(landing_pad));
  return ReasonCode::InstallContext;
}

}  // namespace

ReasonCode personality(Machine& m, int version, unwind::Actions actions, uint64_t exception_class,
                       Word exc, unwind::UnwindContext& ctx) {
  using O = HandlerDecision::Outcome;
  const bool search = actions & unwind::kSearchPhase;
  const ReasonCode fatal = search ? ReasonCode::FatalPhase1Error : ReasonCode::FatalPhase2Error;
  if (version != unwind::kPersonalityVersion) return fatal;
  Word lsda_addr = unwind::get_lsda(m, ctx);
  if (lsda_addr == 0) return ReasonCode::ContinueUnwind;
  auto bytes = m.read_bytes(lsda_addr);
  if (!bytes) return fatal;
  lsda::LsdaTable table;
  try {
    table = lsda::decode(*bytes);
  } catch (const lsda::LsdaError&) {
    return fatal;
  }
  const bool native = exception_class == unwind::kCxxExceptionClass;
  uint32_t thrown = native ? uint32_t(unwind::header_get(m, exc, header::kTypeInfo)) : 0;
  auto d = decide(m.image().module().typeinfos, table, uint64_t(unwind::get_ip(m, ctx)), native, thrown);
  if (d.outcome == O::NoCallSite) return fatal;
  const bool handles = d.outcome == O::HandlerFound || d.outcome == O::SpecViolation;
  if (search) return handles ? ReasonCode::HandlerFound : ReasonCode::ContinueUnwind;
  if (actions & unwind::kHandlerFrame) {
    if (!handles) return fatal;
    return install(m, exc, ctx, d.selector, d.landing_pad);
  }
  if (d.has_cleanup) return install(m, exc, ctx, 0, d.landing_pad);
  return ReasonCode::ContinueUnwind;
}

Word exception_of_payload(Machine& m, Word payload) {
  vm::HeapObject* obj = m.find_object(payload);
  if (!obj || obj->origin != vm::Origin::Exception || vm::address_offset(payload) != header::kCells)
    m.fault(FaultKind::Bounds, "not an exception payload");
  if (!obj->live) m.fault(FaultKind::UseAfterFree, "exception object already freed");
  return vm::make_address(vm::address_object(payload), 0);
}

Word allocate_exception(Machine& m, Word payload_cells) {
  if (payload_cells < 0) m.fault(FaultKind::Bounds, "negative exception size");
  if (m.state().fault_injection && m.choose(2) == 1)
    m.fault(FaultKind::Terminate, "exception allocation failed");
  Word exc = m.allocate(vm::Origin::Exception, header::kCells + size_t(payload_cells));
  for (uint32_t i = 0; i < header::kCells; ++i) unwind::header_set(m, exc, i, 0);
  unwind::header_set(m, exc, unwind::header::kClass, Word(unwind::kCxxExceptionClass));
  unwind::header_set(m, exc, unwind::header::kCleanup, kCxxCleanupHook);
  return exc + header::kCells;
}

vm::BuiltinResult cxa_throw(Machine& m, Word payload, Word typeinfo, Word dtor) {
  Word exc = exception_of_payload(m, payload);
  const auto& registry = m.image().module().typeinfos;
  if (typeinfo < 1 || size_t(typeinfo) > registry.size()) m.fault(FaultKind::Trap, "throw of an unknown typeinfo");
  if (dtor != 0) {
    if (!vm::is_code_address(dtor) || vm::code_pc(dtor) != 0 ||
        vm::code_function(dtor) >= m.image().functions().size() ||
        m.image().function(vm::code_function(dtor)).param_slots.size() != 1)
      m.fault(FaultKind::Trap, "exception destructor must be a one-argument function");
  }
  unwind::header_set(m, exc, header::kTypeInfo, typeinfo);
  unwind::header_set(m, exc, header::kDestructor, dtor);
  unwind::header_set(m, exc, header::kHandlerCount, 0);
  unwind::header_set(m, exc, header::kRethrown, 0);
  ReasonCode r = unwind::raise_exception(m, exc, unwind_runtime());
  if (r == ReasonCode::InstallContext) return vm::BuiltinResult::transferred();
  m.fault(FaultKind::Terminate, r == ReasonCode::EndOfStack
                                    ? "uncaught exception"
                                    : "unwinder error " + std::string(unwind::reason_name(r)));
}

Word begin_catch(Machine& m, Word exc) {
  auto& caught = m.current_thread().caught;
  const bool native = uint64_t(unwind::header_get(m, exc, unwind::header::kClass)) == unwind::kCxxExceptionClass;
  unwind::header_set(m, exc, unwind::header::kCursorFrame, 0);
  unwind::header_set(m, exc, unwind::header::kHandlerFrame, 0);
  unwind::header_set(m, exc, unwind::header::kCursorFlags, 0);
  if (caught.empty() || caught.back() != exc) caught.push_back(exc);
  if (!native) return exc;
  unwind::header_set(m, exc, header::kHandlerCount, unwind::header_get(m, exc, header::kHandlerCount) + 1);
  unwind::header_set(m, exc, header::kRethrown, 0);
  return exc + header::kCells;
}

vm::BuiltinResult end_catch(Machine& m) {
  auto& caught = m.current_thread().caught;
  if (caught.empty()) m.fault(FaultKind::Terminate, "end of catch without a caught exception");
  Word exc = caught.back();
  const bool native = uint64_t(unwind::header_get(m, exc, unwind::header::kClass)) == unwind::kCxxExceptionClass;
  if (!native) {
    caught.pop_back();
    return unwind::delete_exception(m, exc, unwind_runtime());
  }
  Word count = unwind::header_get(m, exc, header::kHandlerCount) - 1;
  unwind::header_set(m, exc, header::kHandlerCount, count);
  if (count > 0) return vm::BuiltinResult::of(0);
  caught.pop_back();
  if (unwind::header_get(m, exc, header::kRethrown) != 0) return vm::BuiltinResult::of(0);
  return unwind::delete_exception(m, exc, unwind_runtime());
}

vm::BuiltinResult rethrow(Machine& m) {
  auto& caught = m.current_thread().caught;
  if (caught.empty()) m.fault(FaultKind::Terminate, "rethrow without a caught exception");
  Word exc = caught.back();
  if (uint64_t(unwind::header_get(m, exc, unwind::header::kClass)) == unwind::kCxxExceptionClass)
    unwind::header_set(m, exc, header::kRethrown, 1);
  else
    caught.pop_back();
  ReasonCode r = unwind::raise_exception(m, exc, unwind_runtime());
  if (r == ReasonCode::InstallContext) return vm::BuiltinResult::transferred();
  m.fault(FaultKind::Terminate, r == ReasonCode::EndOfStack
                                    ? "uncaught exception"
                                    : "unwinder error " + std::string(unwind::reason_name(r)));
}

}  // namespace ehvm::cxxrt
