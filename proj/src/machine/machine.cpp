#include "ehvm/machine.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

namespace ehvm::vm {

namespace {

constexpr std::array<std::pair<FaultKind, std::string_view>, 7> kFaultNames = {{
    {FaultKind::Bounds, "bounds"},
    {FaultKind::UseAfterFree, "use-after-free"},
    {FaultKind::Uninitialized, "uninitialized"},
    {FaultKind::NounwindViolation, "nounwind-violation"},
    {FaultKind::Terminate, "terminate"},
    {FaultKind::Trap, "trap"},
    {FaultKind::Leak, "leak"},
}};

std::string hex(Word w) {
  std::ostringstream os;
  os << "0x" << std::hex << uint64_t(w);
  return os.str();
}

}  // namespace

std::string_view fault_kind_name(FaultKind k) {
  for (const auto& [kind, name] : kFaultNames)
    if (kind == k) return name;
  return "?";
}

std::optional<FaultKind> fault_kind_from_name(std::string_view name) {
  for (const auto& [kind, n] : kFaultNames)
    if (n == name) return kind;
  return std::nullopt;
}

std::string FaultReport::str() const {
  return std::string(fault_kind_name(kind)) + " at @" + function + " pc " + std::to_string(pc) +
         ": " + message;
}

Machine::Machine(std::shared_ptr<const Image> image, const RuntimeHooks& hooks, Chooser& chooser,
                 MachineOptions options)
    : image_(std::move(image)), hooks_(hooks), chooser_(chooser), options_(options) {
  state_.fault_injection = options_.fault_injection;
  for (const auto& g : image_->module().globals) {
    HeapObject obj{Origin::Global, true, {}};
    for (auto v : g.cells) obj.cells.emplace_back(v);
    state_.globals.push_back(std::move(obj));
  }
  auto main = image_->function_index("main");
  if (!main) throw std::logic_error("module has no @main");
  state_.threads.push_back(ThreadState{});
  push_call(*main, {});
}

// ---------------------------------------------------------------------------
// Stepping

StepOutcome Machine::step() {
  if (state_.error) return {StepOutcome::Kind::Fault, 0, state_.error};
  if (state_.exit_code) return {StepOutcome::Kind::Halted, *state_.exit_code, std::nullopt};
  try {
    if (++state_.steps > options_.max_steps) fault(FaultKind::Trap, "step limit exceeded");
    maybe_schedule();
    uint32_t a = active_frame();
    if (a == 0) fault(FaultKind::Trap, "no active frame");
    execute(frame(a));
    if (state_.exit_code) return {StepOutcome::Kind::Halted, *state_.exit_code, std::nullopt};
    return {};
  } catch (FaultSignal& s) {
    state_.error = s.report;
    emit("FAULT " + std::string(fault_kind_name(s.report.kind)) + " " + s.report.function + " " +
         std::to_string(s.report.pc));
    return {StepOutcome::Kind::Fault, 0, state_.error};
  }
}

StepOutcome Machine::run() {
  for (;;) {
    auto r = step();
    if (r.kind != StepOutcome::Kind::Continue) return r;
  }
}

std::vector<uint32_t> Machine::runnable_threads() const {
  std::vector<uint32_t> out;
  for (uint32_t i = 0; i < state_.threads.size(); ++i)
    if (!state_.threads[i].finished && state_.threads[i].top != 0) out.push_back(i);
  return out;
}

bool Machine::is_global_effect(const Frame& f) const {
  const auto& fn = image_->function(f.function);
  if (f.pc >= fn.code.size()) return false;
  const Code& c = fn.code[f.pc];
  if (c.op != ir::Opcode::Load && c.op != ir::Opcode::Store) return false;
  auto addr = try_eval(f, c.args.at(0));
  if (!addr || !is_heap_address(*addr)) return false;
  const HeapObject* obj = const_cast<Machine*>(this)->find_object(*addr);
  return obj && obj->origin != Origin::Alloca;
}

void Machine::maybe_schedule() {
  if (state_.just_scheduled) {
    state_.just_scheduled = false;
    return;
  }
  if (state_.mask) return;
  auto runnable = runnable_threads();
  if (runnable.size() < 2) return;
  if (!is_global_effect(frame(active_frame()))) return;
  uint32_t k = choose(static_cast<uint32_t>(runnable.size()));
  if (runnable[k] != state_.current) {
    state_.current = runnable[k];
    emit("SWITCH " + std::to_string(state_.current));
  }
}

void Machine::thread_finished() {
  auto runnable = runnable_threads();
  if (runnable.empty()) {
    halt();
    return;
  }
  uint32_t next = runnable[0];
  if (runnable.size() > 1 && !state_.mask) {
    next = runnable[choose(static_cast<uint32_t>(runnable.size()))];
    state_.just_scheduled = true;
  }
  state_.current = next;
  emit("SWITCH " + std::to_string(next));
}

StepOutcome Machine::halt() {
  Word code = state_.threads.at(0).result;
  if (options_.leak_check) {
    Census c = census();
    if (c.objects() != 0)
      fault(FaultKind::Leak, std::to_string(c.objects()) + " live objects at exit (" +
                                 std::to_string(c.allocas) + " alloca, " +
                                 std::to_string(c.exceptions) + " exception, " +
                                 std::to_string(c.user) + " heap)");
  }
  state_.exit_code = code;
  emit("HALT " + std::to_string(code));
  return {StepOutcome::Kind::Halted, code, std::nullopt};
}

void Machine::goto_block(Frame& f, uint32_t block) {
  f.prev_block = f.block;
  f.block = block;
  f.pc = image_->function(f.function).block_start.at(block);
}

void Machine::execute(Frame& f) {
  const auto& fn = image_->function(f.function);
  if (f.pc >= fn.code.size()) fault(FaultKind::Trap, "pc out of range");
  const Code& c = fn.code[f.pc];
  emit("STEP " + fn.ir->name + " " + std::to_string(f.pc) + " " +
       std::string(ir::opcode_name(c.op)));
  using Op = ir::Opcode;
  switch (c.op) {
    case Op::Alloca: {
      Word n = eval(f, c.args.at(0));
      if (n < 0) fault(FaultKind::Bounds, "negative alloca size");
      set_reg(f, c.result, alloca_in(f.id, size_t(n)));
      ++f.pc;
      return;
    }
    case Op::Load:
      set_reg(f, c.result, load(eval(f, c.args.at(0))));
      ++f.pc;
      return;
    case Op::Store:
      store(eval(f, c.args.at(0)), eval(f, c.args.at(1)));
      ++f.pc;
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Eq:
    case Op::Lt: {
      uint64_t a = uint64_t(eval(f, c.args.at(0)));
      uint64_t b = uint64_t(eval(f, c.args.at(1)));
      Word v = 0;
      if (c.op == Op::Add) v = Word(a + b);
      if (c.op == Op::Sub) v = Word(a - b);
      if (c.op == Op::Eq) v = a == b;
      if (c.op == Op::Lt) v = Word(a) < Word(b);
      set_reg(f, c.result, v);
      ++f.pc;
      return;
    }
    case Op::Const:
      set_reg(f, c.result, eval(f, c.args.at(0)));
      ++f.pc;
      return;
    case Op::Gep: {
      Word base = eval(f, c.args.at(0));
      Word off = eval(f, c.args.at(1));
      if (!is_heap_address(base)) fault(FaultKind::Bounds, "gep on non-pointer " + hex(base));
      int64_t cell = int64_t(address_offset(base)) + off;
      if (cell < 0 || cell > 0xFFFFFFFFll) fault(FaultKind::Bounds, "gep out of range");
      set_reg(f, c.result, make_address(address_object(base), uint32_t(cell)));
      ++f.pc;
      return;
    }
    case Op::Br:
      goto_block(f, c.targets[0]);
      return;
    case Op::CondBr:
      goto_block(f, eval(f, c.args.at(0)) != 0 ? c.targets[0] : c.targets[1]);
      return;
    case Op::Phi: {
      if (!f.prev_block) fault(FaultKind::Trap, "phi without predecessor");
      for (size_t i = 0; i < c.phi_blocks.size(); ++i) {
        if (c.phi_blocks[i] == *f.prev_block) {
          set_reg(f, c.result, eval(f, c.args.at(i)));
          ++f.pc;
          return;
        }
      }
      fault(FaultKind::Trap, "phi has no incoming value for the predecessor");
    }
    case Op::Ret:
      do_return(f, c.args.empty() ? 0 : eval(f, c.args[0]));
      return;
    case Op::LandingPad:
      ++f.pc;
      return;
    case Op::Resume:
      fault(FaultKind::Trap, "resume must be lowered by the exception pass");
    case Op::Trap:
      fault(FaultKind::Trap, "trap");
    case Op::Call:
    case Op::Invoke: {
      std::vector<Word> args;
      args.reserve(c.args.size());
      for (const auto& a : c.args) args.push_back(eval(f, a));
      if (c.callee >= 0) {
        push_call(static_cast<uint32_t>(c.callee), args);
        return;
      }
      uint32_t id = f.id;
      BuiltinResult r = call_builtin(f, *c.builtin, args);
      if (r.status != BuiltinResult::Status::Value) return;
      if (!is_live_frame(id)) fault(FaultKind::Trap, "builtin removed its calling frame");
      complete_call(frame(id), c, r.value);
      return;
    }
  }
}

void Machine::complete_call(Frame& f, const Code& c, Word value) {
  if (c.result >= 0) set_reg(f, c.result, value);
  if (c.op == ir::Opcode::Invoke)
    goto_block(f, c.targets[0]);
  else
    ++f.pc;
}

void Machine::do_return(Frame& f, Word value) {
  uint32_t id = f.id, parent = f.parent, thread = f.thread;
  Frame::OnReturn on_return = f.on_return;
  Word arg = f.on_return_arg;
  destroy_frame(id);
  if (on_return == Frame::OnReturn::FreeException) free_object(arg, Origin::Exception);
  ThreadState& t = state_.threads.at(thread);
  t.top = parent;
  if (parent == 0) {
    t.finished = true;
    t.result = value;
    thread_finished();
    return;
  }
  Frame& p = frame(parent);
  if (p.redirect) {
    uint32_t pc = *p.redirect;
    p.redirect.reset();
    p.prev_block = p.block;
    p.pc = pc;
    p.block = image_->function(p.function).block_of_pc.at(pc);
    return;
  }
  const Code& c = image_->function(p.function).code.at(p.pc);
  complete_call(p, c, value);
}

BuiltinResult Machine::call_builtin(Frame& f, ir::Builtin b, std::span<const Word> args) {
  using B = ir::Builtin;
  switch (b) {
    case B::VmChoose:
      if (args[0] < 1 || args[0] > 0xFFFFFFFFll) fault(FaultKind::Trap, "choose arity out of range");
      return BuiltinResult::of(choose(uint32_t(args[0])));
    case B::VmMask:
      return BuiltinResult::of(set_mask(args[0] != 0));
    case B::Out:
      emit("OUT " + std::to_string(args[0]));
      return BuiltinResult::of(0);
    case B::Malloc:
      if (args[0] < 0) fault(FaultKind::Bounds, "negative allocation size");
      if (state_.fault_injection && choose(2) == 1) return BuiltinResult::of(0);
      return BuiltinResult::of(allocate(Origin::User, size_t(args[0])));
    case B::Free:
      if (args[0] != 0) free_object(args[0], Origin::User);
      return BuiltinResult::of(0);
    case B::Spawn: {
      if (!is_code_address(args[0]) || code_pc(args[0]) != 0 ||
          code_function(args[0]) >= image_->functions().size())
        fault(FaultKind::Trap, "spawn of a non-function");
      const auto& callee = image_->function(code_function(args[0]));
      std::vector<Word> params;
      if (callee.param_slots.size() == 1) params.push_back(args[1]);
      if (callee.param_slots.size() > 1) fault(FaultKind::Trap, "thread entry takes at most one argument");
      return BuiltinResult::of(spawn_thread(callee.index, params));
    }
    case B::CurrentFrame:
      return BuiltinResult::of(frame_handle(f.id));
    case B::ParentFrame:
      return BuiltinResult::of(frame_handle(frame(frame_of_handle(args[0])).parent));
    case B::DiosUnwind: {
      uint32_t from = frame_of_handle(args[0]);
      uint32_t to = args[1] == 0 ? 0 : frame_of_handle(args[1]);
      dios_unwind(from, to);
      return BuiltinResult::of(0);
    }
    case B::DiosJump: {
      uint32_t target = frame_of_handle(args[0]);
      if (args[1] < 0 || args[1] > 0xFFFFFF) fault(FaultKind::Trap, "jump to invalid pc");
      std::optional<bool> mask;
      if (args[2] >= 0) mask = args[2] != 0;
      dios_jump(target, uint32_t(args[1]), mask);
      return BuiltinResult::transferred();
    }
    case B::TypeidFor:
      fault(FaultKind::Trap, "llvm.eh.typeid.for must be lowered by the exception pass");
    default:
      return hooks_.call(*this, b, args);
  }
}

// ---------------------------------------------------------------------------
// Hypercalls

uint32_t Machine::choose(uint32_t n) {
  if (n == 0) fault(FaultKind::Trap, "choose(0)");
  if (n == 1) return 0;
  uint32_t taken = chooser_.choose(n);
  if (taken >= n) fault(FaultKind::Trap, "chooser returned an out-of-range alternative");
  emit("CHOICE " + std::to_string(n) + " " + std::to_string(taken));
  return taken;
}

bool Machine::set_mask(bool value) {
  bool prev = state_.mask;
  state_.mask = value;
  emit(std::string("MASK ") + (value ? "1" : "0"));
  return prev;
}

size_t Machine::dios_unwind(uint32_t from, uint32_t to) {
  if (!is_live_frame(from)) fault(FaultKind::UseAfterFree, "unwind from a dead frame");
  if (to != 0 && !is_live_frame(to)) fault(FaultKind::UseAfterFree, "unwind to a dead frame");
  if (to != 0 && !is_ancestor_or_self(to, from))
    fault(FaultKind::Trap, "unwind target is not an ancestor");
  std::string from_label = frame_label(from), to_label = frame_label(to);
  uint32_t thread = frame(from).thread;
  std::vector<uint32_t> removed;
  for (uint32_t id = from; id != to; id = frame(id).parent) removed.push_back(id);
  size_t freed = 0;
  for (auto id : removed) freed += destroy_frame(id);
  ThreadState& t = state_.threads.at(thread);
  if (t.top != 0 && !is_live_frame(t.top)) t.top = to;
  emit("UNWIND " + from_label + " " + to_label + " freed=" + std::to_string(freed));
  return freed;
}

void Machine::dios_jump(uint32_t target, uint32_t pc, std::optional<bool> mask) {
  if (!is_live_frame(target)) fault(FaultKind::UseAfterFree, "jump to a dead frame");
  const auto& fn = function_of(target);
  if (pc >= fn.code.size()) fault(FaultKind::Trap, "jump to invalid pc " + std::to_string(pc));
  Frame& f = frame(target);
  ThreadState& t = state_.threads.at(f.thread);
  t.top = target;
  collect_orphans(f.thread);
  f.prev_block = f.block;
  f.block = fn.block_of_pc.at(pc);
  f.pc = pc;
  f.redirect.reset();
  state_.current = f.thread;
  if (mask) set_mask(*mask);
}

uint32_t Machine::spawn_thread(uint32_t function, std::span<const Word> args) {
  uint32_t tid = static_cast<uint32_t>(state_.threads.size());
  state_.threads.push_back(ThreadState{tid, 0, false, 0, {}});
  const auto& fn = image_->function(function);
  if (args.size() != fn.param_slots.size()) fault(FaultKind::Trap, "thread entry arity mismatch");
  Frame fr;
  fr.id = state_.next_frame++;
  fr.thread = tid;
  fr.function = function;
  fr.regs.resize(fn.slots);
  for (size_t i = 0; i < args.size(); ++i) fr.regs[fn.param_slots[i]] = args[i];
  state_.threads[tid].top = fr.id;
  state_.frames.emplace(fr.id, std::move(fr));
  emit("SPAWN " + std::to_string(tid) + " " + fn.ir->name);
  return tid;
}

// ---------------------------------------------------------------------------
// Frames

uint32_t Machine::active_frame() const {
  if (state_.threads.empty()) return 0;
  return state_.threads.at(state_.current).top;
}

Frame& Machine::frame(uint32_t id) {
  auto it = state_.frames.find(id);
  if (it == state_.frames.end()) fault(FaultKind::UseAfterFree, "dead frame #" + std::to_string(id));
  return it->second;
}

const Frame& Machine::frame(uint32_t id) const { return const_cast<Machine*>(this)->frame(id); }

bool Machine::is_live_frame(uint32_t id) const { return state_.frames.count(id) != 0; }

bool Machine::is_ancestor_or_self(uint32_t ancestor, uint32_t f) const {
  for (uint32_t id = f; id != 0;) {
    if (id == ancestor) return true;
    auto it = state_.frames.find(id);
    if (it == state_.frames.end()) return false;
    id = it->second.parent;
  }
  return false;
}

uint32_t Machine::frame_of_handle(Word handle) const {
  if (!is_frame_handle(handle))
    const_cast<Machine*>(this)->fault(FaultKind::Bounds, "not a frame handle: " + hex(handle));
  uint32_t id = uint32_t(handle & 0xFFFFFFFF);
  if (!is_live_frame(id))
    const_cast<Machine*>(this)->fault(FaultKind::UseAfterFree, "dead frame #" + std::to_string(id));
  return id;
}

const CompiledFunction& Machine::function_of(uint32_t id) const {
  return image_->function(frame(id).function);
}

std::string Machine::frame_label(uint32_t id) const {
  if (id == 0 || !is_live_frame(id)) return "-";
  return function_of(id).ir->name + "#" + std::to_string(id);
}

std::string Machine::location(uint32_t id) const {
  if (id == 0 || !is_live_frame(id)) return "- 0";
  return function_of(id).ir->name + " " + std::to_string(frame(id).pc);
}

uint32_t Machine::push_call(uint32_t function, std::span<const Word> args, Frame::OnReturn on_return,
                            Word on_return_arg) {
  const auto& fn = image_->function(function);
  if (args.size() != fn.param_slots.size())
    fault(FaultKind::Trap, "call of @" + fn.ir->name + " with wrong arity");
  uint32_t parent = active_frame();
  Frame fr;
  fr.id = state_.next_frame++;
  fr.parent = parent;
  fr.thread = state_.current;
  fr.function = function;
  fr.regs.resize(fn.slots);
  for (size_t i = 0; i < args.size(); ++i) fr.regs[fn.param_slots[i]] = args[i];
  fr.on_return = on_return;
  fr.on_return_arg = on_return_arg;
  uint32_t id = fr.id;
  state_.frames.emplace(id, std::move(fr));
  current_thread().top = id;
  return id;
}

void Machine::set_reg(Frame& f, int32_t slot, Word v) {
  if (slot < 0) return;
  f.regs.at(size_t(slot)) = v;
}

Word Machine::get_reg(const Frame& f, int32_t slot) const {
  const auto& r = f.regs.at(size_t(slot));
  if (!r) const_cast<Machine*>(this)->fault(FaultKind::Uninitialized, "read of an undefined register");
  return *r;
}

size_t Machine::destroy_frame(uint32_t id) {
  auto it = state_.frames.find(id);
  if (it == state_.frames.end()) return 0;
  size_t freed = 0;
  for (auto a : it->second.allocas) {
    HeapObject* obj = find_object(make_address(a, 0));
    if (obj && obj->live) {
      obj->live = false;
      ++freed;
    }
  }
  state_.frames.erase(it);
  return freed;
}

void Machine::collect_orphans(uint32_t thread) {
  std::set<uint32_t> reachable;
  for (uint32_t id = state_.threads.at(thread).top; id != 0 && is_live_frame(id);
       id = frame(id).parent)
    reachable.insert(id);
  std::vector<uint32_t> orphans;
  for (const auto& [id, f] : state_.frames)
    if (f.thread == thread && !reachable.count(id)) orphans.push_back(id);
  for (auto id : orphans) destroy_frame(id);
}

Word Machine::eval(const Frame& f, const ResolvedOperand& o) const {
  switch (o.kind) {
    case ResolvedOperand::Kind::Reg:
      return get_reg(f, int32_t(o.value));
    case ResolvedOperand::Kind::Imm:
    case ResolvedOperand::Kind::TypeInfo:
      return o.value;
    case ResolvedOperand::Kind::Global:
      return global_address(uint32_t(o.value));
    case ResolvedOperand::Kind::Function:
      return code_address(uint32_t(o.value), 0);
  }
  return 0;
}

std::optional<Word> Machine::try_eval(const Frame& f, const ResolvedOperand& o) const {
  if (o.kind == ResolvedOperand::Kind::Reg) {
    const auto& r = f.regs.at(size_t(o.value));
    if (!r) return std::nullopt;
    return *r;
  }
  return eval(f, o);
}

// ---------------------------------------------------------------------------
// Memory

Word Machine::allocate(Origin origin, size_t cells) {
  uint32_t id = kDynamicBase + static_cast<uint32_t>(state_.objects.size());
  state_.objects.push_back(HeapObject{origin, true, std::vector<std::optional<Word>>(cells)});
  return make_address(id, 0);
}

Word Machine::alloca_in(uint32_t frame_id, size_t cells) {
  Word a = allocate(Origin::Alloca, cells);
  frame(frame_id).allocas.push_back(address_object(a));
  return a;
}

HeapObject* Machine::find_object(Word address) {
  if (!is_heap_address(address)) return nullptr;
  uint32_t id = address_object(address);
  if (id >= kDynamicBase) {
    size_t k = id - kDynamicBase;
    return k < state_.objects.size() ? &state_.objects[k] : nullptr;
  }
  if (id == 0 || id > state_.globals.size()) return nullptr;
  return &state_.globals[id - 1];
}

HeapObject& Machine::object(Word address) {
  HeapObject* obj = find_object(address);
  if (!obj) fault(FaultKind::Bounds, "invalid address " + hex(address));
  if (!obj->live) fault(FaultKind::UseAfterFree, "access to freed object " + hex(address));
  return *obj;
}

Word Machine::load(Word address) {
  HeapObject& obj = object(address);
  uint32_t off = address_offset(address);
  if (off >= obj.cells.size()) fault(FaultKind::Bounds, "load out of bounds " + hex(address));
  if (!obj.cells[off]) fault(FaultKind::Uninitialized, "load of uninitialized cell " + hex(address));
  return *obj.cells[off];
}

void Machine::store(Word address, Word value) {
  HeapObject& obj = object(address);
  uint32_t off = address_offset(address);
  if (off >= obj.cells.size()) fault(FaultKind::Bounds, "store out of bounds " + hex(address));
  obj.cells[off] = value;
}

std::optional<std::vector<uint8_t>> Machine::read_bytes(Word address) {
  HeapObject& obj = object(address);
  std::vector<uint8_t> out;
  for (size_t i = address_offset(address); i < obj.cells.size(); ++i) {
    const auto& c = obj.cells[i];
    if (!c || *c < 0 || *c > 255) return std::nullopt;
    out.push_back(uint8_t(*c));
  }
  return out;
}

void Machine::free_object(Word address, Origin expected) {
  HeapObject* obj = find_object(address);
  if (!obj) fault(FaultKind::Bounds, "free of invalid address " + hex(address));
  if (!obj->live) fault(FaultKind::UseAfterFree, "double free of " + hex(address));
  if (obj->origin != expected || address_offset(address) != 0)
    fault(FaultKind::Bounds, "free of a pointer not obtained from the allocator " + hex(address));
  obj->live = false;
}

Census Machine::census() const {
  Census c;
  c.frames = state_.frames.size();
  for (const auto& o : state_.objects) {
    if (!o.live) continue;
    if (o.origin == Origin::Alloca) ++c.allocas;
    if (o.origin == Origin::Exception) ++c.exceptions;
    if (o.origin == Origin::User) ++c.user;
  }
  return c;
}

void Machine::fault(FaultKind kind, std::string message) {
  fault_at(active_frame(), kind, std::move(message));
}

void Machine::fault_at(uint32_t id, FaultKind kind, std::string message) {
  FaultReport r;
  r.kind = kind;
  r.message = std::move(message);
  auto it = state_.frames.find(id);
  if (it != state_.frames.end()) {
    r.function = image_->function(it->second.function).ir->name;
    r.pc = it->second.pc;
  } else {
    r.function = "-";
  }
  throw FaultSignal{std::move(r)};
}

}  // namespace ehvm::vm
