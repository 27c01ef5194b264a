#pragma once

// Abstract machine for EHIR: singly-linked activation frames living in one
// tracked object space, control registers (active frame, interrupt mask),
// hypercalls and a thread scheduler whose decisions are nondeterministic
// choices.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ehvm/builtins.hpp"
#include "ehvm/ir.hpp"

namespace ehvm::vm {

using Word = int64_t;

// Word encodings.  Heap addresses: object id in bits 32..60, cell offset in
// bits 0..31; globals use ids from 1, dynamic objects ids from
// kDynamicBase.  Frame handles: bit 61 set, frame id below.  Code addresses:
// bit 62 set, function index in bits 24..61, pc in bits 0..23.
inline constexpr Word kCodeTag = Word(1) << 62;
inline constexpr Word kFrameTag = Word(1) << 61;
inline constexpr uint32_t kDynamicBase = 1u << 20;
inline constexpr uint32_t kRuntimeFunction = 0xFFFFFF;

constexpr Word make_address(uint32_t object, uint32_t offset) {
  return (Word(object) << 32) | Word(offset);
}
constexpr uint32_t address_object(Word a) { return uint32_t(uint64_t(a) >> 32) & 0x1FFFFFFF; }
constexpr uint32_t address_offset(Word a) { return uint32_t(uint64_t(a) & 0xFFFFFFFF); }
constexpr Word code_address(uint32_t function, uint32_t pc) {
  return kCodeTag | (Word(function) << 24) | Word(pc & 0xFFFFFF);
}
constexpr bool is_code_address(Word w) { return (w >> 61) == 2 || (w >> 61) == 3; }
constexpr bool is_frame_handle(Word w) { return (w >> 61) == 1; }
constexpr bool is_heap_address(Word w) { return w > 0 && (w >> 61) == 0; }
constexpr uint32_t code_function(Word w) { return uint32_t((uint64_t(w) & ~uint64_t(kCodeTag)) >> 24); }
constexpr uint32_t code_pc(Word w) { return uint32_t(w & 0xFFFFFF); }
constexpr Word global_address(uint32_t index) { return make_address(index + 1, 0); }
// Code addresses of host-implemented runtime routines (e.g. cleanup hooks).
constexpr Word runtime_token(uint32_t n) { return code_address(kRuntimeFunction, n); }

enum class FaultKind { Bounds, UseAfterFree, Uninitialized, NounwindViolation, Terminate, Trap, Leak };
std::string_view fault_kind_name(FaultKind k);
std::optional<FaultKind> fault_kind_from_name(std::string_view name);

struct FaultReport {
  FaultKind kind = FaultKind::Trap;
  std::string function;
  uint32_t pc = 0;
  std::string message;

  std::string str() const;
};

enum class Origin { Global, Alloca, User, Exception };

struct HeapObject {
  Origin origin = Origin::User;
  bool live = true;
  std::vector<std::optional<Word>> cells;
};

struct Frame {
  enum class OnReturn { None, FreeException };

  uint32_t id = 0;
  uint32_t parent = 0;  // 0: stack root
  uint32_t thread = 0;
  uint32_t function = 0;
  uint32_t pc = 0;
  uint32_t block = 0;
  std::optional<uint32_t> prev_block;
  std::vector<std::optional<Word>> regs;
  std::vector<uint32_t> allocas;
  // Set by _Unwind_SetIP on a suspended frame: control resumes here instead
  // of after the pending call.
  std::optional<uint32_t> redirect;
  OnReturn on_return = OnReturn::None;
  Word on_return_arg = 0;
  // Exception whose cleanup landing pad currently runs in this frame.
  Word active_cleanup = 0;
};

struct ThreadState {
  uint32_t id = 0;
  uint32_t top = 0;
  bool finished = false;
  Word result = 0;
  std::vector<Word> caught;  // caught-exception stack, innermost last
};

struct Census {
  size_t frames = 0;
  size_t allocas = 0;
  size_t exceptions = 0;
  size_t user = 0;

  size_t objects() const { return allocas + exceptions + user; }
  friend bool operator==(const Census&, const Census&) = default;
};

// Self-contained machine state; copying it forks an execution.
struct MachineState {
  std::vector<HeapObject> globals;  // object ids 1..
  std::vector<HeapObject> objects;  // object ids kDynamicBase..
  std::map<uint32_t, Frame> frames;
  uint32_t next_frame = 1;
  std::vector<ThreadState> threads;
  uint32_t current = 0;
  bool mask = false;
  bool fault_injection = false;
  bool just_scheduled = false;
  std::optional<FaultReport> error;
  std::optional<Word> exit_code;
  uint64_t unwinder_entries = 0;
  uint64_t steps = 0;
};

// ---------------------------------------------------------------------------
// Image: a module with flattened code and operands resolved to slots.

struct ResolvedOperand {
  enum class Kind { Reg, Imm, Global, Function, TypeInfo };
  Kind kind = Kind::Imm;
  int64_t value = 0;
};

struct Code {
  ir::Opcode op = ir::Opcode::Trap;
  const ir::Instruction* src = nullptr;
  uint32_t block = 0;
  int32_t result = -1;  // landingpad: exception slot, selector at result + 1
  std::vector<ResolvedOperand> args;
  int32_t callee = -1;
  std::optional<ir::Builtin> builtin;
  uint32_t targets[2] = {0, 0};  // block indices
  std::vector<uint32_t> phi_blocks;
};

struct CompiledFunction {
  const ir::Function* ir = nullptr;
  uint32_t index = 0;
  std::vector<Code> code;
  std::vector<uint32_t> block_start;
  std::vector<uint32_t> block_of_pc;
  uint32_t slots = 0;
  std::vector<uint32_t> param_slots;
  std::optional<uint32_t> lsda_global;

  bool is_landing_pad(uint32_t pc) const {
    return pc < code.size() && code[pc].op == ir::Opcode::LandingPad;
  }
};

class Image {
 public:
  // The module must pass ir::validate.
  explicit Image(ir::Module m);

  const ir::Module& module() const { return *module_; }
  const std::vector<CompiledFunction>& functions() const { return functions_; }
  const CompiledFunction& function(uint32_t index) const { return functions_.at(index); }
  std::optional<uint32_t> function_index(std::string_view name) const;
  std::optional<uint32_t> global_index(std::string_view name) const;

 private:
  std::unique_ptr<ir::Module> module_;
  std::vector<CompiledFunction> functions_;
  std::unordered_map<std::string, uint32_t> fn_index_;
  std::unordered_map<std::string, uint32_t> global_index_;
};

// ---------------------------------------------------------------------------

class Chooser {
 public:
  virtual ~Chooser() = default;
  virtual uint32_t choose(uint32_t arity) = 0;
};

// Deterministic policy used by `ehvm run`: always the first alternative.
class FirstChoice final : public Chooser {
 public:
  uint32_t choose(uint32_t) override { return 0; }
};

class Machine;

struct BuiltinResult {
  enum class Status { Value, Transferred, Pending };
  Status status = Status::Value;
  Word value = 0;

  static BuiltinResult of(Word v) { return {Status::Value, v}; }
  static BuiltinResult transferred() { return {Status::Transferred, 0}; }
  // A callee frame was pushed; the call completes when it returns.
  static BuiltinResult pending() { return {Status::Pending, 0}; }
};

// Runtime symbols above the hypercall layer (unwinder, language runtime).
class RuntimeHooks {
 public:
  virtual ~RuntimeHooks() = default;
  virtual BuiltinResult call(Machine& m, ir::Builtin b, std::span<const Word> args) const = 0;
};

struct MachineOptions {
  bool fault_injection = false;
  bool leak_check = true;
  uint64_t max_steps = 1'000'000;
};

struct StepOutcome {
  enum class Kind { Continue, Halted, Fault };
  Kind kind = Kind::Continue;
  Word exit_code = 0;
  std::optional<FaultReport> fault;
};

// Thrown by Machine::fault; converted into a StepOutcome at the step boundary.
struct FaultSignal {
  FaultReport report;
};

class Machine {
 public:
  Machine(std::shared_ptr<const Image> image, const RuntimeHooks& hooks, Chooser& chooser,
          MachineOptions options = {});

  StepOutcome step();
  StepOutcome run();

  MachineState& state() { return state_; }
  const MachineState& state() const { return state_; }
  const Image& image() const { return *image_; }
  const RuntimeHooks& hooks() const { return hooks_; }
  const std::vector<std::string>& events() const { return events_; }
  void emit(std::string event) { events_.push_back(std::move(event)); }

  // Hypercalls.
  uint32_t choose(uint32_t n);
  bool set_mask(bool value);
  // Removes the frames from `from` up to, not including, `to` (0: the whole
  // chain), freeing their allocas.  Returns the number of allocas freed.
  size_t dios_unwind(uint32_t from, uint32_t to);
  void dios_jump(uint32_t frame, uint32_t pc, std::optional<bool> mask);
  uint32_t spawn_thread(uint32_t function, std::span<const Word> args);

  // Frames.
  uint32_t active_frame() const;
  ThreadState& current_thread() { return state_.threads.at(state_.current); }
  Frame& frame(uint32_t id);
  const Frame& frame(uint32_t id) const;
  bool is_live_frame(uint32_t id) const;
  bool is_ancestor_or_self(uint32_t ancestor, uint32_t frame) const;
  uint32_t frame_of_handle(Word handle) const;  // faults on non-frames
  static Word frame_handle(uint32_t id) { return id == 0 ? 0 : kFrameTag | Word(id); }
  const CompiledFunction& function_of(uint32_t frame) const;
  std::string frame_label(uint32_t frame) const;  // "fn#id" or "-"
  std::string location(uint32_t frame) const;     // "fn pc"
  // Pushes a guest call on the current thread above the active frame.
  uint32_t push_call(uint32_t function, std::span<const Word> args,
                     Frame::OnReturn on_return = Frame::OnReturn::None, Word on_return_arg = 0);
  void set_reg(Frame& f, int32_t slot, Word v);
  Word get_reg(const Frame& f, int32_t slot) const;

  // Memory.
  Word allocate(Origin origin, size_t cells);
  Word alloca_in(uint32_t frame, size_t cells);
  void free_object(Word address, Origin expected);
  HeapObject* find_object(Word address);  // nullptr when no object has this id
  HeapObject& object(Word address);       // faults unless live
  Word load(Word address);
  void store(Word address, Word value);
  // Cells from address to the end of the object; nullopt if any is not a byte.
  std::optional<std::vector<uint8_t>> read_bytes(Word address);
  Census census() const;

  [[noreturn]] void fault(FaultKind kind, std::string message);
  [[noreturn]] void fault_at(uint32_t frame, FaultKind kind, std::string message);

 private:
  void execute(Frame& f);
  BuiltinResult call_builtin(Frame& f, ir::Builtin b, std::span<const Word> args);
  void complete_call(Frame& f, const Code& c, Word value);
  void do_return(Frame& f, Word value);
  void goto_block(Frame& f, uint32_t block);
  void thread_finished();
  void maybe_schedule();
  bool is_global_effect(const Frame& f) const;
  Word eval(const Frame& f, const ResolvedOperand& o) const;
  std::optional<Word> try_eval(const Frame& f, const ResolvedOperand& o) const;
  size_t destroy_frame(uint32_t id);
  void collect_orphans(uint32_t thread);
  std::vector<uint32_t> runnable_threads() const;
  StepOutcome halt();

  std::shared_ptr<const Image> image_;
  const RuntimeHooks& hooks_;
  Chooser& chooser_;
  MachineOptions options_;
  MachineState state_;
  std::vector<std::string> events_;
};

}  // namespace ehvm::vm
