#include "ehvm/builtins.hpp"
#include "ehvm/ir.hpp"

#include <algorithm>
#include <array>
#include <vector>

namespace ehvm::ir {

namespace {

constexpr std::array<std::pair<Opcode, std::string_view>, 18> kOpcodeNames = {{
    {Opcode::Alloca, "alloca"},
    {Opcode::Load, "load"},
    {Opcode::Store, "store"},
    {Opcode::Add, "add"},
    {Opcode::Sub, "sub"},
    {Opcode::Eq, "eq"},
    {Opcode::Lt, "lt"},
    {Opcode::Br, "br"},
    {Opcode::CondBr, "condbr"},
    {Opcode::Ret, "ret"},
    {Opcode::Call, "call"},
    {Opcode::Invoke, "invoke"},
    {Opcode::LandingPad, "landingpad"},
    {Opcode::Resume, "resume"},
    {Opcode::Phi, "phi"},
    {Opcode::Const, "const"},
    {Opcode::Gep, "gep"},
    {Opcode::Trap, "trap"},
}};

constexpr std::array<BuiltinInfo, 27> kBuiltins = {{
    {Builtin::VmChoose, "__vm_choose", 1, false},
    {Builtin::VmMask, "__vm_mask", 1, false},
    {Builtin::Out, "__ehvm_out", 1, false},
    {Builtin::Malloc, "malloc", 1, false},
    {Builtin::Free, "free", 1, false},
    {Builtin::Spawn, "__ehvm_spawn", 2, false},
    {Builtin::CurrentFrame, "__ehvm_frame", 0, false},
    {Builtin::ParentFrame, "__ehvm_parent_frame", 1, false},
    {Builtin::DiosUnwind, "__dios_unwind", 2, false},
    {Builtin::DiosJump, "__dios_jump", 3, true},
    {Builtin::UnwindRaiseException, "_Unwind_RaiseException", 1, false},
    {Builtin::UnwindResume, "_Unwind_Resume", 1, true},
    {Builtin::UnwindDeleteException, "_Unwind_DeleteException", 1, false},
    {Builtin::UnwindGetGR, "_Unwind_GetGR", 2, false},
    {Builtin::UnwindSetGR, "_Unwind_SetGR", 3, false},
    {Builtin::UnwindGetIP, "_Unwind_GetIP", 1, false},
    {Builtin::UnwindSetIP, "_Unwind_SetIP", 2, false},
    {Builtin::UnwindGetLSDA, "_Unwind_GetLanguageSpecificData", 1, false},
    {Builtin::UnwindGetRegionStart, "_Unwind_GetRegionStart", 1, false},
    {Builtin::Setjmp, "setjmp", 1, false},
    {Builtin::Longjmp, "longjmp", 2, true},
    {Builtin::CxaAllocateException, "__cxa_allocate_exception", 1, false},
    {Builtin::CxaThrow, "__cxa_throw", 3, true},
    {Builtin::CxaBeginCatch, "__cxa_begin_catch", 1, false},
    {Builtin::CxaEndCatch, "__cxa_end_catch", 0, false},
    {Builtin::CxaRethrow, "__cxa_rethrow", 0, true},
    {Builtin::TypeidFor, "llvm.eh.typeid.for", 1, false},
}};

}  // namespace

std::string_view opcode_name(Opcode op) {
  for (const auto& [code, name] : kOpcodeNames)
    if (code == op) return name;
  return "?";
}

std::optional<Opcode> opcode_from_name(std::string_view name) {
  for (const auto& [code, n] : kOpcodeNames)
    if (n == name) return code;
  return std::nullopt;
}

std::span<const BuiltinInfo> builtin_table() { return kBuiltins; }

std::optional<BuiltinInfo> find_builtin(std::string_view name) {
  for (const auto& b : kBuiltins)
    if (b.name == name) return b;
  return std::nullopt;
}

const BuiltinInfo& builtin_info(Builtin b) { return kBuiltins[static_cast<size_t>(b)]; }

size_t Function::size() const {
  size_t n = 0;
  for (const auto& b : blocks) n += b.insts.size();
  return n;
}

uint32_t Function::block_start(size_t index) const {
  uint32_t pc = 0;
  for (size_t i = 0; i < index && i < blocks.size(); ++i)
    pc += static_cast<uint32_t>(blocks[i].insts.size());
  return pc;
}

std::optional<size_t> Function::find_block(std::string_view label) const {
  for (size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].label == label) return i;
  return std::nullopt;
}

const Instruction* Function::at(uint32_t pc) const {
  for (const auto& b : blocks) {
    if (pc < b.insts.size()) return &b.insts[pc];
    pc -= static_cast<uint32_t>(b.insts.size());
  }
  return nullptr;
}

std::vector<const Instruction*> Function::flatten() const {
  std::vector<const Instruction*> out;
  out.reserve(size());
  for (const auto& b : blocks)
    for (const auto& i : b.insts) out.push_back(&i);
  return out;
}

bool Function::has_landingpad() const {
  for (const auto& b : blocks)
    for (const auto& i : b.insts)
      if (i.op == Opcode::LandingPad) return true;
  return false;
}

std::optional<uint32_t> TypeInfoRegistry::id_of(std::string_view name) const {
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<uint32_t>(i + 1);
  return std::nullopt;
}

const TypeInfoDecl* TypeInfoRegistry::find(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

const std::string& TypeInfoRegistry::name_of(uint32_t id) const {
  static const std::string kNone;
  if (id == 0 || id > entries.size()) return kNone;
  return entries[id - 1].name;
}

bool TypeInfoRegistry::derives_from(uint32_t derived, uint32_t base) const {
  if (derived == 0 || base == 0 || derived > entries.size() || base > entries.size())
    return false;
  std::vector<bool> seen(entries.size() + 1, false);
  std::vector<uint32_t> work{derived};
  while (!work.empty()) {
    uint32_t cur = work.back();
    work.pop_back();
    if (cur == base) return true;
    if (seen[cur]) continue;
    seen[cur] = true;
    for (const auto& b : entries[cur - 1].bases)
      if (auto id = id_of(b)) work.push_back(*id);
  }
  return false;
}

const Function* Module::find_function(std::string_view name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

Function* Module::find_function(std::string_view name) {
  for (auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

const Global* Module::find_global(std::string_view name) const {
  for (const auto& g : globals)
    if (g.name == name) return &g;
  return nullptr;
}

Global* Module::find_global(std::string_view name) {
  for (auto& g : globals)
    if (g.name == name) return &g;
  return nullptr;
}

ParseError::ParseError(SourceLoc loc, const std::string& message)
    : std::runtime_error(std::to_string(loc.line) + ":" + std::to_string(loc.column) + ": " +
                         message),
      loc_(loc) {}

std::string Diagnostic::str() const {
  std::string out;
  if (!function.empty()) out += "@" + function;
  if (!block.empty()) out += (out.empty() ? "%" : " %") + block;
  if (pc) out += (out.empty() ? "pc " : " pc ") + std::to_string(*pc);
  if (!out.empty()) out += ": ";
  return out + message;
}

std::string lsda_global_name(std::string_view function) {
  return "__lsda." + std::string(function);
}

}  // namespace ehvm::ir
