#pragma once

// EHIR: a small SSA-flavoured IR with exception-aware control flow.
//
// Values are 64-bit integers; heap addresses, frame handles and code
// addresses are integers with a reserved encoding (see machine.hpp).  Code
// positions inside a function are linear pc indices obtained by flattening
// the blocks in declaration order.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ehvm::ir {

enum class Opcode {
  Alloca,
  Load,
  Store,
  Add,
  Sub,
  Eq,
  Lt,
  Br,
  CondBr,
  Ret,
  Call,
  Invoke,
  LandingPad,
  Resume,
  Phi,
  Const,
  Gep,
  Trap,
};

std::string_view opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(std::string_view name);

struct SourceLoc {
  int line = 0;
  int column = 0;
};

struct Operand {
  enum class Kind { Reg, Imm, Sym };
  // Projections of a landingpad result pair: register 0 and register 1.
  enum class Part { Whole, Exc, Sel };

  Kind kind = Kind::Imm;
  std::string name;  // Reg: without '%'; Sym: without '@'
  Part part = Part::Whole;
  int64_t imm = 0;

  static Operand reg(std::string name, Part part = Part::Whole) {
    return Operand{Kind::Reg, std::move(name), part, 0};
  }
  static Operand sym(std::string name) {
    return Operand{Kind::Sym, std::move(name), Part::Whole, 0};
  }
  static Operand constant(int64_t v) { return Operand{Kind::Imm, {}, Part::Whole, v}; }
};

struct Clause {
  enum class Kind { Catch, Filter, Cleanup };
  Kind kind = Kind::Cleanup;
  // Catch: exactly one name, or catch_all.  Filter: zero or more names.
  std::vector<std::string> types;
  bool catch_all = false;
};

struct Instruction {
  Opcode op = Opcode::Trap;
  std::optional<std::string> result;
  std::vector<Operand> operands;
  std::string callee;               // call / invoke
  std::vector<std::string> labels;  // br: 1, condbr: 2, invoke: normal+unwind, phi: incoming
  std::vector<Clause> clauses;      // landingpad
  SourceLoc loc;
};

struct Block {
  std::string label;
  std::vector<Instruction> insts;
};

struct Function {
  std::string name;
  std::vector<std::string> params;
  std::vector<Block> blocks;
  std::optional<std::string> personality;
  bool nounwind = false;
  std::optional<std::string> lsda_ref;
  SourceLoc loc;

  size_t size() const;
  // Linear pc of the first instruction of block `index`.
  uint32_t block_start(size_t index) const;
  std::optional<size_t> find_block(std::string_view label) const;
  // Instruction at linear pc; nullptr when out of range.
  const Instruction* at(uint32_t pc) const;
  std::vector<const Instruction*> flatten() const;
  bool has_landingpad() const;
};

struct TypeInfoDecl {
  std::string name;
  std::vector<std::string> bases;
};

// Class types for catch matching.  Ids are 1-based declaration indices; id 0
// is reserved for the catch-all (null) typeinfo.
class TypeInfoRegistry {
 public:
  std::vector<TypeInfoDecl> entries;

  std::optional<uint32_t> id_of(std::string_view name) const;
  const TypeInfoDecl* find(std::string_view name) const;
  const std::string& name_of(uint32_t id) const;
  size_t size() const { return entries.size(); }
  // Reflexive-transitive reachability along base edges.
  bool derives_from(uint32_t derived, uint32_t base) const;
};

struct Global {
  std::string name;
  std::vector<int64_t> cells;
};

struct Module {
  TypeInfoRegistry typeinfos;
  std::vector<Global> globals;
  std::vector<Function> functions;

  const Function* find_function(std::string_view name) const;
  Function* find_function(std::string_view name);
  const Global* find_global(std::string_view name) const;
  Global* find_global(std::string_view name);
};

class ParseError : public std::runtime_error {
 public:
  ParseError(SourceLoc loc, const std::string& message);
  SourceLoc loc() const { return loc_; }

 private:
  SourceLoc loc_;
};

Module parse_module(std::string_view text);
std::string print_module(const Module& m);
std::string print_function(const Function& f);
std::string print_instruction(const Instruction& inst);

struct Diagnostic {
  std::string function;
  std::string block;
  std::optional<uint32_t> pc;
  std::string message;

  std::string str() const;
};

std::vector<Diagnostic> validate(const Module& m);

// Name of the LSDA global the pass attaches to `function`.
std::string lsda_global_name(std::string_view function);

inline constexpr std::string_view kPersonalityName = "__ehvm_personality_v0";
inline constexpr std::string_view kTypeidForName = "llvm.eh.typeid.for";

}  // namespace ehvm::ir
