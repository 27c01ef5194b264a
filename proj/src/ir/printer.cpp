#include <sstream>

#include "ehvm/ir.hpp"

namespace ehvm::ir {

namespace {

std::string operand_str(const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::Imm:
      return std::to_string(o.imm);
    case Operand::Kind::Sym:
      return "@" + o.name;
    case Operand::Kind::Reg:
      switch (o.part) {
        case Operand::Part::Whole:
          return "%" + o.name;
        case Operand::Part::Exc:
          return "%" + o.name + ".exc";
        case Operand::Part::Sel:
          return "%" + o.name + ".sel";
      }
  }
  return "?";
}

std::string join_operands(const std::vector<Operand>& ops) {
  std::string out;
  for (size_t i = 0; i < ops.size(); ++i) {
    if (i) out += ", ";
    out += operand_str(ops[i]);
  }
  return out;
}

std::string clause_str(const Clause& c) {
  switch (c.kind) {
    case Clause::Kind::Catch:
      return c.catch_all ? "catch any" : "catch @" + c.types.at(0);
    case Clause::Kind::Filter: {
      std::string out = "filter [";
      for (size_t i = 0; i < c.types.size(); ++i) out += (i ? ", @" : "@") + c.types[i];
      return out + "]";
    }
    case Clause::Kind::Cleanup:
      return "cleanup";
  }
  return "?";
}

}  // namespace

std::string print_instruction(const Instruction& inst) {
  std::string out;
  if (inst.result) out = "%" + *inst.result + " = ";
  out += opcode_name(inst.op);
  switch (inst.op) {
    case Opcode::Br:
      out += " %" + inst.labels.at(0);
      break;
    case Opcode::CondBr:
      out += " " + operand_str(inst.operands.at(0)) + ", %" + inst.labels.at(0) + ", %" +
             inst.labels.at(1);
      break;
    case Opcode::Call:
      out += " @" + inst.callee + "(" + join_operands(inst.operands) + ")";
      break;
    case Opcode::Invoke:
      out += " @" + inst.callee + "(" + join_operands(inst.operands) + ") to %" +
             inst.labels.at(0) + " unwind %" + inst.labels.at(1);
      break;
    case Opcode::LandingPad:
      for (const auto& c : inst.clauses) out += " " + clause_str(c);
      break;
    case Opcode::Phi:
      for (size_t i = 0; i < inst.operands.size(); ++i)
        out += (i ? ", [" : " [") + operand_str(inst.operands[i]) + ", %" + inst.labels.at(i) + "]";
      break;
    case Opcode::Trap:
      break;
    default:
      if (!inst.operands.empty()) out += " " + join_operands(inst.operands);
      break;
  }
  return out;
}

std::string print_function(const Function& f) {
  std::ostringstream os;
  os << "fn @" << f.name << "(";
  for (size_t i = 0; i < f.params.size(); ++i) os << (i ? ", %" : "%") << f.params[i];
  os << ")";
  if (f.nounwind) os << " nounwind";
  if (f.personality) os << " personality @" << *f.personality;
  if (f.lsda_ref) os << " lsda @" << *f.lsda_ref;
  os << " {\n";
  for (const auto& b : f.blocks) {
    os << b.label << ":\n";
    for (const auto& inst : b.insts) os << "  " << print_instruction(inst) << "\n";
  }
  os << "}\n";
  return os.str();
}

std::string print_module(const Module& m) {
  std::ostringstream os;
  bool need_gap = false;
  for (const auto& t : m.typeinfos.entries) {
    os << "typeinfo @" << t.name;
    for (size_t i = 0; i < t.bases.size(); ++i) os << (i ? ", @" : " : @") << t.bases[i];
    os << "\n";
    need_gap = true;
  }
  if (!m.globals.empty()) {
    if (need_gap) os << "\n";
    for (const auto& g : m.globals) {
      os << "global @" << g.name << " = [";
      for (size_t i = 0; i < g.cells.size(); ++i) os << (i ? ", " : "") << g.cells[i];
      os << "]\n";
    }
    need_gap = true;
  }
  for (const auto& f : m.functions) {
    if (need_gap) os << "\n";
    os << print_function(f);
    need_gap = true;
  }
  return os.str();
}

}  // namespace ehvm::ir
