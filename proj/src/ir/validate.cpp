#include <map>
#include <set>

#include "ehvm/builtins.hpp"
#include "ehvm/ir.hpp"

namespace ehvm::ir {

namespace {

bool is_terminator(const Instruction& inst) {
  switch (inst.op) {
    case Opcode::Br:
    case Opcode::CondBr:
    case Opcode::Ret:
    case Opcode::Resume:
    case Opcode::Trap:
    case Opcode::Invoke:
      return true;
    case Opcode::Call:
      if (auto b = find_builtin(inst.callee)) return b->noreturn;
      return false;
    default:
      return false;
  }
}

enum class ResultRule { Forbidden, Required, Optional };

ResultRule result_rule(Opcode op) {
  switch (op) {
    case Opcode::Store:
    case Opcode::Br:
    case Opcode::CondBr:
    case Opcode::Ret:
    case Opcode::Resume:
    case Opcode::Trap:
      return ResultRule::Forbidden;
    case Opcode::Call:
    case Opcode::Invoke:
      return ResultRule::Optional;
    default:
      return ResultRule::Required;
  }
}

class Validator {
 public:
  explicit Validator(const Module& m) : m_(m) {}

  std::vector<Diagnostic> run() {
    check_names();
    check_typeinfos();
    const Function* main = m_.find_function("main");
    if (!main)
      report({}, "missing @main");
    else if (!main->params.empty())
      report(Diagnostic{"main", {}, {}, {}}, "@main must take no parameters");
    for (const auto& f : m_.functions) check_function(f);
    return std::move(diags_);
  }

 private:
  void report(Diagnostic where, std::string message) {
    where.message = std::move(message);
    diags_.push_back(std::move(where));
  }

  void check_names() {
    std::set<std::string> seen;
    auto add = [&](const std::string& name) {
      if (!seen.insert(name).second) report({}, "duplicate definition of @" + name);
      if (find_builtin(name) || name == kPersonalityName)
        report({}, "definition of @" + name + " shadows a runtime symbol");
    };
    for (const auto& t : m_.typeinfos.entries) add(t.name);
    for (const auto& g : m_.globals) add(g.name);
    for (const auto& f : m_.functions) add(f.name);
  }

  void check_typeinfos() {
    const auto& reg = m_.typeinfos;
    for (const auto& t : reg.entries)
      for (const auto& b : t.bases)
        if (!reg.find(b)) report({}, "typeinfo @" + t.name + " has unresolved base @" + b);
    // Colour DFS over resolved edges.
    std::vector<int> colour(reg.size() + 1, 0);
    bool cyclic = false;
    auto visit = [&](auto& self, uint32_t id) -> void {
      colour[id] = 1;
      for (const auto& b : reg.entries[id - 1].bases) {
        auto bid = reg.id_of(b);
        if (!bid) continue;
        if (colour[*bid] == 1) cyclic = true;
        if (colour[*bid] == 0) self(self, *bid);
      }
      colour[id] = 2;
    };
    for (uint32_t id = 1; id <= reg.size(); ++id)
      if (colour[id] == 0) visit(visit, id);
    if (cyclic) report({}, "typeinfo cycle");
  }

  bool symbol_defined(const std::string& name) const {
    return m_.find_function(name) || m_.find_global(name) || m_.typeinfos.find(name);
  }

  void check_function(const Function& f) {
    Diagnostic at{f.name, {}, {}, {}};
    if (f.blocks.empty()) {
      report(at, "function has no blocks");
      return;
    }
    if (f.personality && *f.personality != kPersonalityName)
      report(at, "unsupported personality @" + *f.personality);
    if (f.lsda_ref && !m_.find_global(*f.lsda_ref))
      report(at, "unresolved lsda global @" + *f.lsda_ref);

    // Registers: params and results, each defined once.
    std::map<std::string, bool> defs;  // name -> is landingpad result
    for (const auto& p : f.params)
      if (!defs.emplace(p, false).second) report(at, "duplicate parameter %" + p);
    for (const auto& b : f.blocks)
      for (const auto& inst : b.insts)
        if (inst.result &&
            !defs.emplace(*inst.result, inst.op == Opcode::LandingPad).second)
          report({f.name, b.label, std::nullopt, {}}, "register %" + *inst.result + " redefined");

    std::set<std::string> unwind_targets, normal_targets;
    for (const auto& b : f.blocks) {
      for (const auto& inst : b.insts) {
        if (inst.op == Opcode::Invoke && inst.labels.size() == 2) {
          normal_targets.insert(inst.labels[0]);
          unwind_targets.insert(inst.labels[1]);
        } else if (inst.op == Opcode::Br || inst.op == Opcode::CondBr) {
          normal_targets.insert(inst.labels.begin(), inst.labels.end());
        }
      }
    }

    uint32_t pc = 0;
    for (const auto& b : f.blocks) {
      if (b.insts.empty()) report({f.name, b.label, std::nullopt, {}}, "empty block");
      bool landing = unwind_targets.count(b.label) > 0;
      if (landing && normal_targets.count(b.label))
        report({f.name, b.label, std::nullopt, {}}, "landing block reached by a normal edge");
      if (landing && (b.insts.empty() || b.insts.front().op != Opcode::LandingPad))
        report({f.name, b.label, std::nullopt, {}}, "unwind target does not begin with landingpad");
      bool past_phis = false;
      for (size_t i = 0; i < b.insts.size(); ++i, ++pc) {
        const auto& inst = b.insts[i];
        Diagnostic here{f.name, b.label, pc, {}};
        bool last = i + 1 == b.insts.size();
        if (is_terminator(inst) != last)
          report(here, last ? "block does not end with a terminator"
                            : "terminator in the middle of a block");
        if (inst.op == Opcode::Phi) {
          if (past_phis) report(here, "phi after non-phi instruction");
        } else {
          past_phis = true;
        }
        if (inst.op == Opcode::LandingPad) {
          if (i != 0 || !landing) report(here, "misplaced landingpad");
          if (!f.personality) report(here, "landingpad in a function without personality");
          check_clauses(inst, here);
        }
        check_result(inst, here);
        check_operands(f, inst, defs, here);
        check_labels(f, inst, here);
        check_call(f, inst, here);
      }
    }
  }

  void check_result(const Instruction& inst, const Diagnostic& here) {
    auto rule = result_rule(inst.op);
    if (rule == ResultRule::Forbidden && inst.result)
      report(here, std::string(opcode_name(inst.op)) + " produces no value");
    if (rule == ResultRule::Required && !inst.result)
      report(here, std::string(opcode_name(inst.op)) + " requires a result register");
    size_t want = 0;
    switch (inst.op) {
      case Opcode::Alloca:
      case Opcode::Const:
      case Opcode::Load:
      case Opcode::Resume:
      case Opcode::CondBr:
        want = 1;
        break;
      case Opcode::Store:
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Eq:
      case Opcode::Lt:
      case Opcode::Gep:
        want = 2;
        break;
      case Opcode::Ret:
        want = inst.operands.size() <= 1 ? inst.operands.size() : 1;
        break;
      default:
        return;
    }
    if (inst.operands.size() != want) report(here, "operand arity mismatch");
    if (inst.op == Opcode::Alloca && !inst.operands.empty() && inst.operands[0].imm <= 0)
      report(here, "alloca size must be positive");
  }

  void check_clauses(const Instruction& inst, const Diagnostic& here) {
    int cleanups = 0;
    for (const auto& c : inst.clauses) {
      if (c.kind == Clause::Kind::Cleanup) ++cleanups;
      if (c.kind == Clause::Kind::Catch && !c.catch_all && c.types.size() != 1)
        report(here, "catch clause needs exactly one type");
      for (const auto& t : c.types)
        if (!m_.typeinfos.find(t)) report(here, "unresolved typeinfo @" + t);
    }
    if (cleanups > 1) report(here, "more than one cleanup clause");
  }

  void check_operands(const Function& f, const Instruction& inst,
                      const std::map<std::string, bool>& defs, const Diagnostic& here) {
    for (const auto& o : inst.operands) {
      if (o.kind == Operand::Kind::Sym) {
        if (!symbol_defined(o.name)) report(here, "unresolved symbol @" + o.name);
        continue;
      }
      if (o.kind != Operand::Kind::Reg) continue;
      auto it = defs.find(o.name);
      if (it == defs.end()) {
        report(here, "use of undefined register %" + o.name);
        continue;
      }
      bool pair = it->second;
      if (o.part != Operand::Part::Whole && !pair)
        report(here, "projection of non-landingpad register %" + o.name);
      if (o.part == Operand::Part::Whole && pair && inst.op != Opcode::Resume)
        report(here, "landingpad result %" + o.name + " used without projection");
    }
    if (inst.op == Opcode::Resume && !inst.operands.empty()) {
      const auto& o = inst.operands[0];
      auto it = o.kind == Operand::Kind::Reg ? defs.find(o.name) : defs.end();
      if (it == defs.end() || !it->second) report(here, "resume operand is not a landingpad result");
    }
    (void)f;
  }

  void check_labels(const Function& f, const Instruction& inst, const Diagnostic& here) {
    for (const auto& l : inst.labels)
      if (!f.find_block(l)) report(here, "unknown block %" + l);
    if (inst.op == Opcode::Phi && inst.labels.size() != inst.operands.size())
      report(here, "malformed phi");
  }

  void check_call(const Function& f, const Instruction& inst, const Diagnostic& here) {
    if (inst.op != Opcode::Call && inst.op != Opcode::Invoke) return;
    if (const Function* callee = m_.find_function(inst.callee)) {
      if (callee->params.size() != inst.operands.size())
        report(here, "call to @" + inst.callee + " with wrong number of arguments");
      return;
    }
    auto b = find_builtin(inst.callee);
    if (!b) {
      report(here, "unresolved function @" + inst.callee);
      return;
    }
    if (static_cast<size_t>(b->arity) != inst.operands.size())
      report(here, "call to @" + inst.callee + " with wrong number of arguments");
    if (b->id == Builtin::TypeidFor) {
      if (inst.op != Opcode::Call || !inst.result) report(here, "malformed typeid.for");
      if (inst.operands.size() == 1 && (inst.operands[0].kind != Operand::Kind::Sym ||
                                        !m_.typeinfos.find(inst.operands[0].name)))
        report(here, "typeid.for of an unknown typeinfo");
      if (!f.has_landingpad()) report(here, "typeid.for outside a function with landing pads");
    }
  }

  const Module& m_;
  std::vector<Diagnostic> diags_;
};

}  // namespace

std::vector<Diagnostic> validate(const Module& m) { return Validator(m).run(); }

}  // namespace ehvm::ir
