#include <stdexcept>
#include <unordered_map>

#include "ehvm/machine.hpp"

namespace ehvm::vm {

namespace {

struct FunctionCompiler {
  const ir::Module& module;
  const std::unordered_map<std::string, uint32_t>& fn_index;
  const std::unordered_map<std::string, uint32_t>& global_index;
  CompiledFunction& out;
  std::unordered_map<std::string, uint32_t> slot_of;

  uint32_t new_slot(const std::string& name, uint32_t width) {
    uint32_t s = out.slots;
    slot_of[name] = s;
    out.slots += width;
    return s;
  }

  uint32_t block_index(const std::string& label) const {
    auto idx = out.ir->find_block(label);
    if (!idx) throw std::logic_error("unresolved label %" + label);
    return static_cast<uint32_t>(*idx);
  }

  ResolvedOperand resolve(const ir::Operand& o) const {
    using K = ResolvedOperand::Kind;
    switch (o.kind) {
      case ir::Operand::Kind::Imm:
        return {K::Imm, o.imm};
      case ir::Operand::Kind::Reg: {
        auto it = slot_of.find(o.name);
        if (it == slot_of.end()) throw std::logic_error("undefined register %" + o.name);
        return {K::Reg, int64_t(it->second) + (o.part == ir::Operand::Part::Sel ? 1 : 0)};
      }
      case ir::Operand::Kind::Sym: {
        if (auto it = fn_index.find(o.name); it != fn_index.end()) return {K::Function, it->second};
        if (auto it = global_index.find(o.name); it != global_index.end())
          return {K::Global, it->second};
        if (auto id = module.typeinfos.id_of(o.name)) return {K::TypeInfo, *id};
        throw std::logic_error("unresolved symbol @" + o.name);
      }
    }
    return {};
  }

  void run() {
    const ir::Function& f = *out.ir;
    for (const auto& p : f.params) out.param_slots.push_back(new_slot(p, 1));
    for (const auto& b : f.blocks)
      for (const auto& inst : b.insts)
        if (inst.result) new_slot(*inst.result, inst.op == ir::Opcode::LandingPad ? 2 : 1);

    uint32_t pc = 0;
    for (uint32_t bi = 0; bi < f.blocks.size(); ++bi) {
      out.block_start.push_back(pc);
      for (const auto& inst : f.blocks[bi].insts) {
        Code c;
        c.op = inst.op;
        c.src = &inst;
        c.block = bi;
        if (inst.result) c.result = static_cast<int32_t>(slot_of.at(*inst.result));
        for (const auto& o : inst.operands) c.args.push_back(resolve(o));
        if (inst.op == ir::Opcode::Call || inst.op == ir::Opcode::Invoke) {
          if (auto it = fn_index.find(inst.callee); it != fn_index.end())
            c.callee = static_cast<int32_t>(it->second);
          else if (auto b = ir::find_builtin(inst.callee))
            c.builtin = b->id;
          else
            throw std::logic_error("unresolved callee @" + inst.callee);
        }
        switch (inst.op) {
          case ir::Opcode::Br:
            c.targets[0] = block_index(inst.labels.at(0));
            break;
          case ir::Opcode::CondBr:
          case ir::Opcode::Invoke:
            c.targets[0] = block_index(inst.labels.at(0));
            c.targets[1] = block_index(inst.labels.at(1));
            break;
          case ir::Opcode::Phi:
            for (const auto& l : inst.labels) c.phi_blocks.push_back(block_index(l));
            break;
          default:
            break;
        }
        out.code.push_back(std::move(c));
        out.block_of_pc.push_back(bi);
        ++pc;
      }
    }
    if (f.lsda_ref) {
      auto it = global_index.find(*f.lsda_ref);
      if (it != global_index.end()) out.lsda_global = it->second;
    }
  }
};

}  // namespace

Image::Image(ir::Module m) : module_(std::make_unique<ir::Module>(std::move(m))) {
  for (uint32_t i = 0; i < module_->functions.size(); ++i) fn_index_[module_->functions[i].name] = i;
  for (uint32_t i = 0; i < module_->globals.size(); ++i) global_index_[module_->globals[i].name] = i;
  functions_.resize(module_->functions.size());
  for (uint32_t i = 0; i < module_->functions.size(); ++i) {
    functions_[i].ir = &module_->functions[i];
    functions_[i].index = i;
    FunctionCompiler{*module_, fn_index_, global_index_, functions_[i], {}}.run();
  }
}

std::optional<uint32_t> Image::function_index(std::string_view name) const {
  auto it = fn_index_.find(std::string(name));
  if (it == fn_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<uint32_t> Image::global_index(std::string_view name) const {
  auto it = global_index_.find(std::string(name));
  if (it == global_index_.end()) return std::nullopt;
  return it->second;
}

}  // namespace ehvm::vm
