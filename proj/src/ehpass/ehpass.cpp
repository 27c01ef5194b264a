#include "ehvm/ehpass.hpp"

#include <algorithm>
#include <map>

#include "ehvm/builtins.hpp"

namespace ehvm::ehpass {

namespace {

bool is_typeid_for(const ir::Instruction& inst) {
  return inst.op == ir::Opcode::Call && inst.callee == ir::kTypeidForName;
}

// Per landing-pad-block action chain heads (1-based, 0 for cleanup-only) and
// the flattened action table they index.
struct ActionLayout {
  std::vector<lsda::ActionEntry> actions;
  std::map<std::string, uint64_t> chain_of_block;
};

ActionLayout layout_actions(const ir::Function& f, const SelectorAssignment& sel) {
  ActionLayout out;
  size_t filter_index = 0;
  for (const auto& b : f.blocks) {
    if (b.insts.empty() || b.insts.front().op != ir::Opcode::LandingPad) continue;
    const auto& clauses = b.insts.front().clauses;
    std::vector<int64_t> filters;
    bool only_cleanup = true;
    for (const auto& c : clauses) {
      switch (c.kind) {
        case ir::Clause::Kind::Catch:
          filters.push_back(c.catch_all ? *sel.catch_all_selector()
                                        : *sel.selector_for(c.types.at(0)));
          only_cleanup = false;
          break;
        case ir::Clause::Kind::Filter:
          filters.push_back(-static_cast<int64_t>(++filter_index));
          only_cleanup = false;
          break;
        case ir::Clause::Kind::Cleanup:
          filters.push_back(0);
          break;
      }
    }
    if (only_cleanup) {
      out.chain_of_block[b.label] = 0;
      continue;
    }
    out.chain_of_block[b.label] = out.actions.size() + 1;
    for (size_t i = 0; i < filters.size(); ++i)
      out.actions.push_back({filters[i], i + 1 < filters.size() ? 1 : 0});
  }
  return out;
}

std::vector<lsda::CallSiteRecord> callsites_with(const ir::Function& f, const ActionLayout& layout) {
  std::vector<lsda::CallSiteRecord> out;
  uint32_t pc = 0;
  for (const auto& b : f.blocks) {
    for (const auto& inst : b.insts) {
      if (inst.op == ir::Opcode::Invoke) {
        const auto& lp = inst.labels.at(1);
        auto idx = f.find_block(lp);
        if (!idx) throw PassError("@" + f.name + ": unknown unwind target %" + lp);
        auto chain = layout.chain_of_block.find(lp);
        out.push_back({pc, 1, f.block_start(*idx),
                       chain == layout.chain_of_block.end() ? 0 : chain->second});
      } else if ((inst.op == ir::Opcode::Call && !is_typeid_for(inst)) ||
                 inst.op == ir::Opcode::Resume) {
        out.push_back({pc, 1, 0, 0});
      }
      ++pc;
    }
  }
  return out;
}

}  // namespace

std::optional<int64_t> SelectorAssignment::selector_for(const std::string& type) const {
  for (size_t i = 0; i < catch_types.size(); ++i)
    if (!catch_types[i].catch_all && catch_types[i].name == type) return int64_t(i + 1);
  return std::nullopt;
}

std::optional<int64_t> SelectorAssignment::catch_all_selector() const {
  for (size_t i = 0; i < catch_types.size(); ++i)
    if (catch_types[i].catch_all) return int64_t(i + 1);
  return std::nullopt;
}

SelectorAssignment assign_selectors(const ir::Function& f) {
  SelectorAssignment sel;
  auto add_type = [&](const std::string& name, bool any) {
    for (const auto& t : sel.catch_types)
      if (t.catch_all == any && (any || t.name == name)) return;
    sel.catch_types.push_back({any ? std::string() : name, any});
  };
  for (const auto& b : f.blocks) {
    for (const auto& inst : b.insts) {
      if (inst.op != ir::Opcode::LandingPad) continue;
      for (const auto& c : inst.clauses) {
        if (c.kind == ir::Clause::Kind::Catch) add_type(c.catch_all ? "" : c.types.at(0), c.catch_all);
        if (c.kind == ir::Clause::Kind::Filter) sel.filters.push_back(c.types);
      }
    }
  }
  // typeid.for may name a type no clause mentions; it still needs a slot.
  for (const auto& b : f.blocks)
    for (const auto& inst : b.insts)
      if (is_typeid_for(inst) && !inst.operands.empty() &&
          inst.operands[0].kind == ir::Operand::Kind::Sym)
        add_type(inst.operands[0].name, false);
  return sel;
}

std::vector<lsda::CallSiteRecord> callsite_map(const ir::Function& f) {
  return callsites_with(f, layout_actions(f, assign_selectors(f)));
}

lsda::LsdaTable build_lsda(const ir::Module& m, const ir::Function& f) {
  auto sel = assign_selectors(f);
  auto layout = layout_actions(f, sel);
  lsda::LsdaTable t;
  t.callsites = callsites_with(f, layout);
  t.actions = std::move(layout.actions);
  auto id_of = [&](const std::string& name) -> uint64_t {
    auto id = m.typeinfos.id_of(name);
    if (!id) throw PassError("@" + f.name + ": unknown typeinfo @" + name);
    return *id;
  };
  for (const auto& ct : sel.catch_types) t.types.push_back(ct.catch_all ? 0 : id_of(ct.name));
  for (const auto& filter : sel.filters) {
    std::vector<uint64_t> ids;
    for (const auto& name : filter) ids.push_back(id_of(name));
    t.specs.push_back(std::move(ids));
  }
  return t;
}

ir::Module run_pass(const ir::Module& m) {
  ir::Module out = m;
  for (auto& f : out.functions) {
    if (!f.has_landingpad()) continue;
    auto sel = assign_selectors(f);
    for (auto& b : f.blocks) {
      for (auto& inst : b.insts) {
        if (is_typeid_for(inst)) {
          const auto& arg = inst.operands.at(0);
          if (arg.kind != ir::Operand::Kind::Sym || !m.typeinfos.find(arg.name))
            throw PassError("@" + f.name + ": typeid.for of unknown typeinfo");
          int64_t value = *sel.selector_for(arg.name);
          inst.op = ir::Opcode::Const;
          inst.callee.clear();
          inst.operands = {ir::Operand::constant(value)};
        } else if (inst.op == ir::Opcode::Resume) {
          auto exc = inst.operands.at(0);
          exc.part = ir::Operand::Part::Exc;
          inst.op = ir::Opcode::Call;
          inst.callee = std::string(ir::builtin_info(ir::Builtin::UnwindResume).name);
          inst.operands = {exc};
        }
      }
    }
    auto bytes = lsda::encode(build_lsda(out, f));
    std::string name = ir::lsda_global_name(f.name);
    ir::Global g{name, std::vector<int64_t>(bytes.begin(), bytes.end())};
    if (auto* existing = out.find_global(name))
      *existing = std::move(g);
    else
      out.globals.push_back(std::move(g));
    f.lsda_ref = name;
  }
  return out;
}

}  // namespace ehvm::ehpass
