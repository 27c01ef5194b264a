#include "oracle.hpp"

#include <map>
#include <optional>
#include <set>

namespace oracle {

namespace {

using ehvm::ir::Clause;
using ehvm::ir::Function;
using ehvm::ir::Instruction;
using ehvm::ir::Module;
using ehvm::ir::Opcode;
using ehvm::ir::Operand;

constexpr int64_t kFunctionTag = int64_t(1) << 62;

struct Fault {
  std::string kind;
};

struct Object {
  enum Kind { Global, Alloca, User, Exception } kind;
  bool live = true;
  std::vector<std::optional<int64_t>> cells;
};

struct ExceptionRecord {
  std::string type;
  std::string dtor;
  int count = 0;
  bool rethrown = false;
  bool in_flight = false;
  int64_t handler_frame = 0;
  int64_t handler_selector = 0;
};

struct Frame {
  const Function* fn = nullptr;
  size_t block = 0;
  size_t idx = 0;
  std::optional<size_t> prev;
  std::map<std::string, int64_t> regs;
  std::vector<int64_t> allocas;
  int64_t id = 0;
  int64_t cleanup_exc = 0;
  int64_t free_on_return = 0;
};

class Chooser {
 public:
  explicit Chooser(std::vector<std::pair<uint32_t, uint32_t>> prefix) : prefix_(std::move(prefix)) {}
  uint32_t choose(uint32_t n) {
    uint32_t taken = log_.size() < prefix_.size() ? prefix_[log_.size()].second : 0;
    log_.emplace_back(n, taken);
    return taken;
  }
  const std::vector<std::pair<uint32_t, uint32_t>>& log() const { return log_; }

 private:
  std::vector<std::pair<uint32_t, uint32_t>> prefix_;
  std::vector<std::pair<uint32_t, uint32_t>> log_;
};

class Interpreter {
 public:
  Interpreter(const Module& m, const Options& o, Chooser& c) : m_(m), opt_(o), chooser_(c) {}

  Result run() {
    try {
      for (const auto& g : m_.globals) {
        Object obj{Object::Global, true, {}};
        for (auto v : g.cells) obj.cells.emplace_back(v);
        globals_[g.name] = new_object(std::move(obj));
      }
      const Function* main = m_.find_function("main");
      if (!main) throw Unsupported("no @main");
      push(main, {});
      for (size_t steps = 0; !halted_; ++steps) {
        if (steps > opt_.max_steps) throw Fault{"trap"};
        step();
      }
    } catch (const Fault& f) {
      res_.outcome = "fault(" + f.kind + ")";
    }
    return res_;
  }

 private:
  // ---- memory
  int64_t new_object(Object obj) {
    heap_.push_back(std::move(obj));
    return int64_t(heap_.size()) << 32;
  }

  Object& object_at(int64_t addr) {
    size_t id = size_t(uint64_t(addr) >> 32);
    if (addr <= 0 || addr >= kFunctionTag || id == 0 || id > heap_.size()) throw Fault{"bounds"};
    Object& o = heap_[id - 1];
    if (!o.live) throw Fault{"use-after-free"};
    return o;
  }

  int64_t load(int64_t addr) {
    Object& o = object_at(addr);
    size_t off = size_t(addr & 0xFFFFFFFF);
    if (off >= o.cells.size()) throw Fault{"bounds"};
    if (!o.cells[off]) throw Fault{"uninitialized"};
    return *o.cells[off];
  }

  void store(int64_t addr, int64_t v) {
    Object& o = object_at(addr);
    size_t off = size_t(addr & 0xFFFFFFFF);
    if (off >= o.cells.size()) throw Fault{"bounds"};
    o.cells[off] = v;
  }

  void release(int64_t addr, Object::Kind kind) {
    size_t id = size_t(uint64_t(addr) >> 32);
    if (addr <= 0 || id == 0 || id > heap_.size()) throw Fault{"bounds"};
    Object& o = heap_[id - 1];
    if (!o.live) throw Fault{"use-after-free"};
    if (o.kind != kind || (addr & 0xFFFFFFFF) != 0) throw Fault{"bounds"};
    o.live = false;
  }

  // ---- frames
  void push(const Function* fn, const std::vector<int64_t>& args, int64_t free_on_return = 0) {
    Frame f;
    f.fn = fn;
    f.id = next_frame_++;
    f.free_on_return = free_on_return;
    for (size_t i = 0; i < fn->params.size(); ++i) f.regs[fn->params[i]] = args.at(i);
    stack_.push_back(std::move(f));
  }

  void pop_frame() {
    for (auto a : stack_.back().allocas) {
      Object& o = heap_[size_t(uint64_t(a) >> 32) - 1];
      o.live = false;
    }
    stack_.pop_back();
  }

  const Instruction& current(const Frame& f) const { return f.fn->blocks[f.block].insts[f.idx]; }

  void go(Frame& f, const std::string& label) {
    auto b = f.fn->find_block(label);
    f.prev = f.block;
    f.block = *b;
    f.idx = 0;
  }

  void complete(Frame& f, const Instruction& in, int64_t v) {
    if (in.result) f.regs[*in.result] = v;
    if (in.op == Opcode::Invoke)
      go(f, in.labels[0]);
    else
      ++f.idx;
  }

  // ---- values
  int64_t eval(const Frame& f, const Operand& o) const {
    switch (o.kind) {
      case Operand::Kind::Imm:
        return o.imm;
      case Operand::Kind::Reg: {
        std::string key = o.part == Operand::Part::Sel ? o.name + ".sel" : o.name;
        auto it = f.regs.find(key);
        if (it == f.regs.end()) throw Fault{"uninitialized"};
        return it->second;
      }
      case Operand::Kind::Sym: {
        for (size_t i = 0; i < m_.functions.size(); ++i)
          if (m_.functions[i].name == o.name) return kFunctionTag | int64_t(i);
        if (auto it = globals_.find(o.name); it != globals_.end()) return it->second;
        for (size_t i = 0; i < m_.typeinfos.entries.size(); ++i)
          if (m_.typeinfos.entries[i].name == o.name) return int64_t(i + 1);
        throw Unsupported("symbol @" + o.name);
      }
    }
    return 0;
  }

  // ---- types and selectors
  bool derives(const std::string& from, const std::string& to) const {
    std::set<std::string> seen;
    std::vector<std::string> work{from};
    while (!work.empty()) {
      std::string cur = work.back();
      work.pop_back();
      if (cur == to) return true;
      if (!seen.insert(cur).second) continue;
      for (const auto& e : m_.typeinfos.entries)
        if (e.name == cur) work.insert(work.end(), e.bases.begin(), e.bases.end());
    }
    return false;
  }

  int64_t type_selector(const std::string& name) const {
    for (size_t i = 0; i < m_.typeinfos.entries.size(); ++i)
      if (m_.typeinfos.entries[i].name == name) return 100 + int64_t(i);
    throw Unsupported("typeinfo @" + name);
  }

  const Instruction& landing_pad_of(const Frame& f, const Instruction& invoke) const {
    auto b = f.fn->find_block(invoke.labels[1]);
    return f.fn->blocks[*b].insts.front();
  }

  // First clause handling `type`; nullopt when only cleanups (or nothing) apply.
  std::optional<int64_t> handler_selector(const Instruction& lp, const std::string& type) const {
    for (const auto& c : lp.clauses) {
      if (c.kind == Clause::Kind::Catch) {
        if (c.catch_all) return 99;
        if (derives(type, c.types[0])) return type_selector(c.types[0]);
      } else if (c.kind == Clause::Kind::Filter) {
        bool permitted = false;
        for (const auto& t : c.types) permitted = permitted || derives(type, t);
        if (!permitted) return -1;
      }
    }
    return std::nullopt;
  }

  static bool has_cleanup(const Instruction& lp) {
    for (const auto& c : lp.clauses)
      if (c.kind == Clause::Kind::Cleanup) return true;
    return false;
  }

  // ---- exceptions
  void throw_exception(int64_t exc) {
    ExceptionRecord& ex = excs_.at(exc);
    ex.in_flight = true;
    std::optional<size_t> handler;
    for (size_t i = stack_.size(); i-- > 0;) {
      const Frame& f = stack_[i];
      const Instruction& in = current(f);
      if (in.op == Opcode::Invoke) {
        if (auto sel = handler_selector(landing_pad_of(f, in), ex.type)) {
          handler = i;
          ex.handler_selector = *sel;
          break;
        }
      }
      if (f.fn->nounwind) throw Fault{"nounwind-violation"};
      if (f.cleanup_exc != 0 && f.cleanup_exc != exc) throw Fault{"terminate"};
    }
    if (!handler && chooser_.choose(2) == 0) throw Fault{"terminate"};
    ex.handler_frame = handler ? stack_[*handler].id : 0;
    unwind(exc, stack_.size() - 1);
  }

  void unwind(int64_t exc, size_t from) {
    const ExceptionRecord& ex = excs_.at(exc);
    for (size_t i = from + 1; i-- > 0;) {
      Frame& f = stack_[i];
      const Instruction& in = current(f);
      if (f.id == ex.handler_frame) {
        transfer(i, exc, ex.handler_selector);
        return;
      }
      if (in.op == Opcode::Invoke && has_cleanup(landing_pad_of(f, in))) {
        transfer(i, exc, 0);
        return;
      }
    }
    throw Fault{"terminate"};
  }

  void transfer(size_t i, int64_t exc, int64_t sel) {
    while (stack_.size() > i + 1) pop_frame();
    Frame& f = stack_[i];
    const Instruction& invoke = current(f);
    const Instruction& lp = landing_pad_of(f, invoke);
    std::string label = invoke.labels[1];
    go(f, label);
    f.regs[*lp.result] = exc;
    f.regs[*lp.result + ".sel"] = sel;
    f.cleanup_exc = sel == 0 ? exc : 0;
    res_.log.push_back("LPAD " + f.fn->name + " " + label);
  }

  void destroy_exception(int64_t exc) {
    ExceptionRecord ex = excs_.at(exc);
    if (!ex.dtor.empty()) {
      push(m_.find_function(ex.dtor), {exc}, exc);
      pending_ = true;
      return;
    }
    release(exc, Object::Exception);
    excs_.erase(exc);
  }

  // ---- execution
  void halt(int64_t code) {
    for (const auto& o : heap_)
      if (o.live && o.kind != Object::Global) throw Fault{"leak"};
    halted_ = true;
    res_.outcome = "halted(" + std::to_string(code) + ")";
  }

  void do_return(int64_t v) {
    int64_t free_exc = stack_.back().free_on_return;
    pop_frame();
    if (free_exc != 0) {
      release(free_exc, Object::Exception);
      excs_.erase(free_exc);
    }
    if (stack_.empty()) {
      halt(v);
      return;
    }
    Frame& caller = stack_.back();
    complete(caller, current(caller), v);
  }

  void step() {
    Frame& f = stack_.back();
    if (f.idx >= f.fn->blocks[f.block].insts.size()) throw Fault{"trap"};
    const Instruction& in = current(f);
    auto arg = [&](size_t i) { return eval(f, in.operands.at(i)); };
    auto set = [&](int64_t v) {
      if (in.result) f.regs[*in.result] = v;
      ++f.idx;
    };
    switch (in.op) {
      case Opcode::Alloca: {
        int64_t a = new_object(Object{Object::Alloca, true, std::vector<std::optional<int64_t>>(size_t(arg(0)))});
        f.allocas.push_back(a);
        set(a);
        return;
      }
      case Opcode::Load: set(load(arg(0))); return;
      case Opcode::Store: store(arg(0), arg(1)); ++f.idx; return;
      case Opcode::Add: set(int64_t(uint64_t(arg(0)) + uint64_t(arg(1)))); return;
      case Opcode::Sub: set(int64_t(uint64_t(arg(0)) - uint64_t(arg(1)))); return;
      case Opcode::Eq: set(arg(0) == arg(1)); return;
      case Opcode::Lt: set(arg(0) < arg(1)); return;
      case Opcode::Const: set(arg(0)); return;
      case Opcode::Gep: set(arg(0) + arg(1)); return;
      case Opcode::Br: go(f, in.labels[0]); return;
      case Opcode::CondBr: go(f, arg(0) != 0 ? in.labels[0] : in.labels[1]); return;
      case Opcode::Phi:
        for (size_t i = 0; i < in.labels.size(); ++i)
          if (f.prev && f.fn->blocks[*f.prev].label == in.labels[i]) {
            set(arg(i));
            return;
          }
        throw Fault{"trap"};
      case Opcode::Ret: do_return(in.operands.empty() ? 0 : arg(0)); return;
      case Opcode::LandingPad: ++f.idx; return;
      case Opcode::Trap: throw Fault{"trap"};
      case Opcode::Resume: {
        int64_t exc = arg(0);
        auto it = excs_.find(exc);
        if (it == excs_.end() || !it->second.in_flight) throw Fault{"terminate"};
        f.cleanup_exc = 0;
        if (stack_.size() < 2) throw Fault{"terminate"};
        unwind(exc, stack_.size() - 2);
        return;
      }
      case Opcode::Call:
      case Opcode::Invoke: {
        std::vector<int64_t> args;
        for (size_t i = 0; i < in.operands.size(); ++i) args.push_back(arg(i));
        if (const Function* callee = m_.find_function(in.callee)) {
          push(callee, args);
          return;
        }
        pending_ = false;
        bool transferred = false;
        int64_t v = builtin(f, in, args, transferred);
        if (transferred || pending_) return;
        complete(stack_.back(), in, v);
        return;
      }
    }
  }

  int64_t builtin(Frame& f, const Instruction& in, const std::vector<int64_t>& a, bool& transferred) {
    const std::string& name = in.callee;
    if (name == "__ehvm_out") {
      res_.log.push_back("OUT " + std::to_string(a[0]));
      return 0;
    }
    if (name == "__vm_choose") {
      if (a[0] < 1) throw Fault{"trap"};
      return a[0] == 1 ? 0 : chooser_.choose(uint32_t(a[0]));
    }
    if (name == "__vm_mask") {
      bool prev = mask_;
      mask_ = a[0] != 0;
      return prev;
    }
    if (name == "malloc") {
      if (opt_.fault_injection && chooser_.choose(2) == 1) return 0;
      return new_object(Object{Object::User, true, std::vector<std::optional<int64_t>>(size_t(a[0]))});
    }
    if (name == "free") {
      if (a[0] != 0) release(a[0], Object::User);
      return 0;
    }
    if (name == "__cxa_allocate_exception") {
      if (opt_.fault_injection && chooser_.choose(2) == 1) throw Fault{"terminate"};
      return new_object(Object{Object::Exception, true, std::vector<std::optional<int64_t>>(size_t(a[0]))});
    }
    if (name == "__cxa_throw") {
      ExceptionRecord ex;
      ex.type = m_.typeinfos.entries.at(size_t(a[1] - 1)).name;
      if (a[2] != 0) ex.dtor = m_.functions.at(size_t(a[2] & 0xFFFFFFFF)).name;
      excs_[a[0]] = ex;
      transferred = true;
      throw_exception(a[0]);
      return 0;
    }
    if (name == "__cxa_begin_catch") {
      ExceptionRecord& ex = excs_.at(a[0]);
      ex.count++;
      ex.rethrown = false;
      ex.in_flight = false;
      if (caught_.empty() || caught_.back() != a[0]) caught_.push_back(a[0]);
      return a[0];
    }
    if (name == "__cxa_end_catch") {
      if (caught_.empty()) throw Fault{"terminate"};
      int64_t exc = caught_.back();
      ExceptionRecord& ex = excs_.at(exc);
      if (--ex.count > 0) return 0;
      caught_.pop_back();
      if (!ex.rethrown) destroy_exception(exc);
      return 0;
    }
    if (name == "__cxa_rethrow") {
      if (caught_.empty()) throw Fault{"terminate"};
      int64_t exc = caught_.back();
      excs_.at(exc).rethrown = true;
      transferred = true;
      throw_exception(exc);
      return 0;
    }
    if (name == "llvm.eh.typeid.for") return type_selector(in.operands.at(0).name);
    if (name == "setjmp") {
      store(a[0], f.id);
      store(a[0] + 1, int64_t(f.block) << 20 | int64_t(f.idx));
      return 0;
    }
    if (name == "longjmp") {
      int64_t id = load(a[0]);
      int64_t pos = load(a[0] + 1);
      std::optional<size_t> target;
      for (size_t i = 0; i < stack_.size(); ++i)
        if (stack_[i].id == id) target = i;
      if (!target) throw Fault{"use-after-free"};
      while (stack_.size() > *target + 1) pop_frame();
      Frame& t = stack_.back();
      t.block = size_t(pos >> 20);
      t.idx = size_t(pos & 0xFFFFF);
      complete(t, current(t), a[1] == 0 ? 1 : a[1]);
      transferred = true;
      return 0;
    }
    throw Unsupported("builtin @" + name);
  }

  const Module& m_;
  Options opt_;
  Chooser& chooser_;
  std::vector<Object> heap_;
  std::map<std::string, int64_t> globals_;
  std::vector<Frame> stack_;
  int64_t next_frame_ = 1;
  std::map<int64_t, ExceptionRecord> excs_;
  std::vector<int64_t> caught_;
  bool mask_ = false;
  bool halted_ = false;
  bool pending_ = false;
  Result res_;
};

}  // namespace

std::vector<Result> explore(const Module& m, const Options& options) {
  std::vector<Result> out;
  std::optional<std::vector<std::pair<uint32_t, uint32_t>>> prefix = std::vector<std::pair<uint32_t, uint32_t>>{};
  while (prefix && out.size() < options.max_executions) {
    Chooser chooser(*prefix);
    out.push_back(Interpreter(m, options, chooser).run());
    auto log = chooser.log();
    prefix.reset();
    while (!log.empty()) {
      auto [n, taken] = log.back();
      log.pop_back();
      if (taken + 1 < n) {
        log.emplace_back(n, taken + 1);
        prefix = log;
        break;
      }
    }
  }
  return out;
}

}  // namespace oracle
