#include "ehvm/explorer.hpp"

#include <sstream>

#include "ehvm/cxxrt.hpp"
#include "ehvm/ehpass.hpp"

namespace ehvm::explore {

namespace {

// Follows a decision prefix, then takes the first (or last) alternative.
class PrefixChooser final : public vm::Chooser {
 public:
  PrefixChooser(std::vector<Decision> prefix, bool reverse, bool strict)
      : prefix_(std::move(prefix)), reverse_(reverse), strict_(strict) {}

  uint32_t choose(uint32_t arity) override {
    uint32_t id = uint32_t(log_.size());
    uint32_t taken;
    if (id < prefix_.size()) {
      if (prefix_[id].arity != arity)
        throw ReplayMismatch("choice " + std::to_string(id) + " has arity " + std::to_string(arity) +
                             ", trace expects " + std::to_string(prefix_[id].arity));
      taken = prefix_[id].taken;
    } else {
      if (strict_) throw ReplayMismatch("program makes more choices than the trace records");
      taken = reverse_ ? arity - 1 : 0;
    }
    log_.push_back({id, arity, taken});
    return taken;
  }

  const std::vector<Decision>& log() const { return log_; }

 private:
  std::vector<Decision> prefix_;
  std::vector<Decision> log_;
  bool reverse_;
  bool strict_;
};

// Prefix of the next execution in DFS order, or nullopt when done.
std::optional<std::vector<Decision>> next_prefix(std::vector<Decision> log, bool reverse) {
  while (!log.empty()) {
    Decision d = log.back();
    log.pop_back();
    if (!reverse && d.taken + 1 < d.arity) {
      log.push_back({d.id, d.arity, d.taken + 1});
      return log;
    }
    if (reverse && d.taken > 0) {
      log.push_back({d.id, d.arity, d.taken - 1});
      return log;
    }
  }
  return std::nullopt;
}

Execution run_with(std::shared_ptr<const vm::Image> image, const Options& options, PrefixChooser& chooser) {
  Execution e = run_once(std::move(image), options, chooser);
  e.trace.decisions = chooser.log();
  return e;
}

}  // namespace

std::string ChoiceTrace::str() const {
  std::ostringstream os;
  for (const auto& d : decisions) os << d.id << " " << d.arity << " " << d.taken << "\n";
  return os.str();
}

ChoiceTrace ChoiceTrace::parse(std::string_view text) {
  ChoiceTrace t;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Decision d;
    if (!(ls >> d.id >> d.arity >> d.taken) || d.taken >= d.arity || d.id != t.decisions.size())
      throw ReplayMismatch("malformed trace line: " + line);
    t.decisions.push_back(d);
  }
  return t;
}

std::string Outcome::str() const {
  if (kind == Kind::Halted) return "halted(" + std::to_string(exit_code) + ")";
  return "fault(" + std::string(vm::fault_kind_name(fault)) + ")";
}

std::shared_ptr<const vm::Image> prepare(const ir::Module& m) {
  auto diags = ir::validate(m);
  if (!diags.empty()) {
    std::string msg;
    for (const auto& d : diags) msg += d.str() + "\n";
    throw PipelineError(msg);
  }
  return std::make_shared<const vm::Image>(ehpass::run_pass(m));
}

Execution run_once(std::shared_ptr<const vm::Image> image, const Options& options, vm::Chooser& chooser) {
  vm::MachineOptions mo;
  mo.fault_injection = options.fault_injection;
  mo.leak_check = options.leak_check;
  mo.max_steps = options.max_steps;
  vm::Machine m(std::move(image), cxxrt::standard_runtime(), chooser, mo);
  vm::StepOutcome r;
  do {
    r = m.step();
    if (options.on_step) options.on_step(m);
  } while (r.kind == vm::StepOutcome::Kind::Continue);
  Execution e;
  if (r.kind == vm::StepOutcome::Kind::Fault) {
    e.outcome = {Outcome::Kind::Fault, 0, r.fault->kind};
    e.fault = r.fault;
  } else {
    e.outcome = {Outcome::Kind::Halted, r.exit_code, vm::FaultKind::Trap};
  }
  e.events = m.events();
  e.census = m.census();
  e.unwinder_entries = m.state().unwinder_entries;
  return e;
}

ExplorationReport explore(std::shared_ptr<const vm::Image> image, const Options& options,
                          const ExecutionCallback& on_execution) {
  ExplorationReport report;
  std::optional<std::vector<Decision>> prefix = std::vector<Decision>{};
  while (prefix) {
    if (report.executions >= options.max_executions) {
      report.bound_exhausted = true;
      break;
    }
    PrefixChooser chooser(std::move(*prefix), options.reverse, false);
    Execution e = run_with(image, options, chooser);
    ++report.executions;
    ++report.outcomes[e.outcome.str()];
    if (e.fault && !report.counterexample)
      report.counterexample = Counterexample{e.trace, e.events, *e.fault};
    if (on_execution) on_execution(e);
    prefix = next_prefix(e.trace.decisions, options.reverse);
  }
  return report;
}

ExplorationReport explore(const ir::Module& m, const Options& options, const ExecutionCallback& on_execution) {
  return explore(prepare(m), options, on_execution);
}

Execution replay(std::shared_ptr<const vm::Image> image, const ChoiceTrace& trace, const Options& options) {
  PrefixChooser chooser(trace.decisions, false, true);
  Execution e = run_with(std::move(image), options, chooser);
  if (e.trace.decisions.size() != trace.decisions.size())
    throw ReplayMismatch("program makes " + std::to_string(e.trace.decisions.size()) +
                         " choices, trace records " + std::to_string(trace.decisions.size()));
  return e;
}

std::vector<std::string> replay(const ir::Module& m, const ChoiceTrace& trace, const Options& options) {
  return replay(prepare(m), trace, options).events;
}

}  // namespace ehvm::explore
