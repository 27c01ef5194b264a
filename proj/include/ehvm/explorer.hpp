#pragma once

// Depth-first enumeration of executions over the machine's choice points by
// re-execution from the initial state.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ehvm/ir.hpp"
#include "ehvm/machine.hpp"

namespace ehvm::explore {

struct Decision {
  uint32_t id = 0;
  uint32_t arity = 0;
  uint32_t taken = 0;

  friend bool operator==(const Decision&, const Decision&) = default;
};

struct ChoiceTrace {
  std::vector<Decision> decisions;

  // One "id arity taken" line per decision.
  std::string str() const;
  static ChoiceTrace parse(std::string_view text);
  friend bool operator==(const ChoiceTrace&, const ChoiceTrace&) = default;
};

struct Outcome {
  enum class Kind { Halted, Fault };
  Kind kind = Kind::Halted;
  vm::Word exit_code = 0;
  vm::FaultKind fault = vm::FaultKind::Trap;

  // "halted(0)" or "fault(terminate)".
  std::string str() const;
  friend auto operator<=>(const Outcome& a, const Outcome& b) { return a.str() <=> b.str(); }
  friend bool operator==(const Outcome& a, const Outcome& b) { return a.str() == b.str(); }
};

struct Execution {
  Outcome outcome;
  std::optional<vm::FaultReport> fault;
  std::vector<std::string> events;
  ChoiceTrace trace;
  vm::Census census;
  uint64_t unwinder_entries = 0;
};

struct Options {
  bool fault_injection = false;
  size_t max_executions = 100000;
  bool reverse = false;
  bool leak_check = true;
  uint64_t max_steps = 1'000'000;
  // Called after every machine step (test instrumentation).
  std::function<void(vm::Machine&)> on_step;
};

struct Counterexample {
  ChoiceTrace trace;
  std::vector<std::string> events;
  vm::FaultReport fault;
};

struct ExplorationReport {
  size_t executions = 0;
  std::map<std::string, size_t> outcomes;  // outcome string -> count
  std::optional<Counterexample> counterexample;
  bool bound_exhausted = false;

  bool has_fault() const { return counterexample.has_value(); }
};

class ReplayMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// validate, then the exception pass, then compile.  Throws PipelineError
// listing the diagnostics of an invalid module.
std::shared_ptr<const vm::Image> prepare(const ir::Module& m);

using ExecutionCallback = std::function<void(const Execution&)>;

ExplorationReport explore(std::shared_ptr<const vm::Image> image, const Options& options,
                          const ExecutionCallback& on_execution = {});
ExplorationReport explore(const ir::Module& m, const Options& options,
                          const ExecutionCallback& on_execution = {});

// Runs one execution resolving choices with `chooser`.
Execution run_once(std::shared_ptr<const vm::Image> image, const Options& options,
                   vm::Chooser& chooser);

// Re-executes along `trace`.  Throws ReplayMismatch when the program's
// choice points disagree with the trace.
Execution replay(std::shared_ptr<const vm::Image> image, const ChoiceTrace& trace,
                 const Options& options);
std::vector<std::string> replay(const ir::Module& m, const ChoiceTrace& trace, const Options& options);

}  // namespace ehvm::explore
