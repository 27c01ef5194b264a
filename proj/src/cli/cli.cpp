#include "ehvm/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "ehvm/cxxrt.hpp"
#include "ehvm/ehpass.hpp"
#include "ehvm/explorer.hpp"
#include "ehvm/ir.hpp"
#include "ehvm/lsda.hpp"

namespace ehvm::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw UsageError("cannot write " + path);
}

ir::Module load(const std::string& path) {
  std::string text = read_file(path);
  try {
    return ir::parse_module(text);
  } catch (const ir::ParseError& e) {
    throw UsageError(path + ":" + e.what());
  }
}

void require_valid(const ir::Module& m, const std::string& path) {
  auto diags = ir::validate(m);
  if (diags.empty()) return;
  std::string msg;
  for (const auto& d : diags) msg += path + ": " + d.str() + "\n";
  msg.pop_back();
  throw UsageError(msg);
}

void print_events(std::ostream& out, const std::vector<std::string>& events) {
  for (const auto& e : events) out << e << "\n";
}

int report_execution(std::ostream& out, const explore::Execution& e) {
  out << "outcome " << e.outcome.str() << "\n";
  if (e.fault) {
    out << "fault " << e.fault->str() << "\n";
    return kFault;
  }
  return kOk;
}

struct RunArgs {
  std::string input;
  bool trace = false;
  bool fault_injection = false;
  bool no_pass = false;
  bool no_leak_check = false;
  std::string replay;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  auto m = load(a.input);
  require_valid(m, a.input);
  auto image = std::make_shared<const vm::Image>(a.no_pass ? m : ehpass::run_pass(m));
  explore::Options opts;
  opts.fault_injection = a.fault_injection;
  opts.leak_check = !a.no_leak_check;
  explore::Execution e;
  if (!a.replay.empty()) {
    auto trace = explore::ChoiceTrace::parse(read_file(a.replay));
    e = explore::replay(image, trace, opts);
  } else {
    vm::FirstChoice chooser;
    e = explore::run_once(image, opts, chooser);
  }
  if (a.trace) print_events(out, e.events);
  return report_execution(out, e);
}

struct ExploreArgs {
  std::string input;
  bool fault_injection = false;
  size_t max_exec = 100000;
  std::string trace_out;
  bool reverse = false;
};

int cmd_explore(const ExploreArgs& a, std::ostream& out) {
  auto m = load(a.input);
  require_valid(m, a.input);
  explore::Options opts;
  opts.fault_injection = a.fault_injection;
  opts.max_executions = a.max_exec;
  opts.reverse = a.reverse;
  auto report = explore::explore(explore::prepare(m), opts);
  out << "executions " << report.executions << "\n";
  for (const auto& [outcome, count] : report.outcomes) out << "outcome " << outcome << " x" << count << "\n";
  if (report.bound_exhausted) out << "bound exhausted after " << report.executions << " executions\n";
  if (report.counterexample) {
    const auto& cx = *report.counterexample;
    out << "counterexample " << cx.fault.str() << "\n";
    out << "choices";
    for (const auto& d : cx.trace.decisions) out << " " << d.taken << "/" << d.arity;
    out << "\n";
    if (!a.trace_out.empty()) write_file(a.trace_out, cx.trace.str());
    return kFault;
  }
  return report.bound_exhausted ? kBoundExhausted : kOk;
}

int cmd_pass(const std::string& input, const std::string& output, std::ostream& out) {
  auto m = load(input);
  require_valid(m, input);
  std::string text = ir::print_module(ehpass::run_pass(m));
  if (output.empty() || output == "-")
    out << text;
  else
    write_file(output, text);
  return kOk;
}

int cmd_lsda_dump(const std::string& input, const std::string& function, std::ostream& out) {
  auto m = load(input);
  require_valid(m, input);
  auto lowered = ehpass::run_pass(m);
  const ir::Function* f = lowered.find_function(function);
  if (!f) throw UsageError("no function @" + function);
  if (!f->lsda_ref) throw UsageError("@" + function + " has no landing pads");
  const ir::Global* g = lowered.find_global(*f->lsda_ref);
  std::vector<uint8_t> bytes(g->cells.begin(), g->cells.end());
  auto table = lsda::decode(bytes);
  out << "function @" << function << "\n";
  out << "bytes";
  for (auto b : bytes) {
    static const char* hex = "0123456789abcdef";
    out << " " << hex[b >> 4] << hex[b & 15];
  }
  out << "\n";
  out << lsda::dump(table, [&](uint64_t id) { return "@" + lowered.typeinfos.name_of(uint32_t(id)); });
  return kOk;
}

int cmd_validate(const std::string& input, std::ostream& out) {
  auto m = load(input);
  require_valid(m, input);
  out << input << ": ok\n";
  return kOk;
}

int cmd_fmt(const std::string& input, std::ostream& out) {
  out << ir::print_module(load(input));
  return kOk;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ehvm: exception-handling verification machine"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "execute @main along the first branch of every choice");
  run->add_option("input", run_args.input, "EHIR module")->required();
  run->add_flag("--trace", run_args.trace, "print the event log");
  run->add_flag("--fault-injection", run_args.fault_injection, "allocations may fail");
  run->add_option("--replay", run_args.replay, "follow a recorded choice trace");
  run->add_flag("--no-pass", run_args.no_pass, "execute without the exception pass");
  run->add_flag("--no-leak-check", run_args.no_leak_check, "do not report live objects at exit");

  ExploreArgs explore_args;
  auto* exp = app.add_subcommand("explore", "enumerate all executions");
  exp->add_option("input", explore_args.input, "EHIR module")->required();
  exp->add_flag("--fault-injection", explore_args.fault_injection, "allocations may fail");
  exp->add_option("--max-exec", explore_args.max_exec, "execution bound")->check(CLI::PositiveNumber);
  exp->add_option("--trace-out", explore_args.trace_out, "write the counterexample choice trace");
  exp->add_flag("--reverse", explore_args.reverse, "visit alternatives last-to-first");

  std::string pass_in, pass_out;
  auto* pass = app.add_subcommand("pass", "apply the exception pass");
  pass->add_option("input", pass_in, "EHIR module")->required();
  pass->add_option("-o,--output", pass_out, "output file (default: stdout)");

  std::string dump_in, dump_fn;
  auto* dump = app.add_subcommand("lsda-dump", "print the decoded LSDA of a function");
  dump->add_option("input", dump_in, "EHIR module")->required();
  dump->add_option("function", dump_fn, "function name without '@'")->required();
  auto* lsda_cmd = app.add_subcommand("lsda", "LSDA tools");
  lsda_cmd->require_subcommand(1);
  auto* lsda_dump = lsda_cmd->add_subcommand("dump", "print the decoded LSDA of a function");
  lsda_dump->add_option("input", dump_in, "EHIR module")->required();
  lsda_dump->add_option("function", dump_fn, "function name without '@'")->required();

  std::string validate_in;
  auto* val = app.add_subcommand("validate", "check structural invariants");
  val->add_option("input", validate_in, "EHIR module")->required();

  std::string fmt_in;
  auto* fmt = app.add_subcommand("fmt", "print a module in canonical form");
  fmt->add_option("input", fmt_in, "EHIR module")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  if (!dump_fn.empty() && dump_fn[0] == '@') dump_fn.erase(0, 1);
  try {
    if (*run) return cmd_run(run_args, out);
    if (*exp) return cmd_explore(explore_args, out);
    if (*pass) return cmd_pass(pass_in, pass_out, out);
    if (*dump || *lsda_dump) return cmd_lsda_dump(dump_in, dump_fn, out);
    if (*val) return cmd_validate(validate_in, out);
    if (*fmt) return cmd_fmt(fmt_in, out);
  } catch (const UsageError& e) {
    err << "ehvm: " << e.what() << "\n";
    return kUsage;
  } catch (const explore::ReplayMismatch& e) {
    err << "ehvm: replay mismatch: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "ehvm: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace ehvm::cli
