#include <doctest.h>

#include "helpers.hpp"

using namespace ehvm;
using testing::only;

namespace {

const char* kThreeWay = R"(fn @main() {
entry:
  %a = call @__vm_choose(2)
  %b = call @__vm_choose(3)
  %z = eq %b, 2
  condbr %z, %bad, %good
bad:
  %x = eq %a, 1
  condbr %x, %boom, %good
boom:
  trap
good:
  call @__ehvm_out(%b)
  ret 0
}
)";

}  // namespace

TEST_CASE("choice traces print and parse") {
  explore::ChoiceTrace t;
  t.decisions = {{0, 2, 1}, {1, 3, 2}};
  CHECK(t.str() == "0 2 1\n1 3 2\n");
  CHECK(explore::ChoiceTrace::parse("# comment\n0 2 1\n\n1 3 2\n") == t);
  CHECK_THROWS(explore::ChoiceTrace::parse("0 2\n"));
}

TEST_CASE("exploration report") {
  auto report = explore::explore(ir::parse_module(kThreeWay), {});
  CHECK(report.executions == 6);
  CHECK(report.outcomes == std::map<std::string, size_t>{{"fault(trap)", 1}, {"halted(0)", 5}});
  REQUIRE(report.has_fault());
  CHECK(report.counterexample->fault.kind == vm::FaultKind::Trap);
  CHECK(report.counterexample->trace.str() == "0 2 1\n1 3 2\n");
  CHECK_FALSE(report.bound_exhausted);
}

TEST_CASE("depth-first order and reverse order") {
  std::vector<std::string> fwd, rev;
  auto m = ir::parse_module(kThreeWay);
  explore::explore(m, {}, [&](const explore::Execution& e) { fwd.push_back(e.trace.str()); });
  explore::Options opts;
  opts.reverse = true;
  explore::explore(m, opts, [&](const explore::Execution& e) { rev.push_back(e.trace.str()); });
  REQUIRE(fwd.size() == 6);
  CHECK(fwd.front() == "0 2 0\n1 3 0\n");
  CHECK(fwd.back() == "0 2 1\n1 3 2\n");
  std::reverse(rev.begin(), rev.end());
  CHECK(fwd == rev);
}

TEST_CASE("execution bound") {
  explore::Options opts;
  opts.max_executions = 4;
  auto report = explore::explore(ir::parse_module(kThreeWay), opts);
  CHECK(report.executions == 4);
  CHECK(report.bound_exhausted);
}

TEST_CASE("replay reproduces an execution") {
  auto m = ir::parse_module(kThreeWay);
  auto report = explore::explore(m, {});
  auto events = explore::replay(m, report.counterexample->trace, {});
  CHECK(events == report.counterexample->events);
  CHECK(events.back().rfind("FAULT trap main", 0) == 0);
}

TEST_CASE("replay rejects a trace that does not fit") {
  auto m = ir::parse_module(kThreeWay);
  explore::ChoiceTrace wrong_arity;
  wrong_arity.decisions = {{0, 3, 1}, {1, 3, 0}};
  CHECK_THROWS_AS(explore::replay(m, wrong_arity, {}), explore::ReplayMismatch);
  explore::ChoiceTrace too_short;
  too_short.decisions = {{0, 2, 1}};
  CHECK_THROWS_AS(explore::replay(m, too_short, {}), explore::ReplayMismatch);
  explore::ChoiceTrace too_long;
  too_long.decisions = {{0, 2, 1}, {1, 3, 0}, {2, 2, 0}};
  CHECK_THROWS_AS(explore::replay(m, too_long, {}), explore::ReplayMismatch);
}

TEST_CASE("executions are independent") {
  auto m = ir::parse_module(
      "global @g = [0]\n\nfn @main() {\nentry:\n  %c = call @__vm_choose(2)\n  %v = load @g\n"
      "  %n = add %v, 1\n  store @g, %n\n  call @__ehvm_out(%n)\n  ret 0\n}\n");
  std::vector<std::string> outs;
  explore::explore(m, {}, [&](const explore::Execution& e) { outs.push_back(only(e.events, "OUT").at(0)); });
  CHECK(outs == std::vector<std::string>{"OUT 1", "OUT 1"});
}

TEST_CASE("prepare rejects invalid modules") {
  CHECK_THROWS_AS(explore::prepare(ir::parse_module("fn @f() {\nentry:\n  ret 0\n}\n")), explore::PipelineError);
}
