#include <doctest.h>

#include "ehvm/ir.hpp"

using namespace ehvm::ir;

namespace {

const char* kSample = R"(typeinfo @A
typeinfo @B : @A

global @g = [1, -2, 3]

fn @f(%x) nounwind {
entry:
  %y = add %x, 1
  ret %y
}

fn @main() personality @__ehvm_personality_v0 {
entry:
  %a = alloca 2
  %r = invoke @f(7) to %ok unwind %lp
ok:
  %p = gep %a, 1
  store %p, %r
  br %loop
loop:
  %i = phi [0, %ok], [%j, %loop]
  %j = add %i, 1
  %c = lt %j, 3
  condbr %c, %loop, %done
done:
  ret 0
lp:
  %l = landingpad cleanup catch @B filter [@A] catch any
  %s = call @llvm.eh.typeid.for(@B)
  %e = eq %l.sel, %s
  resume %l
}
)";

bool has_diag(const Module& m, const std::string& text) {
  for (const auto& d : validate(m))
    if (d.str().find(text) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("print is a fixed point of parse") {
  Module m = parse_module(kSample);
  std::string printed = print_module(m);
  CHECK(printed == kSample);
  CHECK(print_module(parse_module(printed)) == printed);
}

TEST_CASE("parsed structure") {
  Module m = parse_module(kSample);
  REQUIRE(m.functions.size() == 2);
  const Function& main = *m.find_function("main");
  CHECK(main.personality == std::string(kPersonalityName));
  CHECK(m.find_function("f")->nounwind);
  CHECK(main.size() == 14);
  CHECK(main.block_start(2) == 5);
  CHECK(main.at(1)->op == Opcode::Invoke);
  CHECK(main.at(1)->labels == std::vector<std::string>{"ok", "lp"});
  CHECK(main.at(99) == nullptr);
  const Instruction& lp = *main.at(10);
  REQUIRE(lp.op == Opcode::LandingPad);
  REQUIRE(lp.clauses.size() == 4);
  CHECK(lp.clauses[0].kind == Clause::Kind::Cleanup);
  CHECK(lp.clauses[2].types == std::vector<std::string>{"A"});
  CHECK(lp.clauses[3].catch_all);
  CHECK(main.at(12)->operands[0].part == Operand::Part::Sel);
  CHECK(m.find_global("g")->cells == std::vector<int64_t>{1, -2, 3});
  CHECK(main.has_landingpad());
  CHECK_FALSE(m.find_function("f")->has_landingpad());
}

TEST_CASE("sample validates") { CHECK(validate(parse_module(kSample)).empty()); }

TEST_CASE("typeinfo registry") {
  Module m = parse_module("typeinfo @A\ntypeinfo @B : @A\ntypeinfo @C : @B\ntypeinfo @X\nfn @main() {\nentry:\n  ret 0\n}\n");
  auto& r = m.typeinfos;
  CHECK(r.id_of("A") == 1u);
  CHECK(r.id_of("C") == 3u);
  CHECK(r.name_of(2) == "B");
  CHECK(r.derives_from(3, 1));
  CHECK(r.derives_from(2, 2));
  CHECK_FALSE(r.derives_from(1, 3));
  CHECK_FALSE(r.derives_from(4, 1));
}

TEST_CASE("parse errors carry a position") {
  try {
    parse_module("fn @main() {\nentry:\n  %x = frob 1\n}\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.loc().line == 3);
    CHECK(std::string(e.what()).find("unknown opcode 'frob'") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_module("fn @main( {"), ParseError);
  CHECK_THROWS_AS(parse_module("global @g = [1, x]"), ParseError);
  CHECK_THROWS_AS(parse_module("bogus"), ParseError);
}

TEST_CASE("validator diagnostics") {
  CHECK(has_diag(parse_module("fn @f() {\nentry:\n  ret 0\n}\n"), "missing @main"));
  CHECK(has_diag(parse_module("fn @main() {\nentry:\n  %x = add %y, 1\n  ret %x\n}\n"),
                 "use of undefined register %y"));
  CHECK(has_diag(parse_module("fn @main() {\nentry:\n  br %nowhere\n}\n"), "unknown block %nowhere"));
  CHECK(has_diag(parse_module("fn @main() {\nentry:\n  %x = add 1, 1\n}\n"), "block does not end with a terminator"));
  CHECK(has_diag(parse_module("fn @main() {\nentry:\n  invoke @main() to %a unwind %b\na:\n  ret 0\nb:\n  %l = landingpad cleanup\n  resume %l\n}\n"),
                 "landingpad in a function without personality"));
  CHECK(has_diag(parse_module("fn @main() personality @__ehvm_personality_v0 {\nentry:\n  invoke @main() to %a unwind %a\na:\n  ret 0\n}\n"),
                 "unwind target does not begin with landingpad"));
  CHECK_THROWS_AS(parse_module("fn @main() personality @mine {\nentry:\n  ret 0\n}\n"), ParseError);
  CHECK(has_diag(parse_module("fn @mine() {\nentry:\n  ret 0\n}\nfn @main() personality @mine {\nentry:\n  ret 0\n}\n"),
                 "unsupported personality @mine"));
  CHECK(has_diag(parse_module("typeinfo @A : @B\ntypeinfo @B : @A\nfn @main() {\nentry:\n  ret 0\n}\n"), "typeinfo cycle"));
  CHECK(has_diag(parse_module("fn @main() {\nentry:\n  %x = call @__vm_choose(1, 2)\n  ret %x\n}\n"),
                 "wrong number of arguments"));
  CHECK(has_diag(parse_module("fn @malloc(%n) {\nentry:\n  ret 0\n}\nfn @main() {\nentry:\n  ret 0\n}\n"),
                 "shadows a runtime symbol"));
  CHECK(has_diag(parse_module("fn @main() personality @__ehvm_personality_v0 {\nentry:\n  invoke @main() to %a unwind %b\na:\n  ret 0\nb:\n  %l = landingpad cleanup\n  %s = add %l, 1\n  ret 0\n}\n"),
                 "used without projection"));
}
