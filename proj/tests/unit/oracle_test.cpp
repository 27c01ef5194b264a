#include <doctest.h>

#include <fstream>

#include "../oracle/compare.hpp"
#include "../oracle/oracle.hpp"

namespace {

const std::filesystem::path kCorpus = std::filesystem::path(EHVM_SOURCE_DIR) / "corpus";

std::vector<oracle::Result> reference(const std::string& name, bool fi = false) {
  oracle::Options o;
  o.fault_injection = fi;
  return oracle::explore(oracle::load_module(kCorpus / (name + ".ehir")), o);
}

}  // namespace

TEST_CASE("reference interpreter on known programs") {
  auto basic = reference("catch_basic");
  REQUIRE(basic.size() == 1);
  CHECK(basic[0].log == std::vector<std::string>{"LPAD main lp", "OUT 42"});
  CHECK(basic[0].outcome == "halted(0)");

  auto chain = reference("cleanup_chain");
  REQUIRE(chain.size() == 1);
  CHECK(chain[0].log == std::vector<std::string>{"LPAD c1 lp", "OUT 1", "LPAD c2 lp", "OUT 2", "LPAD main lp", "OUT 3"});

  auto uncaught = reference("uncaught_dtor");
  REQUIRE(uncaught.size() == 2);
  CHECK(uncaught[0].log.empty());
  CHECK(uncaught[1].log == std::vector<std::string>{"LPAD main lp", "OUT 777"});

  auto lj = reference("longjmp_multiframe");
  REQUIRE(lj.size() == 1);
  CHECK(lj[0].log == std::vector<std::string>{"OUT 1", "OUT 5"});

  CHECK(reference("nounwind_violation")[0].outcome == "fault(nounwind-violation)");
  CHECK(reference("throw_in_destructor")[0].outcome == "fault(terminate)");
  CHECK(reference("leak_no_end_catch")[0].outcome == "fault(leak)");
  CHECK(reference("fi_malloc_throw", true).size() == 3);
}

TEST_CASE("every corpus program agrees with the reference interpreter") {
  auto files = oracle::corpus_files(kCorpus);
  CHECK(files.size() >= 30);
  for (const auto& f : files) {
    auto c = oracle::compare_program(f);
    INFO(c.program << "\n" << c.detail);
    CHECK(c.agree);
  }
}

TEST_CASE("reference interpreter rejects builtins it does not model") {
  auto dir = std::filesystem::temp_directory_path() / "ehvm_oracle_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "foreign.ehir";
  {
    // The reference interpreter has no model of foreign exceptions.
    std::ofstream out(path);
    out << "fn @main() {\nentry:\n  %h = call @malloc(5)\n  %r = call @_Unwind_DeleteException(%h)\n  ret 0\n}\n";
  }
  CHECK_THROWS_AS(oracle::compare_program(path), oracle::Unsupported);
}
