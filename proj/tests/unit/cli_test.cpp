#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "ehvm/cli.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kSource = EHVM_SOURCE_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ehvm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = ehvm::cli::main(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string corpus(const std::string& name) { return (kSource / "corpus" / (name + ".ehir")).string(); }

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "ehvm_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("run") {
  auto r = cli({"run", corpus("catch_basic")});
  CHECK(r.code == ehvm::cli::kOk);
  CHECK(r.out == "outcome halted(0)\n");
  auto t = cli({"run", "--trace", corpus("catch_basic")});
  CHECK(t.out.find("INSTALL main 2 1\n") != std::string::npos);
  CHECK(t.out.find("OUT 42\n") != std::string::npos);
  auto f = cli({"run", corpus("nounwind_violation")});
  CHECK(f.code == ehvm::cli::kFault);
  CHECK(f.out.find("outcome fault(nounwind-violation)\nfault nounwind-violation at @guarded") == 0);
}

TEST_CASE("explore") {
  auto r = cli({"explore", corpus("uncaught_dtor")});
  CHECK(r.code == ehvm::cli::kFault);
  CHECK(r.out.rfind("executions 2\noutcome fault(terminate) x2\ncounterexample terminate", 0) == 0);
  auto ok = cli({"explore", corpus("catch_loop")});
  CHECK(ok.code == ehvm::cli::kOk);
  CHECK(ok.out == "executions 1\noutcome halted(0) x1\n");
  auto fi = cli({"explore", "--fault-injection", (kSource / "tests/programs/fault_injection_three.ehir").string()});
  CHECK(fi.out == "executions 8\noutcome halted(0) x8\n");
  auto bound = cli({"explore", "--fault-injection", "--max-exec", "3",
                    (kSource / "tests/programs/fault_injection_three.ehir").string()});
  CHECK(bound.code == ehvm::cli::kBoundExhausted);
  CHECK(bound.out.find("bound exhausted after 3 executions") != std::string::npos);
}

TEST_CASE("counterexample trace replays") {
  auto trace = scratch("choose.trace");
  auto r = cli({"explore", "--trace-out", trace.string(), corpus("choose_throw")});
  CHECK(r.code == ehvm::cli::kFault);
  CHECK(read(trace) == "0 3 2\n1 2 0\n");
  auto replay = cli({"run", "--replay", trace.string(), corpus("choose_throw")});
  CHECK(replay.code == ehvm::cli::kFault);
  CHECK(replay.out.rfind("outcome fault(terminate)", 0) == 0);
  auto mismatch = cli({"run", "--replay", trace.string(), corpus("catch_basic")});
  CHECK(mismatch.code == ehvm::cli::kUsage);
  CHECK(mismatch.err.find("replay mismatch") != std::string::npos);
}

TEST_CASE("lsda dump matches the golden file") {
  auto golden = read(kSource / "tests/golden/lsda_dump_diamond_reverse_miss.txt");
  CHECK(cli({"lsda-dump", corpus("diamond_reverse_miss"), "main"}).out == golden);
  CHECK(cli({"lsda", "dump", corpus("diamond_reverse_miss"), "@main"}).out == golden);
  auto none = cli({"lsda-dump", corpus("catch_basic"), "thrower"});
  CHECK(none.code == ehvm::cli::kUsage);
}

TEST_CASE("pass, validate and fmt") {
  auto out = scratch("lowered.ehir");
  CHECK(cli({"pass", corpus("cleanup_only"), "-o", out.string()}).code == ehvm::cli::kOk);
  auto lowered = read(out);
  CHECK(lowered.find("global @__lsda.mid = [") != std::string::npos);
  CHECK(lowered.find("call @_Unwind_Resume(%l.exc)") != std::string::npos);
  auto v = cli({"validate", out.string()});
  CHECK(v.code == ehvm::cli::kOk);
  CHECK(v.out == out.string() + ": ok\n");
  CHECK(cli({"run", out.string(), "--no-pass"}).out == cli({"run", corpus("cleanup_only")}).out);
  CHECK(cli({"fmt", corpus("diamond")}).out == read(corpus("diamond")));
}

TEST_CASE("usage errors") {
  CHECK(cli({}).code == ehvm::cli::kUsage);
  CHECK(cli({"frobnicate"}).code == ehvm::cli::kUsage);
  auto missing = cli({"run", "/nonexistent.ehir"});
  CHECK(missing.code == ehvm::cli::kUsage);
  CHECK(missing.err.find("cannot open") != std::string::npos);
  auto bad = scratch("bad.ehir");
  std::ofstream(bad) << "fn @f() {\nentry:\n  ret 0\n}\n";
  auto invalid = cli({"validate", bad.string()});
  CHECK(invalid.code == ehvm::cli::kUsage);
  CHECK(invalid.err.find("missing @main") != std::string::npos);
  auto unparsable = scratch("unparsable.ehir");
  std::ofstream(unparsable) << "fn @main( {\n";
  auto p = cli({"run", unparsable.string()});
  CHECK(p.code == ehvm::cli::kUsage);
  CHECK(p.err.find(":1:") != std::string::npos);
}
