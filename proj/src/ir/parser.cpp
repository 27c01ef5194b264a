#include <cctype>
#include <charconv>
#include <string>
#include <vector>

#include "ehvm/builtins.hpp"
#include "ehvm/ir.hpp"

namespace ehvm::ir {

namespace {

enum class Tok { Global, Local, Ident, Int, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;  // sigil stripped for Global/Local
  int64_t value = 0;
  char punct = 0;
  SourceLoc loc;
};

bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.loc = {line_, col_};
      if (pos_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      char c = src_[pos_];
      if (c == '@') {
        advance();
        t.kind = Tok::Global;
        while (pos_ < src_.size() && (is_ident_char(src_[pos_]) || src_[pos_] == '.' ||
                                      src_[pos_] == '$'))
          t.text += advance();
        if (t.text.empty()) throw ParseError(t.loc, "expected name after '@'");
      } else if (c == '%') {
        advance();
        t.kind = Tok::Local;
        while (pos_ < src_.size() && (is_ident_char(src_[pos_]) || src_[pos_] == '.'))
          t.text += advance();
        if (t.text.empty()) throw ParseError(t.loc, "expected name after '%'");
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '-' && pos_ + 1 < src_.size() &&
                  std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        t.kind = Tok::Int;
        std::string digits;
        digits += advance();
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
          digits += advance();
        auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), t.value);
        if (ec != std::errc{}) throw ParseError(t.loc, "integer literal out of range");
        t.text = digits;
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.kind = Tok::Ident;
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) t.text += advance();
      } else if (std::string_view("(){}[],:=").find(c) != std::string_view::npos) {
        t.kind = Tok::Punct;
        t.punct = advance();
        t.text = std::string(1, t.punct);
      } else {
        throw ParseError(t.loc, std::string("unexpected character '") + c + "'");
      }
      out.push_back(std::move(t));
    }
  }

 private:
  char advance() {
    char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ';') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Module run() {
    Module m;
    while (peek().kind != Tok::End) {
      const Token& t = peek();
      if (is_ident("typeinfo")) {
        parse_typeinfo(m);
      } else if (is_ident("global")) {
        parse_global(m);
      } else if (is_ident("fn")) {
        m.functions.push_back(parse_function());
      } else {
        throw ParseError(t.loc, "expected 'typeinfo', 'global' or 'fn', found '" + t.text + "'");
      }
    }
    check_duplicates(m);
    check_references(m);
    return m;
  }

 private:
  const Token& peek(size_t ahead = 0) const {
    size_t i = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[i];
  }
  Token next() {
    Token t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }
  bool is_ident(std::string_view word, size_t ahead = 0) const {
    return peek(ahead).kind == Tok::Ident && peek(ahead).text == word;
  }
  bool is_punct(char c, size_t ahead = 0) const {
    return peek(ahead).kind == Tok::Punct && peek(ahead).punct == c;
  }
  [[noreturn]] void fail(const std::string& what) const {
    const Token& t = peek();
    std::string found = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
    throw ParseError(t.loc, "expected " + what + ", found " + found);
  }
  void expect_punct(char c) {
    if (!is_punct(c)) fail(std::string("'") + c + "'");
    next();
  }
  void expect_ident(std::string_view word) {
    if (!is_ident(word)) fail("'" + std::string(word) + "'");
    next();
  }
  std::string expect_global() {
    if (peek().kind != Tok::Global) fail("@name");
    return next().text;
  }
  std::string expect_label() {
    if (peek().kind != Tok::Local || peek().text.find('.') != std::string::npos) fail("%label");
    return next().text;
  }
  std::string expect_register() { return expect_label(); }
  int64_t expect_int() {
    if (peek().kind != Tok::Int) fail("integer");
    return next().value;
  }

  void parse_typeinfo(Module& m) {
    next();
    TypeInfoDecl d;
    d.name = expect_global();
    if (is_punct(':')) {
      next();
      d.bases.push_back(expect_global());
      while (is_punct(',')) {
        next();
        d.bases.push_back(expect_global());
      }
    }
    m.typeinfos.entries.push_back(std::move(d));
  }

  void parse_global(Module& m) {
    next();
    Global g;
    g.name = expect_global();
    expect_punct('=');
    expect_punct('[');
    if (!is_punct(']')) {
      g.cells.push_back(expect_int());
      while (is_punct(',')) {
        next();
        g.cells.push_back(expect_int());
      }
    }
    expect_punct(']');
    m.globals.push_back(std::move(g));
  }

  Function parse_function() {
    Function f;
    f.loc = next().loc;
    f.name = expect_global();
    expect_punct('(');
    if (!is_punct(')')) {
      f.params.push_back(expect_register());
      while (is_punct(',')) {
        next();
        f.params.push_back(expect_register());
      }
    }
    expect_punct(')');
    if (is_ident("nounwind")) {
      next();
      f.nounwind = true;
    }
    if (is_ident("personality")) {
      next();
      f.personality = expect_global();
    }
    if (is_ident("lsda")) {
      next();
      f.lsda_ref = expect_global();
    }
    expect_punct('{');
    while (!is_punct('}')) {
      if (!(peek().kind == Tok::Ident && is_punct(':', 1))) fail("block label");
      Block b;
      b.label = next().text;
      next();
      while (!is_punct('}') && !(peek().kind == Tok::Ident && is_punct(':', 1)))
        b.insts.push_back(parse_instruction());
      f.blocks.push_back(std::move(b));
    }
    if (f.blocks.empty()) fail("at least one block");
    next();
    return f;
  }

  Operand parse_operand() {
    const Token& t = peek();
    if (t.kind == Tok::Int) return Operand::constant(next().value);
    if (t.kind == Tok::Global) return Operand::sym(next().text);
    if (t.kind == Tok::Local) {
      std::string text = next().text;
      auto dot = text.find('.');
      if (dot == std::string::npos) return Operand::reg(text);
      std::string suffix = text.substr(dot + 1);
      text.resize(dot);
      if (suffix == "exc") return Operand::reg(text, Operand::Part::Exc);
      if (suffix == "sel") return Operand::reg(text, Operand::Part::Sel);
      throw ParseError(t.loc, "unknown projection '." + suffix + "'");
    }
    fail("operand");
  }

  std::vector<Operand> parse_operand_list(size_t n) {
    std::vector<Operand> ops;
    for (size_t i = 0; i < n; ++i) {
      if (i) expect_punct(',');
      ops.push_back(parse_operand());
    }
    return ops;
  }

  void parse_call_args(Instruction& inst) {
    inst.callee = expect_global();
    expect_punct('(');
    if (!is_punct(')')) {
      inst.operands.push_back(parse_operand());
      while (is_punct(',')) {
        next();
        inst.operands.push_back(parse_operand());
      }
    }
    expect_punct(')');
  }

  std::vector<Clause> parse_clauses() {
    std::vector<Clause> out;
    for (;;) {
      Clause c;
      if (is_ident("catch")) {
        next();
        c.kind = Clause::Kind::Catch;
        if (is_ident("any")) {
          next();
          c.catch_all = true;
        } else {
          c.types.push_back(expect_global());
        }
      } else if (is_ident("filter")) {
        next();
        c.kind = Clause::Kind::Filter;
        expect_punct('[');
        if (!is_punct(']')) {
          c.types.push_back(expect_global());
          while (is_punct(',')) {
            next();
            c.types.push_back(expect_global());
          }
        }
        expect_punct(']');
      } else if (is_ident("cleanup")) {
        next();
        c.kind = Clause::Kind::Cleanup;
      } else {
        break;
      }
      out.push_back(std::move(c));
    }
    if (out.empty()) fail("landingpad clause");
    return out;
  }

  bool at_operand_start() const {
    auto k = peek().kind;
    if (k == Tok::Int || k == Tok::Global) return true;
    // A '%x' directly followed by '=' starts the next instruction.
    return k == Tok::Local && !is_punct('=', 1);
  }

  Instruction parse_instruction() {
    Instruction inst;
    inst.loc = peek().loc;
    if (peek().kind == Tok::Local && is_punct('=', 1)) {
      inst.result = expect_register();
      next();
    }
    if (peek().kind != Tok::Ident) fail("opcode");
    Token optok = next();
    auto op = opcode_from_name(optok.text);
    if (!op) throw ParseError(optok.loc, "unknown opcode '" + optok.text + "'");
    inst.op = *op;
    switch (inst.op) {
      case Opcode::Alloca:
      case Opcode::Const:
        inst.operands.push_back(Operand::constant(expect_int()));
        break;
      case Opcode::Load:
      case Opcode::Resume:
        inst.operands = parse_operand_list(1);
        break;
      case Opcode::Store:
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Eq:
      case Opcode::Lt:
        inst.operands = parse_operand_list(2);
        break;
      case Opcode::Gep:
        inst.operands = parse_operand_list(1);
        expect_punct(',');
        inst.operands.push_back(Operand::constant(expect_int()));
        break;
      case Opcode::Br:
        inst.labels.push_back(expect_label());
        break;
      case Opcode::CondBr:
        inst.operands = parse_operand_list(1);
        expect_punct(',');
        inst.labels.push_back(expect_label());
        expect_punct(',');
        inst.labels.push_back(expect_label());
        break;
      case Opcode::Ret:
        if (at_operand_start()) inst.operands.push_back(parse_operand());
        break;
      case Opcode::Call:
        parse_call_args(inst);
        break;
      case Opcode::Invoke:
        parse_call_args(inst);
        expect_ident("to");
        inst.labels.push_back(expect_label());
        expect_ident("unwind");
        inst.labels.push_back(expect_label());
        break;
      case Opcode::LandingPad:
        inst.clauses = parse_clauses();
        break;
      case Opcode::Phi:
        do {
          if (!inst.labels.empty()) next();
          expect_punct('[');
          inst.operands.push_back(parse_operand());
          expect_punct(',');
          inst.labels.push_back(expect_label());
          expect_punct(']');
        } while (is_punct(','));
        break;
      case Opcode::Trap:
        break;
    }
    return inst;
  }

  void check_duplicates(const Module& m) const {
    std::vector<std::pair<std::string, SourceLoc>> seen;
    auto add = [&](const std::string& name, SourceLoc loc) {
      for (const auto& [n, l] : seen)
        if (n == name) throw ParseError(loc, "duplicate definition of '@" + name + "'");
      seen.emplace_back(name, loc);
    };
    for (const auto& t : m.typeinfos.entries) add(t.name, {});
    for (const auto& g : m.globals) add(g.name, {});
    for (const auto& f : m.functions) {
      add(f.name, f.loc);
      std::vector<std::string> labels;
      for (const auto& b : f.blocks) {
        for (const auto& l : labels)
          if (l == b.label)
            throw ParseError(f.loc, "duplicate block '%" + b.label + "' in @" + f.name);
        labels.push_back(b.label);
      }
    }
  }

  // Unresolved call targets and symbol operands are parse errors; typeinfo
  // base lists are left to validate() so partial hierarchies can be loaded.
  void check_references(const Module& m) const {
    auto defined = [&](const std::string& name) {
      return m.find_function(name) || m.find_global(name) || m.typeinfos.find(name);
    };
    for (const auto& f : m.functions) {
      if (f.personality && !m.find_function(*f.personality) && *f.personality != kPersonalityName)
        throw ParseError(f.loc, "unresolved personality '@" + *f.personality + "'");
      if (f.lsda_ref && !m.find_global(*f.lsda_ref))
        throw ParseError(f.loc, "unresolved lsda global '@" + *f.lsda_ref + "'");
      for (const auto& b : f.blocks) {
        for (const auto& inst : b.insts) {
          if ((inst.op == Opcode::Call || inst.op == Opcode::Invoke) &&
              !m.find_function(inst.callee) && !find_builtin(inst.callee))
            throw ParseError(inst.loc, "unresolved function '@" + inst.callee + "'");
          for (const auto& o : inst.operands)
            if (o.kind == Operand::Kind::Sym && !defined(o.name))
              throw ParseError(inst.loc, "unresolved symbol '@" + o.name + "'");
          for (const auto& c : inst.clauses)
            for (const auto& t : c.types)
              if (!m.typeinfos.find(t))
                throw ParseError(inst.loc, "unresolved typeinfo '@" + t + "'");
        }
      }
    }
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
};

}  // namespace

Module parse_module(std::string_view text) { return Parser(Lexer(text).run()).run(); }

}  // namespace ehvm::ir
