#include "domlearn/classifier.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace domlearn {

namespace {

const char* type_name(ValueType t) {
  switch (t) {
    case ValueType::Bool: return "bool";
    case ValueType::Num: return "number";
    case ValueType::Vec: return "vector";
    case ValueType::Obj: return "object";
  }
  return "?";
}

std::string number_text(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------- lexer

struct Token {
  enum Kind { Ident, Number, Op, End } kind = End;
  std::string text;
  double value = 0.0;
  std::size_t line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run(std::string& description) {
    std::vector<Token> out;
    bool leading = true;
    while (true) {
      skip_space();
      if (pos_ < src_.size() && src_[pos_] == '#') {
        std::size_t end = src_.find('\n', pos_);
        if (end == std::string_view::npos) end = src_.size();
        if (leading) {
          std::string_view c = src_.substr(pos_ + 1, end - pos_ - 1);
          while (!c.empty() && c.front() == ' ') c.remove_prefix(1);
          while (!c.empty() && (c.back() == ' ' || c.back() == '\r')) c.remove_suffix(1);
          if (!description.empty()) description += "\n";
          description += c;
        }
        advance(end - pos_);
        continue;
      }
      Token t;
      t.line = line_;
      t.col = col_;
      if (pos_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      leading = false;
      char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t n = 0;
        while (pos_ + n < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_ + n])) || src_[pos_ + n] == '_')) {
          ++n;
        }
        t.kind = Token::Ident;
        t.text = std::string(src_.substr(pos_, n));
        advance(n);
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        const char* b = src_.data() + pos_;
        const char* e = src_.data() + src_.size();
        auto r = std::from_chars(b, e, t.value);
        if (r.ec != std::errc()) throw SyntaxError("malformed number", line_, col_);
        t.kind = Token::Number;
        t.text = std::string(b, r.ptr);
        advance(static_cast<std::size_t>(r.ptr - b));
      } else {
        static const char* two[] = {"||", "&&", "<=", ">=", "==", "!=", ":="};
        std::string op;
        for (const char* o : two) {
          if (src_.substr(pos_, 2) == o) op = o;
        }
        if (op.empty()) {
          static const std::string singles = "!<>+-*/|(){}[],:=";
          if (singles.find(c) == std::string::npos) {
            throw SyntaxError(std::string("unexpected character '") + c + "'", line_, col_);
          }
          op = std::string(1, c);
        }
        t.kind = Token::Op;
        t.text = op;
        advance(op.size());
      }
      out.push_back(std::move(t));
    }
  }

 private:
  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance(1);
  }
  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos_ < src_.size(); ++i, ++pos_) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0, line_ = 1, col_ = 1;
};

// ------------------------------------------------------------- builtins

struct BuiltinSig {
  ValueType result;
  std::size_t width;
};

bool is_builtin(std::string_view name) {
  static const std::set<std::string, std::less<>> names = {
      "center", "orientation", "bbox",  "roll",     "pitch", "yaw", "top",  "bottom", "gripper_center",
      "gripper_closed", "surface_z", "robot", "table", "angle_diff", "abs", "sqrt", "min", "max",
      "dist",   "dist_xy",     "norm",  "x",        "y",     "z"};
  return names.count(name) > 0;
}

bool vec3_like(const Expr& e) { return e.type == ValueType::Obj || (e.type == ValueType::Vec && e.width >= 2); }

// Returns the result type or an error text.
std::optional<BuiltinSig> check_builtin(const std::string& name, const std::vector<ExprPtr>& a, std::string& why) {
  auto want = [&](std::size_t n) {
    if (a.size() != n) {
      why = name + " takes " + std::to_string(n) + " argument(s), got " + std::to_string(a.size());
      return false;
    }
    return true;
  };
  auto all = [&](ValueType t) {
    for (const auto& e : a) {
      if (e->type != t) {
        why = name + " expects " + type_name(t) + " arguments, got " + type_name(e->type);
        return false;
      }
    }
    return true;
  };
  if (name == "center" || name == "orientation") {
    if (want(1) && all(ValueType::Obj)) return BuiltinSig{ValueType::Vec, 3};
  } else if (name == "bbox") {
    if (want(1) && all(ValueType::Obj)) return BuiltinSig{ValueType::Vec, 6};
  } else if (name == "roll" || name == "pitch" || name == "yaw" || name == "top" || name == "bottom") {
    if (want(1) && all(ValueType::Obj)) return BuiltinSig{ValueType::Num, 0};
  } else if (name == "gripper_center" || name == "gripper_closed" || name == "surface_z") {
    if (a.size() > 1) {
      why = name + " takes at most 1 argument";
      return std::nullopt;
    }
    if (!all(ValueType::Obj)) return std::nullopt;
    if (name == "gripper_center") return BuiltinSig{ValueType::Vec, 3};
    if (name == "gripper_closed") return BuiltinSig{ValueType::Bool, 0};
    return BuiltinSig{ValueType::Num, 0};
  } else if (name == "robot" || name == "table") {
    if (want(0)) return BuiltinSig{ValueType::Obj, 0};
  } else if (name == "angle_diff" || name == "min" || name == "max") {
    if (want(2) && all(ValueType::Num)) return BuiltinSig{ValueType::Num, 0};
  } else if (name == "abs" || name == "sqrt") {
    if (want(1) && all(ValueType::Num)) return BuiltinSig{ValueType::Num, 0};
  } else if (name == "dist" || name == "dist_xy") {
    if (!want(2)) return std::nullopt;
    for (const auto& e : a) {
      if (!vec3_like(*e)) {
        why = name + " expects objects or vectors";
        return std::nullopt;
      }
    }
    return BuiltinSig{ValueType::Num, 0};
  } else if (name == "norm") {
    if (want(1) && all(ValueType::Vec)) return BuiltinSig{ValueType::Num, 0};
  } else if (name == "x" || name == "y" || name == "z") {
    if (want(1) && all(ValueType::Vec)) {
      std::size_t need = name == "x" ? 1 : name == "y" ? 2 : 3;
      if (a[0]->width < need) {
        why = name + " needs a vector of length >= " + std::to_string(need);
        return std::nullopt;
      }
      return BuiltinSig{ValueType::Num, 0};
    }
  }
  return std::nullopt;
}

// --------------------------------------------------------------- parser

class Parser {
 public:
  Parser(std::vector<Token> toks, const ClassifierRegistry* reg) : toks_(std::move(toks)), reg_(reg) {
    // split_bars inserts at most one token per existing one; references to
    // consumed tokens must survive.
    toks_.reserve(toks_.size() * 2);
  }

  ClassifierProgram program(std::string description) {
    ClassifierProgram c;
    c.description = std::move(description);
    c_ = &c;
    c.predicate = ident("classifier name");
    expect("(");
    if (!peek_op(")")) {
      do {
        TypedVar v;
        const Token& at = cur();
        v.name = ident("parameter name");
        if (accept(":")) v.type = ident("parameter type");
        for (const auto& p : c.params) {
          if (p.name == v.name) throw SyntaxError("duplicate parameter '" + v.name + "'", at.line, at.col);
        }
        c.params.push_back(std::move(v));
      } while (accept(","));
    }
    expect(")");
    if (accept("{")) {
      if (!peek_op("}")) {
        do {
          HyperParam h;
          const Token& at = cur();
          h.name = ident("hyperparameter name");
          for (const auto& p : c.params) {
            if (p.name == h.name) throw SyntaxError("'" + h.name + "' is already a parameter", at.line, at.col);
          }
          if (c.find_hyper(h.name)) throw SyntaxError("duplicate hyperparameter '" + h.name + "'", at.line, at.col);
          expect("=");
          double sign = 1.0;
          if (accept("-")) sign = -1.0;
          if (cur().kind != Token::Number) fail("expected a number", {"<number>"});
          h.default_value = sign * take().value;
          if (!std::isfinite(h.default_value)) throw SyntaxError("non-finite default", at.line, at.col);
          if (cur().kind == Token::Ident) h.unit = take().text;
          c.hypers.push_back(std::move(h));
        } while (accept(","));
      }
      expect("}");
    }
    expect(":=");
    const Token& at = cur();
    c.body = expr();
    if (c.body->type != ValueType::Bool) {
      throw SyntaxError(std::string("body must be boolean, got ") + type_name(c.body->type), at.line, at.col);
    }
    if (cur().kind != Token::End) fail("unexpected trailing input", {"<end>"});
    return c;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  const Token& take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool peek_op(std::string_view op) const { return cur().kind == Token::Op && cur().text == op; }
  bool peek_word(std::string_view w) const { return cur().kind == Token::Ident && cur().text == w; }
  bool accept(std::string_view op) {
    if (!peek_op(op)) return false;
    take();
    return true;
  }
  // "||" where an absolute-value bar is expected is two bars.
  void split_bars() {
    if (!peek_op("||")) return;
    Token second = toks_[pos_];
    toks_[pos_].text = "|";
    second.text = "|";
    second.col += 1;
    toks_.insert(toks_.begin() + static_cast<std::ptrdiff_t>(pos_) + 1, second);
  }
  [[noreturn]] void fail(const std::string& msg, std::vector<std::string> expected = {}) const {
    std::string got = cur().kind == Token::End ? "end of input" : "'" + cur().text + "'";
    throw SyntaxError(msg + ", got " + got, cur().line, cur().col, std::move(expected));
  }
  void expect(std::string_view op) {
    if (!accept(op)) fail("expected '" + std::string(op) + "'", {std::string(op)});
  }
  std::string ident(const char* what) {
    if (cur().kind != Token::Ident) fail(std::string("expected ") + what, {"<identifier>"});
    return take().text;
  }
  [[noreturn]] void type_error(const Token& at, const std::string& msg) const {
    throw SyntaxError("type error: " + msg, at.line, at.col);
  }

  static ExprPtr make(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

  ExprPtr expr() { return disjunction(); }

  ExprPtr binary(std::string op, ExprPtr l, ExprPtr r, const Token& at) {
    Expr e;
    e.kind = Expr::Kind::Binary;
    e.name = op;
    if (op == "||" || op == "&&") {
      if (l->type != ValueType::Bool || r->type != ValueType::Bool) type_error(at, "'" + op + "' needs booleans");
      e.type = ValueType::Bool;
    } else if (op == "==" || op == "!=") {
      if (l->type != r->type || (l->type != ValueType::Num && l->type != ValueType::Bool)) {
        type_error(at, "'" + op + "' needs two numbers or two booleans");
      }
      e.type = ValueType::Bool;
    } else if (op == "<" || op == "<=" || op == ">" || op == ">=") {
      if (l->type != ValueType::Num || r->type != ValueType::Num) type_error(at, "'" + op + "' needs numbers");
      e.type = ValueType::Bool;
    } else if (op == "+" || op == "-") {
      if (l->type == ValueType::Num && r->type == ValueType::Num) {
        e.type = ValueType::Num;
      } else if (l->type == ValueType::Vec && r->type == ValueType::Vec && l->width == r->width) {
        e.type = ValueType::Vec;
        e.width = l->width;
      } else {
        type_error(at, "'" + op + "' needs two numbers or two vectors of equal length");
      }
    } else {  // * /
      if (l->type == ValueType::Num && r->type == ValueType::Num) {
        e.type = ValueType::Num;
      } else if (l->type == ValueType::Vec && r->type == ValueType::Num) {
        e.type = ValueType::Vec;
        e.width = l->width;
      } else if (op == "*" && l->type == ValueType::Num && r->type == ValueType::Vec) {
        e.type = ValueType::Vec;
        e.width = r->width;
      } else {
        type_error(at, "'" + op + "' needs numbers or a vector and a number");
      }
    }
    e.args = {std::move(l), std::move(r)};
    return make(std::move(e));
  }

  ExprPtr disjunction() {
    ExprPtr l = conjunction();
    while (peek_op("||") || peek_word("or")) {
      const Token& at = take();
      l = binary("||", l, conjunction(), at);
    }
    return l;
  }

  ExprPtr conjunction() {
    ExprPtr l = negation();
    while (peek_op("&&") || peek_word("and")) {
      const Token& at = take();
      l = binary("&&", l, negation(), at);
    }
    return l;
  }

  ExprPtr negation() {
    if (peek_op("!") || peek_word("not")) {
      const Token& at = take();
      ExprPtr x = negation();
      if (x->type != ValueType::Bool) type_error(at, "'!' needs a boolean");
      Expr e;
      e.kind = Expr::Kind::Unary;
      e.name = "!";
      e.type = ValueType::Bool;
      e.args = {x};
      return make(std::move(e));
    }
    return comparison();
  }

  ExprPtr comparison() {
    ExprPtr l = additive();
    for (const char* op : {"<=", ">=", "==", "!=", "<", ">"}) {
      if (peek_op(op)) {
        const Token& at = take();
        return binary(op, l, additive(), at);
      }
    }
    return l;
  }

  ExprPtr additive() {
    ExprPtr l = multiplicative();
    while (peek_op("+") || peek_op("-")) {
      const Token& at = take();
      l = binary(at.text, l, multiplicative(), at);
    }
    return l;
  }

  ExprPtr multiplicative() {
    ExprPtr l = unary();
    while (peek_op("*") || peek_op("/")) {
      const Token& at = take();
      l = binary(at.text, l, unary(), at);
    }
    return l;
  }

  ExprPtr unary() {
    if (peek_op("-")) {
      const Token& at = take();
      ExprPtr x = unary();
      if (x->type != ValueType::Num && x->type != ValueType::Vec) type_error(at, "unary '-' needs a number");
      Expr e;
      e.kind = Expr::Kind::Unary;
      e.name = "-";
      e.type = x->type;
      e.width = x->width;
      e.args = {x};
      return make(std::move(e));
    }
    return postfix();
  }

  ExprPtr postfix() {
    ExprPtr x = primary();
    while (peek_op("[")) {
      const Token& at = take();
      if (cur().kind != Token::Number) fail("expected an index", {"<integer>"});
      double v = take().value;
      expect("]");
      if (x->type != ValueType::Vec) type_error(at, "indexing needs a vector");
      if (v < 0 || v != std::floor(v) || v >= static_cast<double>(x->width)) {
        type_error(at, "index out of range for vector of length " + std::to_string(x->width));
      }
      Expr e;
      e.kind = Expr::Kind::Index;
      e.slot = static_cast<std::size_t>(v);
      e.type = ValueType::Num;
      e.args = {x};
      x = make(std::move(e));
    }
    return x;
  }

  std::vector<ExprPtr> call_args() {
    std::vector<ExprPtr> args;
    expect("(");
    if (!peek_op(")")) {
      do {
        args.push_back(expr());
      } while (accept(","));
    }
    expect(")");
    return args;
  }

  ExprPtr primary() {
    const Token& at = cur();
    if (at.kind == Token::Number) {
      Expr e;
      e.kind = Expr::Kind::Number;
      e.number = take().value;
      return make(std::move(e));
    }
    if (accept("(")) {
      ExprPtr x = expr();
      expect(")");
      return x;
    }
    split_bars();
    if (accept("|")) {
      ExprPtr x = additive();
      split_bars();
      expect("|");
      if (x->type != ValueType::Num) type_error(at, "|...| needs a number");
      Expr e;
      e.kind = Expr::Kind::Abs;
      e.args = {x};
      return make(std::move(e));
    }
    if (accept("[")) {
      Expr e;
      e.kind = Expr::Kind::Vector;
      e.type = ValueType::Vec;
      do {
        ExprPtr x = expr();
        if (x->type != ValueType::Num) type_error(at, "vector elements must be numbers");
        e.args.push_back(x);
      } while (accept(","));
      expect("]");
      if (e.args.size() > 6) type_error(at, "vectors hold at most 6 elements");
      e.width = e.args.size();
      return make(std::move(e));
    }
    if (at.kind != Token::Ident) fail("expected an expression", {"<expression>"});
    std::string name = take().text;
    if (name == "true" || name == "false") {
      Expr e;
      e.kind = Expr::Kind::Boolean;
      e.type = ValueType::Bool;
      e.boolean = name == "true";
      return make(std::move(e));
    }
    if (peek_op("(")) {
      std::vector<ExprPtr> args = call_args();
      Expr e;
      e.name = name;
      e.args = std::move(args);
      if (is_builtin(name)) {
        std::string why;
        auto sig = check_builtin(name, e.args, why);
        if (!sig) type_error(at, why);
        e.kind = Expr::Kind::Builtin;
        e.type = sig->result;
        e.width = sig->width;
        return make(std::move(e));
      }
      if (name == c_->predicate) throw CyclicReference("classifier '" + name + "' calls itself");
      const ClassifierRegistry::Entry* callee = reg_ ? reg_->find(name) : nullptr;
      if (!callee) throw UnknownAccessor("unknown function or classifier '" + name + "'");
      if (reg_->depends_on(name, c_->predicate)) {
        throw CyclicReference("calling '" + name + "' from '" + c_->predicate + "' forms a cycle");
      }
      if (e.args.size() != callee->program.params.size()) {
        type_error(at, "'" + name + "' takes " + std::to_string(callee->program.params.size()) + " argument(s)");
      }
      for (const auto& x : e.args) {
        if (x->type != ValueType::Obj) type_error(at, "classifier arguments must be objects");
      }
      e.kind = Expr::Kind::Classifier;
      e.type = ValueType::Bool;
      c_->dependencies.insert(name);
      return make(std::move(e));
    }
    for (std::size_t i = 0; i < c_->params.size(); ++i) {
      if (c_->params[i].name == name) {
        Expr e;
        e.kind = Expr::Kind::Param;
        e.name = name;
        e.slot = i;
        e.type = ValueType::Obj;
        return make(std::move(e));
      }
    }
    if (c_->find_hyper(name)) {
      Expr e;
      e.kind = Expr::Kind::Hyper;
      e.name = name;
      e.type = ValueType::Num;
      return make(std::move(e));
    }
    throw UnknownAccessor("unknown name '" + name + "' at " + std::to_string(at.line) + ":" +
                          std::to_string(at.col));
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const ClassifierRegistry* reg_;
  ClassifierProgram* c_ = nullptr;
};

// -------------------------------------------------------------- printer

int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Binary:
      if (e.name == "||") return 1;
      if (e.name == "&&") return 2;
      if (e.name == "+" || e.name == "-") return 5;
      if (e.name == "*" || e.name == "/") return 6;
      return 4;
    case Expr::Kind::Unary: return e.name == "!" ? 3 : 7;
    case Expr::Kind::Index: return 8;
    default: return 9;
  }
}

void print_into(const Expr& e, int min_prec, std::string& out) {
  bool paren = precedence(e) < min_prec;
  if (paren) out += "(";
  switch (e.kind) {
    case Expr::Kind::Number:
      if (e.number < 0) {
        out += "(" + number_text(e.number) + ")";
      } else {
        out += number_text(e.number);
      }
      break;
    case Expr::Kind::Boolean: out += e.boolean ? "true" : "false"; break;
    case Expr::Kind::Param:
    case Expr::Kind::Hyper: out += e.name; break;
    case Expr::Kind::Builtin:
    case Expr::Kind::Classifier:
      out += e.name + "(";
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        print_into(*e.args[i], 0, out);
      }
      out += ")";
      break;
    case Expr::Kind::Unary:
      out += e.name;
      print_into(*e.args[0], e.name == "!" ? 8 : 7, out);
      break;
    case Expr::Kind::Binary: {
      int p = precedence(e);
      print_into(*e.args[0], p == 4 ? 5 : p, out);
      out += " " + e.name + " ";
      print_into(*e.args[1], p == 4 ? 5 : p + 1, out);
      break;
    }
    case Expr::Kind::Abs:
      out += "|";
      print_into(*e.args[0], 5, out);
      out += "|";
      break;
    case Expr::Kind::Index:
      print_into(*e.args[0], 8, out);
      out += "[" + std::to_string(e.slot) + "]";
      break;
    case Expr::Kind::Vector:
      out += "[";
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        print_into(*e.args[i], 0, out);
      }
      out += "]";
      break;
  }
  if (paren) out += ")";
}

// ------------------------------------------------------------ evaluator

struct Value {
  ValueType type = ValueType::Bool;
  bool b = false;
  double n = 0.0;
  std::array<double, 6> v{};
  std::size_t width = 0;
  std::string obj;
};

Value num(double x) {
  Value r;
  r.type = ValueType::Num;
  r.n = x;
  return r;
}

Value boolean(bool x) {
  Value r;
  r.type = ValueType::Bool;
  r.b = x;
  return r;
}

Value vec(const double* p, std::size_t n) {
  Value r;
  r.type = ValueType::Vec;
  r.width = n;
  std::copy(p, p + n, r.v.begin());
  return r;
}

struct Ctx {
  const ClassifierProgram& program;
  const std::vector<std::string>& args;
  const HyperAssignment& theta;
  const WorldState& w;
  const ClassifierRegistry* reg;
  int depth;
};

struct ObjRef {
  const Part* part = nullptr;
  const RobotState* robot = nullptr;
  const TableState* table = nullptr;
};

ObjRef resolve(const WorldState& w, const std::string& name) {
  ObjRef r;
  if ((r.part = w.find_part(name))) return r;
  if (w.robot && w.robot->name == name) {
    r.robot = &*w.robot;
    return r;
  }
  if (w.table && w.table->name == name) {
    r.table = &*w.table;
    return r;
  }
  throw MissingObject("object '" + name + "' is not in the scene");
}

[[noreturn]] void domain_error(const std::string& fn, const std::string& obj, const char* need) {
  throw NumericDomainError(fn + "(" + obj + "): " + obj + " is not a " + need);
}

const Part& need_part(const WorldState& w, const std::string& fn, const std::string& obj) {
  ObjRef r = resolve(w, obj);
  if (!r.part) domain_error(fn, obj, "part");
  return *r.part;
}

const RobotState& need_robot(const WorldState& w, const std::string& fn, const Value* arg) {
  if (!arg) {
    if (!w.robot) throw MissingObject(fn + "(): the scene has no robot");
    return *w.robot;
  }
  ObjRef r = resolve(w, arg->obj);
  if (!r.robot) domain_error(fn, arg->obj, "robot");
  return *r.robot;
}

const TableState& need_table(const WorldState& w, const std::string& fn, const Value* arg) {
  if (!arg) {
    if (!w.table) throw MissingObject(fn + "(): the scene has no table");
    return *w.table;
  }
  ObjRef r = resolve(w, arg->obj);
  if (!r.table) domain_error(fn, arg->obj, "table");
  return *r.table;
}

Vec3 position(const WorldState& w, const Value& x, const std::string& fn) {
  if (x.type == ValueType::Vec) return {x.v[0], x.v[1], x.width > 2 ? x.v[2] : 0.0};
  ObjRef r = resolve(w, x.obj);
  if (r.part) return r.part->center;
  if (r.robot) return r.robot->gripper_center;
  domain_error(fn, x.obj, "part or robot");
}

double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericDomainError(std::string(what) + " produced a non-finite value");
  return v;
}

Value eval(const Expr& e, const Ctx& c);

Value eval_builtin(const Expr& e, const Ctx& c) {
  std::vector<Value> a;
  a.reserve(e.args.size());
  for (const auto& x : e.args) a.push_back(eval(*x, c));
  const std::string& f = e.name;
  const WorldState& w = c.w;
  if (f == "center") {
    Vec3 p = position(w, a[0], f);
    return vec(p.data(), 3);
  }
  if (f == "orientation") return vec(need_part(w, f, a[0].obj).orientation.data(), 3);
  if (f == "bbox") return vec(need_part(w, f, a[0].obj).bbox.data(), 6);
  if (f == "roll") return num(need_part(w, f, a[0].obj).orientation[0]);
  if (f == "pitch") return num(need_part(w, f, a[0].obj).orientation[1]);
  if (f == "yaw") return num(need_part(w, f, a[0].obj).orientation[2]);
  if (f == "top" || f == "bottom") {
    ObjRef r = resolve(w, a[0].obj);
    if (r.table) return num(r.table->surface_z);
    if (!r.part) domain_error(f, a[0].obj, "part or table");
    return num(f == "top" ? r.part->top() : r.part->bottom());
  }
  if (f == "gripper_center") return vec(need_robot(w, f, a.empty() ? nullptr : &a[0]).gripper_center.data(), 3);
  if (f == "gripper_closed") return boolean(need_robot(w, f, a.empty() ? nullptr : &a[0]).gripper_closed);
  if (f == "surface_z") return num(need_table(w, f, a.empty() ? nullptr : &a[0]).surface_z);
  if (f == "robot" || f == "table") {
    Value r;
    r.type = ValueType::Obj;
    if (f == "robot") {
      if (!w.robot) throw MissingObject("robot(): the scene has no robot");
      r.obj = w.robot->name;
    } else {
      if (!w.table) throw MissingObject("table(): the scene has no table");
      r.obj = w.table->name;
    }
    return r;
  }
  if (f == "angle_diff") return num(angle_diff(a[0].n, a[1].n));
  if (f == "abs") return num(std::abs(a[0].n));
  if (f == "sqrt") {
    if (a[0].n < 0) throw NumericDomainError("sqrt of a negative number");
    return num(std::sqrt(a[0].n));
  }
  if (f == "min") return num(std::min(a[0].n, a[1].n));
  if (f == "max") return num(std::max(a[0].n, a[1].n));
  if (f == "dist" || f == "dist_xy") {
    Vec3 p = position(w, a[0], f), q = position(w, a[1], f);
    double dx = p[0] - q[0], dy = p[1] - q[1], dz = f == "dist" ? p[2] - q[2] : 0.0;
    return num(std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  if (f == "norm") {
    double s = 0;
    for (std::size_t i = 0; i < a[0].width; ++i) s += a[0].v[i] * a[0].v[i];
    return num(std::sqrt(s));
  }
  if (f == "x") return num(a[0].v[0]);
  if (f == "y") return num(a[0].v[1]);
  return num(a[0].v[2]);
}

Value eval(const Expr& e, const Ctx& c) {
  switch (e.kind) {
    case Expr::Kind::Number: return num(e.number);
    case Expr::Kind::Boolean: return boolean(e.boolean);
    case Expr::Kind::Param: {
      Value r;
      r.type = ValueType::Obj;
      r.obj = c.args[e.slot];
      return r;
    }
    case Expr::Kind::Hyper: {
      auto it = c.theta.find(e.name);
      if (it != c.theta.end()) return num(it->second);
      return num(c.program.find_hyper(e.name)->default_value);
    }
    case Expr::Kind::Builtin: return eval_builtin(e, c);
    case Expr::Kind::Classifier: {
      const ClassifierRegistry::Entry* callee = c.reg ? c.reg->find(e.name) : nullptr;
      if (!callee) throw UnknownAccessor("classifier '" + e.name + "' is not registered");
      if (c.depth > 64) throw CyclicReference("classifier call depth exceeded at '" + e.name + "'");
      std::vector<std::string> args;
      for (const auto& x : e.args) args.push_back(eval(*x, c).obj);
      Ctx sub{callee->program, args, callee->theta, c.w, c.reg, c.depth + 1};
      return eval(*callee->program.body, sub);
    }
    case Expr::Kind::Unary: {
      Value x = eval(*e.args[0], c);
      if (e.name == "!") return boolean(!x.b);
      if (x.type == ValueType::Num) return num(-x.n);
      for (std::size_t i = 0; i < x.width; ++i) x.v[i] = -x.v[i];
      return x;
    }
    case Expr::Kind::Binary: {
      const std::string& op = e.name;
      if (op == "||") return boolean(eval(*e.args[0], c).b || eval(*e.args[1], c).b);
      if (op == "&&") return boolean(eval(*e.args[0], c).b && eval(*e.args[1], c).b);
      Value l = eval(*e.args[0], c), r = eval(*e.args[1], c);
      if (op == "==") return boolean(l.type == ValueType::Bool ? l.b == r.b : l.n == r.n);
      if (op == "!=") return boolean(l.type == ValueType::Bool ? l.b != r.b : l.n != r.n);
      if (op == "<") return boolean(l.n < r.n);
      if (op == "<=") return boolean(l.n <= r.n);
      if (op == ">") return boolean(l.n > r.n);
      if (op == ">=") return boolean(l.n >= r.n);
      if (l.type == ValueType::Num && r.type == ValueType::Num) {
        if (op == "+") return num(l.n + r.n);
        if (op == "-") return num(l.n - r.n);
        if (op == "*") return num(l.n * r.n);
        if (r.n == 0.0) throw NumericDomainError("division by zero");
        return num(l.n / r.n);
      }
      if (l.type == ValueType::Vec && r.type == ValueType::Vec) {
        for (std::size_t i = 0; i < l.width; ++i) l.v[i] = op == "+" ? l.v[i] + r.v[i] : l.v[i] - r.v[i];
        return l;
      }
      Value v = l.type == ValueType::Vec ? l : r;
      double s = l.type == ValueType::Vec ? r.n : l.n;
      if (op == "/" && s == 0.0) throw NumericDomainError("division by zero");
      for (std::size_t i = 0; i < v.width; ++i) v.v[i] = op == "*" ? v.v[i] * s : v.v[i] / s;
      return v;
    }
    case Expr::Kind::Abs: return num(std::abs(eval(*e.args[0], c).n));
    case Expr::Kind::Index: return num(eval(*e.args[0], c).v[e.slot]);
    case Expr::Kind::Vector: {
      Value r;
      r.type = ValueType::Vec;
      r.width = e.args.size();
      for (std::size_t i = 0; i < r.width; ++i) r.v[i] = checked(eval(*e.args[i], c).n, "vector element");
      return r;
    }
  }
  return boolean(false);
}

}  // namespace

HyperAssignment ClassifierProgram::defaults() const {
  HyperAssignment t;
  for (const auto& h : hypers) t[h.name] = h.default_value;
  return t;
}

const HyperParam* ClassifierProgram::find_hyper(std::string_view name) const {
  for (const auto& h : hypers) {
    if (h.name == name) return &h;
  }
  return nullptr;
}

ClassifierProgram parse_classifier(std::string_view text, const ClassifierRegistry* registry) {
  std::string description;
  std::vector<Token> toks = Lexer(text).run(description);
  return Parser(std::move(toks), registry).program(std::move(description));
}

std::string print_expr(const Expr& e) {
  std::string out;
  print_into(e, 0, out);
  return out;
}

std::string print_classifier(const ClassifierProgram& c) {
  std::string out;
  if (!c.description.empty()) {
    std::istringstream in(c.description);
    std::string line;
    while (std::getline(in, line)) out += "# " + line + "\n";
  }
  out += c.predicate + "(";
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    if (i) out += ", ";
    out += c.params[i].name;
    if (c.params[i].type != kRootType) out += ": " + c.params[i].type;
  }
  out += ")";
  if (!c.hypers.empty()) {
    out += "{";
    for (std::size_t i = 0; i < c.hypers.size(); ++i) {
      if (i) out += ", ";
      out += c.hypers[i].name + "=" + number_text(c.hypers[i].default_value);
      if (!c.hypers[i].unit.empty()) out += " " + c.hypers[i].unit;
    }
    out += "}";
  }
  out += " := " + print_expr(*c.body) + "\n";
  return out;
}

std::string dsl_reference() {
  return R"(Classifier programs have the form
  name(arg1: type, arg2: type){hyper=default unit, ...} := <boolean expression>
Objects: the predicate arguments, robot(), table().
Part accessors: center(p) [x,y,z], orientation(p) [roll,pitch,yaw] in radians,
  bbox(p) [x_min,y_min,z_min,x_max,y_max,z_max], roll(p), pitch(p), yaw(p),
  top(p) (z_max), bottom(p) (z_min).
Robot accessors: gripper_center(r) [x,y,z] of the midpoint between the jaws,
  gripper_closed(r). center(r) is the gripper center.
Table accessors: surface_z(t); top(t) is the surface height.
Functions: angle_diff(a, b) minimal angle difference, abs, sqrt, min, max,
  dist(a, b), dist_xy(a, b) on objects or vectors, norm(v), x(v), y(v), z(v).
Operators: || && ! or and not, < <= > >= == !=, + - * /, |e| absolute value,
  v[i] indexing, [a, b, c] vectors.
Already defined classifiers may be called by name with object arguments.
Every tolerance must be a hyperparameter with a default value.
)";
}

double angle_diff(double a, double b) {
  constexpr double pi = 3.14159265358979323846;
  double d = a - b + pi;
  d -= 2 * pi * std::floor(d / (2 * pi));
  return d - pi;
}

bool eval_classifier(const ClassifierProgram& c, const GroundAtom& atom, const WorldState& w,
                     const HyperAssignment& theta, const ClassifierRegistry* registry) {
  if (atom.args.size() != c.params.size()) {
    throw ArityMismatch(c.predicate + " takes " + std::to_string(c.params.size()) + " argument(s), got " +
                        std::to_string(atom.args.size()));
  }
  for (const auto& a : atom.args) resolve(w, a);
  Ctx ctx{c, atom.args, theta, w, registry, 0};
  return eval(*c.body, ctx).b;
}

std::string object_kind(const WorldState& w, std::string_view name) {
  if (w.find_part(name)) return "part";
  if (w.robot && w.robot->name == name) return "robot";
  if (w.table && w.table->name == name) return "table";
  return "";
}

std::vector<GroundAtom> candidate_atoms(const ClassifierProgram& c, const WorldState& w) {
  std::vector<std::string> objects;
  if (w.robot) objects.push_back(w.robot->name);
  if (w.table) objects.push_back(w.table->name);
  for (const auto& p : w.parts) objects.push_back(p.name);
  std::sort(objects.begin(), objects.end());
  std::vector<std::vector<std::string>> domains;
  for (const auto& p : c.params) {
    std::vector<std::string> d;
    for (const auto& o : objects) {
      if (p.type == kRootType || p.type.empty() || object_kind(w, o) == p.type) d.push_back(o);
    }
    domains.push_back(std::move(d));
  }
  std::vector<GroundAtom> out;
  std::vector<std::string> cur;
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == domains.size()) {
      out.push_back({c.predicate, cur});
      return;
    }
    for (const auto& o : domains[i]) {
      if (std::find(cur.begin(), cur.end(), o) != cur.end()) continue;
      cur.push_back(o);
      self(self, i + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

namespace {

void check_theta(const ClassifierProgram& p, const HyperAssignment& theta) {
  if (theta.size() != p.hypers.size()) {
    throw Error("hyperparameter assignment for " + p.predicate + " must cover exactly its " +
                std::to_string(p.hypers.size()) + " hyperparameter(s)");
  }
  for (const auto& [k, v] : theta) {
    if (!p.find_hyper(k)) throw Error("'" + k + "' is not a hyperparameter of " + p.predicate);
    if (!std::isfinite(v)) throw Error("hyperparameter '" + k + "' must be finite");
  }
}

}  // namespace

void ClassifierRegistry::put(ClassifierProgram program, std::optional<HyperAssignment> theta) {
  for (const auto& d : program.dependencies) {
    if (d == program.predicate || depends_on(d, program.predicate)) {
      throw CyclicReference("registering '" + program.predicate + "' would form a cycle through '" + d + "'");
    }
    if (!contains(d)) throw UnknownAccessor("classifier '" + d + "' is not registered");
  }
  HyperAssignment t = theta ? *theta : program.defaults();
  check_theta(program, t);
  std::string name = program.predicate;
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    order_.push_back(name);
    entries_.emplace(name, Entry{std::move(program), std::move(t)});
  } else {
    it->second = Entry{std::move(program), std::move(t)};
  }
}

void ClassifierRegistry::set_theta(std::string_view predicate, HyperAssignment theta) {
  auto it = entries_.find(predicate);
  if (it == entries_.end()) throw UnknownPredicate("no classifier for '" + std::string(predicate) + "'");
  check_theta(it->second.program, theta);
  it->second.theta = std::move(theta);
}

bool ClassifierRegistry::erase(std::string_view predicate) {
  auto it = entries_.find(predicate);
  if (it == entries_.end()) return false;
  for (const auto& [name, e] : entries_) {
    if (e.program.dependencies.count(std::string(predicate))) return false;
  }
  entries_.erase(it);
  order_.erase(std::find(order_.begin(), order_.end(), predicate));
  return true;
}

const ClassifierRegistry::Entry* ClassifierRegistry::find(std::string_view predicate) const {
  auto it = entries_.find(predicate);
  return it == entries_.end() ? nullptr : &it->second;
}

bool ClassifierRegistry::depends_on(std::string_view from, std::string_view to) const {
  std::vector<std::string> stack{std::string(from)};
  std::set<std::string> seen;
  while (!stack.empty()) {
    std::string n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    const Entry* e = find(n);
    if (!e) continue;
    for (const auto& d : e->program.dependencies) {
      if (d == to) return true;
      stack.push_back(d);
    }
  }
  return false;
}

bool ClassifierRegistry::evaluate(const GroundAtom& atom, const WorldState& w) const {
  const Entry* e = find(atom.predicate);
  if (!e) throw UnknownPredicate("no classifier for '" + atom.predicate + "'");
  return eval_classifier(e->program, atom, w, e->theta, this);
}

SymbolicState ClassifierRegistry::ground(const WorldState& w, const std::set<std::string>& predicates) const {
  SymbolicState s;
  for (const auto& name : order_) {
    if (!predicates.empty() && !predicates.count(name)) continue;
    const Entry& e = entries_.find(name)->second;
    for (const auto& atom : candidate_atoms(e.program, w)) {
      try {
        if (eval_classifier(e.program, atom, w, e.theta, this)) s.insert(atom);
      } catch (const NumericDomainError&) {
        // Accessor does not apply to this binding: the atom is false.
      }
    }
  }
  return s;
}

void ClassifierRegistry::save(const std::string& directory) const {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  nlohmann::json manifest;
  manifest["order"] = order_;
  manifest["theta"] = nlohmann::json::object();
  for (const auto& name : order_) {
    const Entry& e = entries_.find(name)->second;
    std::ofstream(fs::path(directory) / (name + ".cls")) << print_classifier(e.program);
    manifest["theta"][name] = e.theta;
  }
  std::ofstream(fs::path(directory) / "manifest.json") << manifest.dump(2) << "\n";
}

ClassifierRegistry ClassifierRegistry::load(const std::string& directory) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(directory) / "manifest.json");
  if (!mf) throw Error("cannot read " + (fs::path(directory) / "manifest.json").string());
  nlohmann::json manifest = nlohmann::json::parse(mf);
  ClassifierRegistry reg;
  for (const auto& name : manifest.at("order")) {
    fs::path file = fs::path(directory) / (name.get<std::string>() + ".cls");
    std::ifstream in(file);
    if (!in) throw Error("cannot read " + file.string());
    std::stringstream text;
    text << in.rdbuf();
    ClassifierProgram p = parse_classifier(text.str(), &reg);
    std::optional<HyperAssignment> theta;
    if (manifest.contains("theta") && manifest["theta"].contains(name.get<std::string>())) {
      theta = manifest["theta"][name.get<std::string>()].get<HyperAssignment>();
    }
    reg.put(std::move(p), theta);
  }
  return reg;
}

}  // namespace domlearn
