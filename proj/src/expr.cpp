#include "spechomog/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace spechomog::expr {

namespace {

enum Op : int {
  kConst,
  kVar,
  kNeg,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
  kSin,
  kCos,
  kExp,
  kLog,
  kSqrt,
  kAbs,
  kMin,
  kMax,
};

const char* function_name(int op) {
  switch (op) {
    case kSin: return "sin";
    case kCos: return "cos";
    case kExp: return "exp";
    case kLog: return "log";
    case kSqrt: return "sqrt";
    case kAbs: return "abs";
    case kMin: return "min";
    case kMax: return "max";
    default: return "?";
  }
}

int function_arity(int op) { return (op == kMin || op == kMax) ? 2 : 1; }

int lookup_function(std::string_view name) {
  static const std::pair<std::string_view, int> table[] = {
      {"sin", kSin}, {"cos", kCos},   {"exp", kExp}, {"log", kLog},
      {"sqrt", kSqrt}, {"abs", kAbs}, {"min", kMin}, {"max", kMax},
  };
  for (const auto& [n, op] : table)
    if (n == name) return op;
  return -1;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

struct Node {
  int op = kConst;
  double value = 0.0;
  int slot = -1;
  bool is_pi = false;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using NodePtr = std::shared_ptr<const Node>;

NodePtr make_const(double v, bool is_pi = false) {
  auto n = std::make_shared<Node>();
  n->op = kConst;
  n->value = v;
  n->is_pi = is_pi;
  return n;
}

NodePtr make_node(int op, NodePtr lhs, NodePtr rhs = nullptr) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

bool parse_variable(std::string_view id, int& slot, Family& family) {
  static const std::pair<std::string_view, Family> prefixes[] = {
      {"eta", Family::Eta}, {"xi", Family::Xi}, {"x", Family::X}, {"y", Family::Y}, {"z", Family::Z}};
  for (const auto& [prefix, fam] : prefixes) {
    if (id.size() == prefix.size() + 1 && id.substr(0, prefix.size()) == prefix) {
      const char c = id.back();
      if (c >= '1' && c <= '0' + kMaxDim) {
        family = fam;
        slot = slot_of(fam, c - '0');
        return true;
      }
    }
  }
  return false;
}

class Parser {
 public:
  Parser(std::string_view text, const ParseOptions& options) : text_(text), options_(options) {}

  NodePtr parse() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError(pos_, "empty expression");
    NodePtr e = expression();
    skip_ws();
    if (pos_ < text_.size()) throw ParseError(pos_, std::string("unexpected '") + text_[pos_] + "'");
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= text_.size()) throw ParseError(pos_, std::string("expected '") + c + "' before end of input");
      throw ParseError(pos_, std::string("expected '") + c + "'");
    }
  }

  NodePtr expression() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make_node(kAdd, lhs, term());
      } else if (accept('-')) {
        lhs = make_node(kSub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = make_node(kMul, lhs, unary());
      } else if (accept('/')) {
        lhs = make_node(kDiv, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return make_node(kNeg, unary());
    if (accept('+')) return unary();
    return power();
  }

  // ^ binds tighter than unary minus on its left and is right-associative.
  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make_node(kPow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError(pos_, "unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expression();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw ParseError(pos_, std::string("unexpected '") + c + "'");
  }

  NodePtr number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
      ++pos_;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        pos_ = p;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_) throw ParseError(start, "malformed number");
    return make_const(v);
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string_view id = text_.substr(start, pos_ - start);

    if (id == "pi") return make_const(std::numbers::pi, true);

    if (const int fn = lookup_function(id); fn >= 0) {
      expect('(');
      NodePtr a = expression();
      NodePtr b;
      if (function_arity(fn) == 2) {
        expect(',');
        b = expression();
      }
      expect(')');
      return make_node(fn, a, b);
    }

    int slot = -1;
    Family family{};
    if (parse_variable(id, slot, family) && (options_.families & (1u << static_cast<int>(family)))) {
      auto n = std::make_shared<Node>();
      n->op = kVar;
      n->slot = slot;
      return n;
    }
    throw UnknownIdentifier(start, std::string(id));
  }

  std::string_view text_;
  ParseOptions options_;
  std::size_t pos_ = 0;
};

void print_node(const Node& n, std::string& out) {
  switch (n.op) {
    case kConst:
      if (n.is_pi) {
        out += "pi";
      } else if (n.value < 0) {
        out += "(" + format_number(n.value) + ")";
      } else {
        out += format_number(n.value);
      }
      return;
    case kVar: out += slot_name(n.slot); return;
    case kNeg:
      out += "(-";
      print_node(*n.lhs, out);
      out += ")";
      return;
    case kAdd:
    case kSub:
    case kMul:
    case kDiv:
    case kPow: {
      static const char sym[] = {0, 0, 0, '+', '-', '*', '/', '^'};
      out += "(";
      print_node(*n.lhs, out);
      out += ' ';
      out += sym[n.op];
      out += ' ';
      print_node(*n.rhs, out);
      out += ")";
      return;
    }
    default:
      out += function_name(n.op);
      out += "(";
      print_node(*n.lhs, out);
      if (n.rhs) {
        out += ", ";
        print_node(*n.rhs, out);
      }
      out += ")";
  }
}

std::string print_subtree(const Node* n) {
  std::string s;
  print_node(*n, s);
  return s;
}

void emit(const Node* n, std::vector<const Node*>& out) {
  if (n->lhs) emit(n->lhs.get(), out);
  if (n->rhs) emit(n->rhs.get(), out);
  out.push_back(n);
}

}  // namespace

std::string slot_name(int slot) {
  static const char* names[] = {"x", "y", "xi", "eta", "z"};
  return std::string(names[slot / kMaxDim]) + std::to_string(slot % kMaxDim + 1);
}

Expression::Expression() : root_(make_const(0.0)), source_("0") { compile(); }

Expression Expression::parse(std::string_view text, const ParseOptions& options) {
  Expression e;
  e.root_ = Parser(text, options).parse();
  e.source_ = std::string(text);
  e.compile();
  return e;
}

Expression Expression::constant(double value) {
  Expression e;
  e.root_ = make_const(value);
  e.source_ = format_number(value);
  e.compile();
  return e;
}

void Expression::compile() {
  program_nodes_.clear();
  emit(root_.get(), program_nodes_);
  program_.clear();
  std::set<int> used;
  std::size_t depth = 0;
  max_stack_ = 0;
  for (const Node* n : program_nodes_) {
    program_.push_back({n->op, n->slot, n->value});
    if (n->op == kConst || n->op == kVar) {
      ++depth;
      if (n->op == kVar) used.insert(n->slot);
    } else if (n->rhs) {
      --depth;
    }
    max_stack_ = std::max(max_stack_, depth);
  }
  used_slots_.assign(used.begin(), used.end());
}

double Expression::evaluate(const Slots& slots) const {
  // Expressions from config files are small; a fixed stack covers them and
  // the heap path handles anything deeper.
  constexpr std::size_t kInline = 64;
  double inline_stack[kInline] = {};
  std::vector<double> heap_stack;
  double* stack = inline_stack;
  if (max_stack_ > kInline) {
    heap_stack.resize(max_stack_);
    stack = heap_stack.data();
  }
  std::size_t top = 0;
  for (std::size_t k = 0; k < program_.size(); ++k) {
    const Instr& in = program_[k];
    switch (in.op) {
      case kConst: stack[top++] = in.value; break;
      case kVar: stack[top++] = slots[in.slot]; break;
      case kNeg: stack[top - 1] = -stack[top - 1]; break;
      case kAdd: --top; stack[top - 1] += stack[top]; break;
      case kSub: --top; stack[top - 1] -= stack[top]; break;
      case kMul: --top; stack[top - 1] *= stack[top]; break;
      case kDiv:
        --top;
        if (stack[top] == 0.0) throw DomainError("division by zero", print_subtree(program_nodes_[k]));
        stack[top - 1] /= stack[top];
        break;
      case kPow: {
        --top;
        const double b = stack[top - 1], e = stack[top];
        if (b < 0.0 && e != std::trunc(e))
          throw DomainError("negative base with non-integer exponent", print_subtree(program_nodes_[k]));
        if (b == 0.0 && e < 0.0) throw DomainError("division by zero", print_subtree(program_nodes_[k]));
        stack[top - 1] = std::pow(b, e);
        break;
      }
      case kSin: stack[top - 1] = std::sin(stack[top - 1]); break;
      case kCos: stack[top - 1] = std::cos(stack[top - 1]); break;
      case kExp: stack[top - 1] = std::exp(stack[top - 1]); break;
      case kLog:
        if (!(stack[top - 1] > 0.0))
          throw DomainError("log of nonpositive value", print_subtree(program_nodes_[k]));
        stack[top - 1] = std::log(stack[top - 1]);
        break;
      case kSqrt:
        if (stack[top - 1] < 0.0) throw DomainError("sqrt of negative value", print_subtree(program_nodes_[k]));
        stack[top - 1] = std::sqrt(stack[top - 1]);
        break;
      case kAbs: stack[top - 1] = std::fabs(stack[top - 1]); break;
      case kMin: --top; stack[top - 1] = std::min(stack[top - 1], stack[top]); break;
      case kMax: --top; stack[top - 1] = std::max(stack[top - 1], stack[top]); break;
    }
  }
  return stack[0];
}

double Expression::evaluate(const std::map<std::string, double>& bindings) const {
  Slots slots{};
  for (int s : used_slots_) {
    const auto it = bindings.find(slot_name(s));
    if (it == bindings.end()) throw UnboundVariable(slot_name(s));
    slots[s] = it->second;
  }
  return evaluate(slots);
}

std::set<std::string> Expression::free_vars() const {
  std::set<std::string> out;
  for (int s : used_slots_) out.insert(slot_name(s));
  return out;
}

bool Expression::uses_family(Family f) const {
  return std::any_of(used_slots_.begin(), used_slots_.end(),
                     [f](int s) { return s / kMaxDim == static_cast<int>(f); });
}

int Expression::max_index() const {
  int m = 0;
  for (int s : used_slots_) m = std::max(m, s % kMaxDim + 1);
  return m;
}

std::string Expression::print() const {
  std::string s;
  print_node(*root_, s);
  return s;
}

}  // namespace spechomog::expr
