#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spechomog::expr {

class ExprError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public ExprError {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : ExprError("syntax error at offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownIdentifier : public ParseError {
 public:
  UnknownIdentifier(std::size_t offset, std::string name)
      : ParseError(offset, "unknown identifier '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

// Evaluation hit log of nonpositive, sqrt of negative, division by zero or
// a negative base under a non-integer power.
class DomainError : public ExprError {
 public:
  DomainError(const std::string& what, std::string subexpression)
      : ExprError(what + " in '" + subexpression + "'"), subexpression_(std::move(subexpression)) {}
  const std::string& subexpression() const { return subexpression_; }

 private:
  std::string subexpression_;
};

class UnboundVariable : public ExprError {
 public:
  explicit UnboundVariable(const std::string& name)
      : ExprError("no binding for variable '" + name + "'") {}
};

// Variable families. x/y are slow variables, xi/eta fast ones, z is the
// kernel offset used by custom dispersal kernels.
enum class Family : int { X = 0, Y = 1, Xi = 2, Eta = 3, Z = 4 };

inline constexpr int kMaxDim = 3;
inline constexpr int kFamilyCount = 5;
inline constexpr int kSlotCount = kFamilyCount * kMaxDim;

constexpr int slot_of(Family f, int index) { return static_cast<int>(f) * kMaxDim + (index - 1); }

std::string slot_name(int slot);

struct ParseOptions {
  // Bitmask over Family values.
  unsigned families = (1u << 0) | (1u << 1) | (1u << 2) | (1u << 3);
  static ParseOptions kernel_offsets() { return ParseOptions{1u << 4}; }
};

using Slots = std::array<double, kSlotCount>;

struct Node;

/// Immutable parsed expression. Copies share the tree; evaluation is
/// reentrant.
class Expression {
 public:
  Expression();  // the constant 0

  static Expression parse(std::string_view text, const ParseOptions& options = {});
  static Expression constant(double value);

  double evaluate(const std::map<std::string, double>& bindings) const;
  // Fast path: every slot is readable, only used slots are read.
  double evaluate(const Slots& slots) const;

  std::set<std::string> free_vars() const;
  const std::vector<int>& used_slots() const { return used_slots_; }
  bool uses_family(Family f) const;
  int max_index() const;  // largest variable index used, 0 if none
  bool is_constant() const { return used_slots_.empty(); }

  // Fully parenthesized form; re-parsing it reproduces the same evaluation.
  std::string print() const;
  const std::string& source() const { return source_; }

 private:
  struct Instr {
    int op;
    int slot;
    double value;
  };

  void compile();

  std::shared_ptr<const Node> root_;
  std::vector<Instr> program_;
  std::vector<const Node*> program_nodes_;
  std::vector<int> used_slots_;
  std::string source_;
  std::size_t max_stack_ = 0;
};

}  // namespace spechomog::expr
