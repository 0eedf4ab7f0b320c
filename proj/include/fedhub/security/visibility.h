#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace fedhub::security {

// Boolean token formula attached to each fact. Grammar:
//   expr   := term ('|' term)*
//   term   := factor ('&' factor)*
//   factor := TOKEN | '(' expr ')'
// `&` binds tighter than `|`. There is no negation, so visibility is monotone in
// the token set: granting more tokens never hides a fact. The empty expression
// is Public and is visible to everyone.
struct VisNode {
  enum class Kind { token, all_of, any_of };

  Kind kind = Kind::token;
  std::string token;             // kind == token
  std::vector<VisNode> children;  // kind != token, size >= 2

  static VisNode make_token(std::string name);
  static VisNode make_and(std::vector<VisNode> children);
  static VisNode make_or(std::vector<VisNode> children);

  friend bool operator==(const VisNode&, const VisNode&) = default;
};

class VisibilityExpr {
 public:
  VisibilityExpr() = default;  // Public
  explicit VisibilityExpr(VisNode root);

  static VisibilityExpr parse(std::string_view text);

  bool is_public() const { return !has_root_; }
  const VisNode& root() const { return root_; }

  // Canonical text: nested same-operator nodes are flattened, children sorted by
  // printed form, parentheses only where `|` appears under `&`.
  std::string print() const;
  VisibilityExpr canonical() const;

  void collect_tokens(std::set<std::string>& out) const;

  friend bool operator==(const VisibilityExpr&, const VisibilityExpr&) = default;

 private:
  bool has_root_ = false;
  VisNode root_;
};

bool is_valid_token(std::string_view name);

struct AuthContext {
  std::string principal;
  std::set<std::string> tokens;

  AuthContext() = default;
  AuthContext(std::string principal, std::set<std::string> tokens);

  // Least-privilege narrowing: keeps only tokens present in `granted`.
  AuthContext intersect(const std::set<std::string>& granted) const;
};

bool authorize(const VisibilityExpr& expr, const AuthContext& auth);
bool authorize(const VisNode& node, const std::set<std::string>& tokens);

// Conjunction of the given expressions, canonicalized. Public operands vanish;
// all-public input yields Public.
VisibilityExpr conjoin(const std::vector<VisibilityExpr>& exprs);

}  // namespace fedhub::security
