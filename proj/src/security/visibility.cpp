#include "fedhub/security/visibility.h"

#include "fedhub/common/error.h"

#include <algorithm>
#include <cctype>

namespace fedhub::security {

namespace {

bool is_token_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == ':' || c == '-';
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  VisNode parse_expr() {
    std::vector<VisNode> terms;
    terms.push_back(parse_term());
    while (peek() == '|') {
      ++pos_;
      terms.push_back(parse_term());
    }
    return terms.size() == 1 ? std::move(terms.front()) : VisNode::make_or(std::move(terms));
  }

  void expect_end() {
    skip_ws();
    if (pos_ < text_.size()) fail(text_[pos_] == ')' ? "unbalanced ')'" : "unexpected character");
  }

 private:
  VisNode parse_term() {
    std::vector<VisNode> factors;
    factors.push_back(parse_factor());
    while (peek() == '&') {
      ++pos_;
      factors.push_back(parse_factor());
    }
    return factors.size() == 1 ? std::move(factors.front()) : VisNode::make_and(std::move(factors));
  }

  VisNode parse_factor() {
    const char c = peek();
    if (c == '(') {
      ++pos_;
      VisNode inner = parse_expr();
      if (peek() != ')') fail("expected ')'");
      ++pos_;
      return inner;
    }
    if (c == '\0') fail("unexpected end of expression");
    if (!is_token_char(c)) {
      fail(c == '&' || c == '|' || c == ')' ? "expected token or '('" : "illegal character");
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && is_token_char(text_[pos_])) ++pos_;
    return VisNode::make_token(std::string(text_.substr(start, pos_ - start)));
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("visibility syntax error at offset " + std::to_string(pos_) + ": " + what, 0, 0,
                     pos_);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string print_node(const VisNode& n) {
  switch (n.kind) {
    case VisNode::Kind::token:
      return n.token;
    case VisNode::Kind::all_of: {
      std::string out;
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += '&';
        const auto& c = n.children[i];
        if (c.kind == VisNode::Kind::any_of) {
          out += '(' + print_node(c) + ')';
        } else {
          out += print_node(c);
        }
      }
      return out;
    }
    case VisNode::Kind::any_of: {
      std::string out;
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += '|';
        out += print_node(n.children[i]);
      }
      return out;
    }
  }
  return {};
}

VisNode canonicalize(const VisNode& n) {
  if (n.kind == VisNode::Kind::token) return n;
  std::vector<VisNode> flat;
  for (const auto& c : n.children) {
    VisNode cc = canonicalize(c);
    if (cc.kind == n.kind) {
      for (auto& g : cc.children) flat.push_back(std::move(g));
    } else {
      flat.push_back(std::move(cc));
    }
  }
  std::vector<std::pair<std::string, VisNode>> keyed;
  keyed.reserve(flat.size());
  for (auto& c : flat) keyed.emplace_back(print_node(c), std::move(c));
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  VisNode out;
  out.kind = n.kind;
  for (auto& [_, c] : keyed) out.children.push_back(std::move(c));
  return out;
}

void collect(const VisNode& n, std::set<std::string>& out) {
  if (n.kind == VisNode::Kind::token) {
    out.insert(n.token);
    return;
  }
  for (const auto& c : n.children) collect(c, out);
}

}  // namespace

VisNode VisNode::make_token(std::string name) {
  VisNode n;
  n.kind = Kind::token;
  n.token = std::move(name);
  return n;
}

VisNode VisNode::make_and(std::vector<VisNode> children) {
  VisNode n;
  n.kind = Kind::all_of;
  n.children = std::move(children);
  return n;
}

VisNode VisNode::make_or(std::vector<VisNode> children) {
  VisNode n;
  n.kind = Kind::any_of;
  n.children = std::move(children);
  return n;
}

VisibilityExpr::VisibilityExpr(VisNode root) : has_root_(true), root_(std::move(root)) {}

VisibilityExpr VisibilityExpr::parse(std::string_view text) {
  Parser p(text);
  bool blank = std::all_of(text.begin(), text.end(),
                           [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  if (blank) return VisibilityExpr{};
  VisNode root = p.parse_expr();
  p.expect_end();
  return VisibilityExpr(std::move(root));
}

std::string VisibilityExpr::print() const {
  if (!has_root_) return {};
  return print_node(canonicalize(root_));
}

VisibilityExpr VisibilityExpr::canonical() const {
  if (!has_root_) return {};
  return VisibilityExpr(canonicalize(root_));
}

void VisibilityExpr::collect_tokens(std::set<std::string>& out) const {
  if (has_root_) collect(root_, out);
}

bool is_valid_token(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), is_token_char);
}

AuthContext::AuthContext(std::string principal_, std::set<std::string> tokens_)
    : principal(std::move(principal_)), tokens(std::move(tokens_)) {
  for (const auto& t : tokens) {
    if (!is_valid_token(t)) throw Error(ErrorCode::invalid, "invalid authorization token '" + t + "'");
  }
}

AuthContext AuthContext::intersect(const std::set<std::string>& granted) const {
  AuthContext out;
  out.principal = principal;
  std::set_intersection(tokens.begin(), tokens.end(), granted.begin(), granted.end(),
                        std::inserter(out.tokens, out.tokens.end()));
  return out;
}

bool authorize(const VisNode& node, const std::set<std::string>& tokens) {
  switch (node.kind) {
    case VisNode::Kind::token:
      return tokens.count(node.token) > 0;
    case VisNode::Kind::all_of:
      return std::all_of(node.children.begin(), node.children.end(),
                         [&](const VisNode& c) { return authorize(c, tokens); });
    case VisNode::Kind::any_of:
      return std::any_of(node.children.begin(), node.children.end(),
                         [&](const VisNode& c) { return authorize(c, tokens); });
  }
  return false;
}

bool authorize(const VisibilityExpr& expr, const AuthContext& auth) {
  return expr.is_public() || authorize(expr.root(), auth.tokens);
}

VisibilityExpr conjoin(const std::vector<VisibilityExpr>& exprs) {
  std::vector<VisNode> parts;
  std::set<std::string> seen;
  for (const auto& e : exprs) {
    if (e.is_public()) continue;
    if (!seen.insert(e.print()).second) continue;
    parts.push_back(e.canonical().root());
  }
  if (parts.empty()) return {};
  if (parts.size() == 1) return VisibilityExpr(std::move(parts.front()));
  return VisibilityExpr(VisNode::make_and(std::move(parts))).canonical();
}

}  // namespace fedhub::security
