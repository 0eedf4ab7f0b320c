#include "oracles.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedhub::acceptance {

bool eval_ast(const VisAst& e, const std::set<std::string>& tokens) {
  switch (e.kind) {
    case VisAst::Kind::token:
      return tokens.count(e.token) > 0;
    case VisAst::Kind::conj:
      for (const auto& k : e.kids) {
        if (!eval_ast(k, tokens)) return false;
      }
      return true;
    case VisAst::Kind::disj:
      for (const auto& k : e.kids) {
        if (eval_ast(k, tokens)) return true;
      }
      return false;
  }
  return false;
}

VisAst random_ast(std::mt19937_64& rng, int max_depth, const std::vector<std::string>& universe) {
  std::uniform_int_distribution<std::size_t> pick(0, universe.size() - 1);
  std::bernoulli_distribution leaf(0.35);
  VisAst e;
  if (max_depth <= 1 || leaf(rng)) {
    e.token = universe[pick(rng)];
    return e;
  }
  e.kind = std::bernoulli_distribution(0.5)(rng) ? VisAst::Kind::conj : VisAst::Kind::disj;
  const int n = std::uniform_int_distribution<int>(2, 3)(rng);
  for (int i = 0; i < n; ++i) e.kids.push_back(random_ast(rng, max_depth - 1, universe));
  return e;
}

namespace {

std::string spaces(std::mt19937_64& rng, bool noisy) {
  if (!noisy) return "";
  return std::string(std::uniform_int_distribution<int>(0, 2)(rng), ' ');
}

std::string render_inner(const VisAst& e, std::mt19937_64& rng, bool noisy, bool under_conj) {
  std::string out;
  if (e.kind == VisAst::Kind::token) {
    out = e.token;
  } else {
    const char op = e.kind == VisAst::Kind::conj ? '&' : '|';
    for (std::size_t i = 0; i < e.kids.size(); ++i) {
      if (i) out += spaces(rng, noisy) + op + spaces(rng, noisy);
      out += render_inner(e.kids[i], rng, noisy, e.kind == VisAst::Kind::conj);
    }
  }
  // `|` under `&` needs grouping; anything else may carry redundant parentheses.
  const bool needed = under_conj && e.kind == VisAst::Kind::disj;
  const bool extra = noisy && std::bernoulli_distribution(0.2)(rng);
  if (needed || extra) out = "(" + spaces(rng, noisy) + out + spaces(rng, noisy) + ")";
  return out;
}

}  // namespace

std::string render_ast(const VisAst& e, std::mt19937_64& rng, bool noisy) {
  return spaces(rng, noisy) + render_inner(e, rng, noisy, false) + spaces(rng, noisy);
}

std::vector<std::set<std::string>> all_subsets(const std::vector<std::string>& universe) {
  std::vector<std::set<std::string>> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << universe.size()); ++mask) {
    std::set<std::string> s;
    for (std::size_t i = 0; i < universe.size(); ++i) {
      if (mask & (std::size_t{1} << i)) s.insert(universe[i]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::set<std::string> oracle_trigrams(const std::string& s) {
  std::string lowered;
  for (unsigned char c : s) lowered += static_cast<char>(std::tolower(c));
  std::istringstream words(lowered);
  std::string w, norm;
  while (words >> w) norm += (norm.empty() ? "" : " ") + w;
  std::set<std::string> out;
  if (norm.empty()) return out;
  if (norm.size() < 3) return {norm};
  for (std::size_t i = 0; i + 3 <= norm.size(); ++i) out.insert(norm.substr(i, 3));
  return out;
}

double oracle_jaccard(const std::string& a, const std::string& b) {
  const auto ga = oracle_trigrams(a);
  const auto gb = oracle_trigrams(b);
  std::set<std::string> inter, uni;
  std::set_intersection(ga.begin(), ga.end(), gb.begin(), gb.end(), std::inserter(inter, inter.end()));
  std::set_union(ga.begin(), ga.end(), gb.begin(), gb.end(), std::inserter(uni, uni.end()));
  if (uni.empty()) return 1.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

double oracle_numeric(double x, double y) {
  const double scale = std::max(std::max(std::abs(x), std::abs(y)), 1.0);
  return 1.0 - std::min(1.0, std::abs(x - y) / scale);
}

OracleScore oracle_score(const OracleRecord& probe, const OracleRecord& candidate,
                         const std::map<std::string, double>& weights,
                         const std::map<std::string, AttrKind>& kinds) {
  double num = 0.0, den = 0.0, conf_sum = 0.0;
  std::size_t conf_n = 0;
  for (const auto& [attr, w] : weights) {
    if (w <= 0.0) continue;
    const auto pa = probe.attrs.find(attr);
    const auto ca = candidate.attrs.find(attr);
    if (pa == probe.attrs.end() || ca == candidate.attrs.end()) continue;
    if (pa->second.empty() || ca->second.empty()) continue;
    const AttrKind kind = kinds.at(attr);
    double best = 0.0;
    for (const auto& x : pa->second) {
      for (const auto& y : ca->second) {
        double s = 0.0;
        if (kind == AttrKind::text) s = oracle_jaccard(x.lexical, y.lexical);
        else if (kind == AttrKind::integer) s = oracle_numeric(std::stod(x.lexical), std::stod(y.lexical));
        else s = x.lexical == y.lexical ? 1.0 : 0.0;
        best = std::max(best, s);
      }
    }
    num += w * best;
    den += w;
    for (const auto& y : ca->second) {
      conf_sum += y.confidence;
      ++conf_n;
    }
  }
  OracleScore r;
  r.similarity = den > 0.0 ? num / den : 0.0;
  r.confidence = conf_n ? conf_sum / static_cast<double>(conf_n) : 0.0;
  r.adjusted = r.similarity * r.confidence;
  return r;
}

std::vector<std::map<std::string, std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string doc = buf.str();

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const char c = doc[i];
    if (quoted) {
      if (c == '"' && i + 1 < doc.size() && doc[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < doc.size() && doc[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else {
      field += c;
    }
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  std::vector<std::map<std::string, std::string>> out;
  if (rows.empty()) return out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::map<std::string, std::string> rec;
    for (std::size_t c = 0; c < rows[0].size() && c < rows[r].size(); ++c) rec[rows[0][c]] = rows[r][c];
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace fedhub::acceptance
