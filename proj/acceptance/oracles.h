#pragma once

// Reference implementations used only to judge the library. Nothing here calls
// into the code under test.

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace fedhub::acceptance {

// --- visibility formulas ---------------------------------------------------------

struct VisAst {
  enum class Kind { token, conj, disj };
  Kind kind = Kind::token;
  std::string token;
  std::vector<VisAst> kids;
};

bool eval_ast(const VisAst& e, const std::set<std::string>& tokens);

// A random formula of at most `max_depth` levels over `universe`.
VisAst random_ast(std::mt19937_64& rng, int max_depth, const std::vector<std::string>& universe);

// Text a user could have typed for `e`. With `noisy`, redundant parentheses and
// spaces are sprinkled in.
std::string render_ast(const VisAst& e, std::mt19937_64& rng, bool noisy);

// Every subset of `universe`, indexed by bitmask.
std::vector<std::set<std::string>> all_subsets(const std::vector<std::string>& universe);

// --- similarity --------------------------------------------------------------------

enum class AttrKind { text, integer, date };

struct AttrValue {
  std::string lexical;
  double confidence = 1.0;
};

// Attribute name -> values, for one record.
struct OracleRecord {
  std::string id;
  std::map<std::string, std::vector<AttrValue>> attrs;
};

std::set<std::string> oracle_trigrams(const std::string& s);
double oracle_jaccard(const std::string& a, const std::string& b);
double oracle_numeric(double x, double y);

struct OracleScore {
  double similarity = 0.0;
  double confidence = 0.0;  // mean over the candidate's values of shared attributes
  double adjusted = 0.0;
};

// Score of `candidate` as seen from `probe`.
OracleScore oracle_score(const OracleRecord& probe, const OracleRecord& candidate,
                         const std::map<std::string, double>& weights,
                         const std::map<std::string, AttrKind>& kinds);

// Minimal RFC 4180 reader: header row plus records, quoted fields allowed.
std::vector<std::map<std::string, std::string>> read_csv(const std::string& path);

}  // namespace fedhub::acceptance
