#include "fedhub/ingest/mapping.h"

#include "fedhub/common/error.h"

#include <algorithm>
#include <map>
#include <set>

namespace fedhub::ingest {

namespace {

std::string at(std::size_t line, std::size_t col) {
  return " at line " + std::to_string(line) + ", column " + std::to_string(col);
}

// `name(args)` -> args; nullopt when `text` is not of that shape.
std::optional<std::string> call_args(std::string_view text, std::string_view name) {
  if (!text::starts_with(text, name) || text.size() < name.size() + 2) return std::nullopt;
  if (text[name.size()] != '(' || text.back() != ')') return std::nullopt;
  return std::string(text.substr(name.size() + 1, text.size() - name.size() - 2));
}

// Strips one pair of surrounding double quotes, if present.
std::string unquote(std::string_view v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  return std::string(v);
}

bool needs_quotes(std::string_view v) {
  return v.empty() || v.find_first_of(" \t,()\"") != std::string_view::npos;
}

}  // namespace

std::string Transform::print() const {
  switch (kind) {
    case TransformKind::identity: return "identity";
    case TransformKind::trim: return "trim";
    case TransformKind::upper: return "upper";
    case TransformKind::date_parse: return "date-parse(" + pattern + ")";
    case TransformKind::split: return "split(" + (needs_quotes(delim) ? "\"" + delim + "\"" : delim) + ")";
    case TransformKind::concat: return "concat(" + other + ",\"" + sep + "\")";
  }
  return "identity";
}

Transform parse_transform(std::string_view s) {
  Transform t;
  if (s == "identity") return t;
  if (s == "trim") {
    t.kind = TransformKind::trim;
    return t;
  }
  if (s == "upper") {
    t.kind = TransformKind::upper;
    return t;
  }
  if (const auto a = call_args(s, "date-parse")) {
    t.kind = TransformKind::date_parse;
    t.pattern = *a;
    const bool ok = t.pattern.find("YYYY") != std::string::npos &&
                    t.pattern.find("MM") != std::string::npos &&
                    t.pattern.find("DD") != std::string::npos;
    if (!ok) throw Error(ErrorCode::invalid, "date-parse pattern needs YYYY, MM and DD: '" + *a + "'");
    return t;
  }
  if (const auto a = call_args(s, "split")) {
    if (a->empty()) throw Error(ErrorCode::invalid, "split needs a non-empty delimiter");
    t.kind = TransformKind::split;
    t.delim = unquote(*a);
    if (t.delim.empty()) throw Error(ErrorCode::invalid, "split needs a non-empty delimiter");
    return t;
  }
  if (const auto a = call_args(s, "concat")) {
    const auto comma = a->find(',');
    if (comma == std::string::npos || comma == 0) {
      throw Error(ErrorCode::invalid, "concat needs (field, separator): '" + *a + "'");
    }
    t.kind = TransformKind::concat;
    t.other = std::string(text::trim(std::string_view(*a).substr(0, comma)));
    t.sep = unquote(a->substr(comma + 1));
    if (t.other.empty()) throw Error(ErrorCode::invalid, "concat needs a field name");
    return t;
  }
  throw Error(ErrorCode::invalid, "unknown transform '" + std::string(s) + "'");
}

std::optional<std::string> parse_date_with_pattern(std::string_view in, std::string_view pattern) {
  if (in.size() != pattern.size()) return std::nullopt;
  std::string y, m, d;
  for (std::size_t i = 0; i < pattern.size();) {
    auto take = [&](std::string_view ph, std::string& out) {
      if (pattern.substr(i, ph.size()) != ph) return false;
      for (std::size_t k = 0; k < ph.size(); ++k) {
        if (!std::isdigit(static_cast<unsigned char>(in[i + k]))) return false;
      }
      out = std::string(in.substr(i, ph.size()));
      i += ph.size();
      return true;
    };
    if (pattern.substr(i, 4) == "YYYY") {
      if (!take("YYYY", y)) return std::nullopt;
    } else if (pattern.substr(i, 2) == "MM") {
      if (!take("MM", m)) return std::nullopt;
    } else if (pattern.substr(i, 2) == "DD") {
      if (!take("DD", d)) return std::nullopt;
    } else {
      if (in[i] != pattern[i]) return std::nullopt;
      ++i;
    }
  }
  if (y.empty() || m.empty() || d.empty()) return std::nullopt;
  const std::string iso = y + "-" + m + "-" + d;
  if (!parse_iso_date(iso)) return std::nullopt;
  return iso;
}

std::vector<std::string> apply_transform(const Transform& t, std::string_view raw,
                                         std::string_view other_value) {
  switch (t.kind) {
    case TransformKind::identity:
      return {std::string(raw)};
    case TransformKind::trim:
      return {std::string(text::trim(raw))};
    case TransformKind::upper:
      return {text::to_upper(raw)};
    case TransformKind::date_parse: {
      const auto v = parse_date_with_pattern(text::trim(raw), t.pattern);
      if (!v) {
        throw Error(ErrorCode::invalid,
                    "'" + std::string(raw) + "' does not match date pattern " + t.pattern);
      }
      return {*v};
    }
    case TransformKind::split: {
      std::vector<std::string> out;
      std::size_t pos = 0;
      while (true) {
        const auto next = raw.find(t.delim, pos);
        const auto piece = text::trim(raw.substr(pos, next == std::string_view::npos ? raw.npos
                                                                                     : next - pos));
        if (!piece.empty()) out.emplace_back(piece);
        if (next == std::string_view::npos) break;
        pos = next + t.delim.size();
      }
      return out;
    }
    case TransformKind::concat: {
      std::string a(text::trim(raw));
      std::string b(text::trim(other_value));
      if (a.empty()) return {b};
      if (b.empty()) return {a};
      return {a + t.sep + b};
    }
  }
  return {std::string(raw)};
}

MappingRuleSet parse_mappings(std::string_view doc, const ontology::Ontology& onto) {
  MappingRuleSet set;
  std::size_t entity_line = 0;
  std::size_t line_no = 0;
  for (const auto& line : text::split(doc, '\n')) {
    ++line_no;
    const auto toks = text::tokenize_line(line, line_no);
    if (toks.empty()) continue;
    const auto& head = toks[0];
    if (head.value == "entity") {
      if (entity_line) throw ParseError("duplicate entity declaration", line_no, head.column);
      if (toks.size() != 3) throw ParseError("expected: entity <Concept> key(<field>,...)", line_no, head.column);
      if (!onto.has_concept(toks[1].value)) {
        throw Error(ErrorCode::not_found, "unknown concept '" + toks[1].value + "'" + at(line_no, toks[1].column));
      }
      const auto args = call_args(toks[2].value, "key");
      if (!args) throw ParseError("expected key(<field>,...)", line_no, toks[2].column);
      for (const auto& f : text::split(*args, ',')) {
        const auto name = text::trim(f);
        if (name.empty()) throw ParseError("empty key field", line_no, toks[2].column);
        set.key_fields.emplace_back(name);
      }
      set.source_concept = toks[1].value;
      entity_line = line_no;
    } else if (head.value == "map") {
      if (!entity_line) throw ParseError("map before entity declaration", line_no, head.column);
      if (toks.size() < 4 || toks[2].value != "->") {
        throw ParseError("expected: map <field> -> <target> [options]", line_no, head.column);
      }
      MappingRule r;
      r.line = line_no;
      r.source_field = toks[1].value;
      r.target = toks[3].value;
      const auto col = toks[3].column;
      if (const auto dot = r.target.find('.'); dot != std::string::npos) {
        const auto c = r.target.substr(0, dot);
        r.name = r.target.substr(dot + 1);
        if (!onto.has_concept(c)) {
          throw Error(ErrorCode::not_found, "unknown concept '" + c + "'" + at(line_no, col));
        }
        const auto* attr = onto.find_attribute(c, r.name);
        if (!attr) {
          throw Error(ErrorCode::not_found, "unknown attribute '" + r.target + "'" + at(line_no, col));
        }
        if (!onto.is_subconcept(set.source_concept, c)) {
          throw Error(ErrorCode::invalid, "attribute '" + r.target + "' does not apply to " +
                                              set.source_concept + at(line_no, col));
        }
        r.datatype = attr->datatype;
      } else {
        const auto* rel = onto.find_relation(r.target);
        if (!rel) {
          throw Error(ErrorCode::not_found, "unknown relation '" + r.target + "'" + at(line_no, col));
        }
        if (!onto.is_subconcept(set.source_concept, rel->domain)) {
          throw Error(ErrorCode::invalid, "relation '" + r.target + "' has domain " + rel->domain +
                                              ", not " + set.source_concept + at(line_no, col));
        }
        r.is_relation = true;
        r.name = r.target;
        r.datatype = ValueKind::entity;
        r.range_concept = rel->range;
      }
      bool have_transform = false;
      for (std::size_t i = 4; i < toks.size(); ++i) {
        const auto& t = toks[i];
        try {
          if (text::starts_with(t.value, "vis=")) {
            r.visibility = security::VisibilityExpr::parse(t.value.substr(4)).canonical();
          } else if (text::starts_with(t.value, "conf=")) {
            const auto c = text::parse_decimal(t.value.substr(5));
            if (!c || *c < 0.0 || *c > 1.0) throw Error(ErrorCode::invalid, "confidence must be a decimal in [0,1]");
            r.confidence = *c;
          } else if (text::starts_with(t.value, "ref=")) {
            if (!r.is_relation) throw Error(ErrorCode::invalid, "ref= applies to relation targets only");
            r.ref_source = t.value.substr(4);
            if (const auto slash = r.ref_source.find('/'); slash != std::string::npos) {
              const auto c = r.ref_source.substr(slash + 1);
              r.ref_source.resize(slash);
              if (!onto.has_concept(c)) throw Error(ErrorCode::not_found, "unknown concept '" + c + "'");
              if (!onto.is_subconcept(c, r.range_concept)) {
                throw Error(ErrorCode::invalid, "'" + c + "' is not a " + r.range_concept);
              }
              r.range_concept = c;
            }
            if (r.ref_source.empty()) throw Error(ErrorCode::invalid, "empty ref source");
          } else if (!have_transform) {
            r.transform = parse_transform(t.value);
            have_transform = true;
          } else {
            throw Error(ErrorCode::invalid, "unexpected token '" + t.value + "'");
          }
        } catch (const ParseError& e) {
          throw ParseError(e.what(), line_no, t.column + 4 + e.offset());
        } catch (const Error& e) {
          if (e.code() == ErrorCode::not_found) throw;
          throw ParseError(e.what(), line_no, t.column);
        }
      }
      if (r.transform.kind == TransformKind::date_parse && r.datatype != ValueKind::date) {
        throw ParseError("date-parse targets a date attribute", line_no, col);
      }
      set.rules.push_back(std::move(r));
    } else {
      throw ParseError("unknown directive '" + head.value + "'", line_no, head.column);
    }
  }
  if (!entity_line) throw ParseError("missing entity declaration", line_no ? line_no : 1, 1);
  if (set.rules.empty()) throw ParseError("mapping has no rules", line_no, 1);
  return set;
}

MappingRuleSet load_mappings(const std::string& path, const ontology::Ontology& onto) {
  return parse_mappings(text::read_file(path), onto);
}

std::string record_entity_id(std::string_view concept_name, std::string_view source_id,
                             std::string_view key) {
  std::string material(source_id);
  material += '|';
  material += key;
  return make_entity_id(concept_name, material);
}

namespace {

struct RowView {
  const std::vector<std::string>& header;
  const std::vector<std::string>& cells;
  const std::map<std::string, std::size_t>& col;

  std::optional<std::string_view> get(const std::string& field) const {
    const auto it = col.find(field);
    if (it == col.end()) return std::nullopt;
    if (it->second >= cells.size()) return std::string_view{};
    return std::string_view(cells[it->second]);
  }
};

std::string join_key(const RowView& row, const std::vector<std::string>& fields) {
  std::string key;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto v = row.get(fields[i]);
    if (!v) throw Error(ErrorCode::invalid, "missing key column '" + fields[i] + "'");
    const auto t = text::trim(*v);
    if (t.empty()) throw Error(ErrorCode::invalid, "empty key field '" + fields[i] + "'");
    if (i) key += '|';
    key += t;
  }
  return key;
}

std::optional<Timestamp> row_time(const RowView& row, std::string_view column) {
  const auto v = row.get(std::string(column));
  if (!v || text::trim(*v).empty()) return std::nullopt;
  const auto t = parse_rfc3339(text::trim(*v));
  if (!t) throw Error(ErrorCode::invalid, std::string(column) + " '" + std::string(*v) + "' is not RFC 3339");
  return t;
}

}  // namespace

TransformOutput transform(const text::CsvTable& table, const MappingRuleSet& rules,
                          const TransformContext& ctx) {
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < table.header.size(); ++i) col.emplace(text::trim(table.header[i]), i);

  TransformOutput out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const RowView row{table.header, table.rows[r], col};
    try {
      const auto subject =
          record_entity_id(rules.source_concept, ctx.source_id, join_key(row, rules.key_fields));
      MetadataEnvelope base;
      base.source = ctx.source_id;
      base.activity = ctx.activity_id;
      base.agent = ctx.agent;
      base.recorded_at = row_time(row, kRecordedAtColumn).value_or(ctx.run_start);
      base.valid_from = row_time(row, kValidFromColumn);
      base.valid_to = row_time(row, kValidToColumn);
      if (base.valid_from && base.valid_to && !(*base.valid_from < *base.valid_to)) {
        throw Error(ErrorCode::invalid, "valid_from must precede valid_to");
      }

      std::vector<Fact> facts;
      for (const auto& rule : rules.rules) {
        const auto raw = row.get(rule.source_field);
        if (!raw) throw Error(ErrorCode::invalid, "missing column '" + rule.source_field + "'");
        std::string_view other;
        if (rule.transform.kind == TransformKind::concat) {
          const auto o = row.get(rule.transform.other);
          if (!o) throw Error(ErrorCode::invalid, "missing column '" + rule.transform.other + "'");
          other = *o;
        }
        if (text::trim(*raw).empty() && text::trim(other).empty()) continue;
        for (const auto& v : apply_transform(rule.transform, *raw, other)) {
          if (v.empty()) continue;
          Fact f;
          f.subject = subject;
          f.predicate = rule.name;
          if (rule.is_relation) {
            const auto& src = rule.ref_source.empty() ? ctx.source_id : rule.ref_source;
            f.object = entity_value(record_entity_id(rule.range_concept, src, text::trim(v)));
          } else {
            const auto value = make_value(rule.datatype, v);
            if (!value) {
              throw Error(ErrorCode::invalid, "'" + v + "' is not a valid " +
                                                  to_string(rule.datatype) + " for " + rule.target);
            }
            f.object = *value;
          }
          f.envelope = base;
          f.envelope.visibility = rule.visibility.value_or(ctx.default_visibility);
          f.envelope.confidence = rule.confidence;
          facts.push_back(with_id(std::move(f)));
        }
      }
      if (!facts.empty() && seen.insert(subject).second) out.entities.push_back(subject);
      for (auto& f : facts) out.facts.push_back(std::move(f));
    } catch (const Error& e) {
      out.errors.push_back({"row " + std::to_string(r + 1), e.what()});
    }
  }
  return out;
}

}  // namespace fedhub::ingest
