#include "loomfuse/rulespec.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <sstream>

namespace loomfuse {

std::string TermPattern::str() const {
  std::string s;
  if (!tag.empty()) s += tag + "(";
  s += ident;
  for (const auto& o : subscripts) {
    s += "[" + o.var;
    if (o.displacement > 0) s += "+" + std::to_string(o.displacement);
    if (o.displacement < 0) s += std::to_string(o.displacement);
    s += "]";
  }
  if (!tag.empty()) s += ")";
  return s;
}

const TermPattern* KernelRule::input_of(const std::string& p) const {
  for (const auto& [name, pat] : inputs)
    if (name == p) return &pat;
  return nullptr;
}

const TermPattern* KernelRule::output_of(const std::string& p) const {
  for (const auto& [name, pat] : outputs)
    if (name == p) return &pat;
  return nullptr;
}

int RuleSet::dim_of(const std::string& var) const {
  for (size_t i = 0; i < loop_order.size(); ++i)
    if (loop_order[i] == var) return static_cast<int>(i);
  return -1;
}

const KernelRule* RuleSet::kernel(const std::string& n) const {
  for (const auto& k : kernels)
    if (k.name == n) return &k;
  return nullptr;
}

namespace {

// ---------------------------------------------------------------------------
// Line-level parser for term patterns and bindings. Operates on single lines
// taken out of YAML block scalars, keeping enough position info for
// diagnostics.

struct Cursor {
  const std::string& text;
  size_t pos = 0;
  SourceLoc base;  // location of column 1 of this line

  SourceLoc here() const {
    SourceLoc l = base;
    l.column += static_cast<int>(pos);
    return l;
  }
  void skip_ws() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }
  bool at_end() {
    skip_ws();
    return pos >= text.size();
  }
  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }
  bool eat(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  bool eat_str(const char* s) {
    skip_ws();
    size_t n = strlen(s);
    if (text.compare(pos, n, s) == 0) {
      pos += n;
      return true;
    }
    return false;
  }
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// name with optional trailing '?'
std::string parse_name(Cursor& c) {
  c.skip_ws();
  size_t start = c.pos;
  if (c.pos >= c.text.size() || !ident_start(c.text[c.pos])) return "";
  while (c.pos < c.text.size() && ident_char(c.text[c.pos])) ++c.pos;
  if (c.pos < c.text.size() && c.text[c.pos] == '?') ++c.pos;
  return c.text.substr(start, c.pos - start);
}

bool parse_int(Cursor& c, long& out) {
  c.skip_ws();
  size_t start = c.pos;
  if (c.pos < c.text.size() && (c.text[c.pos] == '+' || c.text[c.pos] == '-')) ++c.pos;
  size_t digits = c.pos;
  while (c.pos < c.text.size() && std::isdigit(static_cast<unsigned char>(c.text[c.pos]))) ++c.pos;
  if (c.pos == digits) {
    c.pos = start;
    return false;
  }
  out = std::stol(c.text.substr(start, c.pos - start));
  return true;
}

// subscript := '[' name (('+'|'-') int)? ']'
bool parse_subscript(Cursor& c, OffsetExpr& out, DiagList& diags) {
  if (!c.eat('[')) return false;
  std::string v = parse_name(c);
  if (v.empty()) {
    diags.error(c.here(), "subscript must reference an iteration variable (constant or non-affine "
                          "subscripts are not supported)");
    return false;
  }
  out.var = v;
  out.displacement = 0;
  c.skip_ws();
  if (c.pos < c.text.size() && (c.text[c.pos] == '+' || c.text[c.pos] == '-')) {
    char sign = c.text[c.pos];
    ++c.pos;
    long d = 0;
    Cursor probe = c;
    if (!parse_int(probe, d)) {
      diags.error(c.here(), "non-affine subscript: expected integer displacement after '" +
                                std::string(1, sign) + "'");
      return false;
    }
    // reject forms like i+j or i*2 is implicit: only var±int parses
    c = probe;
    out.displacement = static_cast<int>(sign == '-' ? -d : d);
  }
  if (!c.eat(']')) {
    diags.error(c.here(), "non-affine subscript: expected ']' (only `var +/- constant` is allowed)");
    return false;
  }
  return true;
}

// pattern := [tag '('] ident subscript* [')']
bool parse_pattern(Cursor& c, TermPattern& out, DiagList& diags) {
  out.loc = c.here();
  std::string first = parse_name(c);
  if (first.empty()) {
    diags.error(c.here(), "expected a term pattern");
    return false;
  }
  if (c.peek() == '(') {
    if (!first.empty() && first.back() == '?') {
      diags.error(out.loc, "producer tag may not be a free variable");
      return false;
    }
    c.eat('(');
    out.tag = first;
    out.ident = parse_name(c);
    if (out.ident.empty()) {
      diags.error(c.here(), "expected identifier inside tag application");
      return false;
    }
  } else {
    out.ident = first;
  }
  while (c.peek() == '[') {
    OffsetExpr o;
    if (!parse_subscript(c, o, diags)) return false;
    out.subscripts.push_back(o);
  }
  if (!out.tag.empty() && !c.eat(')')) {
    diags.error(c.here(), "expected ')' closing tag application");
    return false;
  }
  return true;
}

// decl := type-tokens name subscript*
bool parse_extern_decl(Cursor& c, ExternalDecl& out, DiagList& diags) {
  out.loc = c.here();
  std::vector<std::string> names;
  while (true) {
    c.skip_ws();
    if (c.pos >= c.text.size() || !ident_start(c.text[c.pos])) break;
    names.push_back(parse_name(c));
    c.skip_ws();
    if (c.pos < c.text.size() && (c.text[c.pos] == '[' || c.text[c.pos] == '=')) break;
  }
  if (names.empty()) {
    diags.error(out.loc, "expected external buffer declaration (type name[subscripts])");
    return false;
  }
  out.name = names.back();
  for (size_t i = 0; i + 1 < names.size(); ++i) {
    if (i) out.type += ' ';
    out.type += names[i];
  }
  if (out.type.empty()) out.type = "double";
  while (c.peek() == '[') {
    OffsetExpr o;
    if (!parse_subscript(c, o, diags)) return false;
    out.subscripts.push_back(o);
  }
  return true;
}

std::vector<std::pair<std::string, SourceLoc>> block_lines(const YAML::Node& node,
                                                           const std::string& filename) {
  std::vector<std::pair<std::string, SourceLoc>> out;
  std::string text = node.as<std::string>();
  int line0 = node.Mark().line;  // 0-based line of the scalar marker
  std::istringstream is(text);
  std::string ln;
  int k = 0;
  while (std::getline(is, ln)) {
    // strip comments
    auto hash = ln.find('#');
    if (hash != std::string::npos) ln = ln.substr(0, hash);
    bool blank = ln.find_first_not_of(" \t\r") == std::string::npos;
    if (!blank) {
      SourceLoc loc{filename, line0 + k + 2, 1};
      out.emplace_back(ln, loc);
    }
    ++k;
  }
  return out;
}

SourceLoc mark_loc(const YAML::Node& n, const std::string& filename) {
  return SourceLoc{filename, n.Mark().line + 1, n.Mark().column + 1};
}

struct ParseCtx {
  const std::string& filename;
  DiagList& diags;
  RuleSet& rs;
  std::map<std::pair<std::string, std::string>, size_t> ranks;  // (tag, concrete ident) -> rank

  void check_rank(const TermPattern& p) {
    if (p.ident_is_free()) return;
    auto key = std::make_pair(p.tag, p.ident);
    auto [it, fresh] = ranks.emplace(key, p.subscripts.size());
    if (!fresh && it->second != p.subscripts.size())
      diags.error(p.loc, "rank mismatch on identifier '" + p.str() + "': previously used with " +
                             std::to_string(it->second) + " subscript(s)");
  }
};

void parse_kernel(ParseCtx& ctx, const std::string& name, const YAML::Node& body) {
  KernelRule k;
  k.name = name;
  k.loc = mark_loc(body, ctx.filename);
  if (body["declaration"]) k.declaration = body["declaration"].as<std::string>();
  if (body["associative"]) k.associative = body["associative"].as<bool>();

  auto parse_io = [&](const char* key, std::vector<std::pair<std::string, TermPattern>>& dst) {
    if (!body[key]) return;
    for (auto& [line, loc] : block_lines(body[key], ctx.filename)) {
      Cursor c{line, 0, loc};
      std::string param = parse_name(c);
      if (param.empty() || !c.eat(':')) {
        ctx.diags.error(c.here(), "expected `param : pattern` line");
        continue;
      }
      TermPattern pat;
      if (!parse_pattern(c, pat, ctx.diags)) continue;
      if (!c.at_end()) {
        ctx.diags.error(c.here(), "trailing characters after term pattern");
        continue;
      }
      ctx.check_rank(pat);
      dst.emplace_back(param, pat);
    }
  };
  parse_io("inputs", k.inputs);
  parse_io("outputs", k.outputs);

  if (body["body"]) {
    for (auto& [line, loc] : block_lines(body["body"], ctx.filename)) {
      Cursor c{line, 0, loc};
      std::string param = parse_name(c);
      if (param.empty() || !c.eat('=')) {
        ctx.diags.error(c.here(), "expected `outparam = expression` line in kernel body");
        continue;
      }
      c.skip_ws();
      k.bodies[param] = line.substr(c.pos);
    }
  }

  // Parameter order: follow the declaration when parseable, otherwise
  // inputs-then-outputs order.
  std::vector<std::string> decl_params;
  {
    auto lp = k.declaration.find('(');
    auto rp = k.declaration.rfind(')');
    if (lp != std::string::npos && rp != std::string::npos && rp > lp) {
      std::string inner = k.declaration.substr(lp + 1, rp - lp - 1);
      std::string tok;
      std::istringstream is(inner);
      std::string piece;
      while (std::getline(is, piece, ',')) {
        // parameter name = last identifier in the piece
        std::string last;
        std::string cur;
        for (char ch : piece) {
          if (ident_char(ch))
            cur += ch;
          else {
            if (!cur.empty()) last = cur;
            cur.clear();
          }
        }
        if (!cur.empty()) last = cur;
        if (!last.empty()) decl_params.push_back(last);
      }
    }
  }
  auto declared = [&](const std::string& p) {
    return std::find(decl_params.begin(), decl_params.end(), p) != decl_params.end();
  };
  bool all_listed = !decl_params.empty();
  for (const auto& [p, _] : k.inputs)
    if (!declared(p)) all_listed = false;
  for (const auto& [p, _] : k.outputs)
    if (!declared(p)) all_listed = false;
  if (all_listed) {
    for (const auto& p : decl_params)
      if (k.input_of(p) || k.output_of(p)) k.params.push_back(p);
  } else {
    for (const auto& [p, _] : k.inputs) k.params.push_back(p);
    for (const auto& [p, _] : k.outputs) k.params.push_back(p);
  }

  // every param in exactly one of inputs/outputs
  for (const auto& p : k.params) {
    if (k.input_of(p) && k.output_of(p))
      ctx.diags.error(k.loc, "kernel '" + name + "': parameter '" + p +
                                 "' appears in both inputs and outputs");
  }

  for (const auto& existing : ctx.rs.kernels)
    if (existing.name == name)
      ctx.diags.error(k.loc, "duplicate kernel name '" + name + "'");
  ctx.rs.kernels.push_back(std::move(k));
}

void parse_globals(ParseCtx& ctx, const YAML::Node& g) {
  if (g["inputs"]) {
    for (auto& [line, loc] : block_lines(g["inputs"], ctx.filename)) {
      auto arrow = line.find("=>");
      if (arrow == std::string::npos) {
        ctx.diags.error(loc, "expected `external decl => term` axiom line");
        continue;
      }
      std::string lhs = line.substr(0, arrow), rhs = line.substr(arrow + 2);
      Cursor cl{lhs, 0, loc};
      Axiom ax;
      if (!parse_extern_decl(cl, ax.external, ctx.diags)) continue;
      SourceLoc rloc = loc;
      rloc.column = static_cast<int>(arrow) + 3;
      Cursor cr{rhs, 0, rloc};
      if (!parse_pattern(cr, ax.term, ctx.diags)) continue;
      ctx.check_rank(ax.term);
      // each demand coordinate must be addressable in the external buffer
      for (const auto& s : ax.term.subscripts) {
        bool found = false;
        for (const auto& e : ax.external.subscripts) found |= e.var == s.var;
        if (!found)
          ctx.diags.error(ax.term.loc, "axiom term variable '" + s.var +
                                           "' missing from external declaration subscripts");
      }
      ctx.rs.axioms.push_back(std::move(ax));
    }
  }
  if (g["outputs"]) {
    for (auto& [line, loc] : block_lines(g["outputs"], ctx.filename)) {
      auto arrow = line.find("=>");
      if (arrow == std::string::npos) {
        ctx.diags.error(loc, "expected `term => external decl` goal line");
        continue;
      }
      std::string lhs = line.substr(0, arrow), rhs = line.substr(arrow + 2);
      Cursor cl{lhs, 0, loc};
      Goal gl;
      if (!parse_pattern(cl, gl.term, ctx.diags)) continue;
      SourceLoc rloc = loc;
      rloc.column = static_cast<int>(arrow) + 3;
      Cursor cr{rhs, 0, rloc};
      if (!parse_extern_decl(cr, gl.external, ctx.diags)) continue;
      ctx.check_rank(gl.term);
      for (const auto& s : gl.term.subscripts) {
        if (s.is_free() || s.displacement != 0)
          ctx.diags.error(gl.term.loc,
                          "goals must reference plain iteration variables at zero offset");
      }
      ctx.rs.goals.push_back(std::move(gl));
    }
  }
}

void parse_config(ParseCtx& ctx, const YAML::Node& cfg) {
  RuleSet& rs = ctx.rs;
  if (cfg["loop-order"]) {
    for (const auto& v : cfg["loop-order"]) rs.loop_order.push_back(v.as<std::string>());
  }
  std::map<std::string, Range> ranges;
  if (cfg["ranges"]) {
    for (const auto& kv : cfg["ranges"]) {
      std::string var = kv.first.as<std::string>();
      const auto& arr = kv.second;
      if (!arr.IsSequence() || arr.size() < 2 || arr.size() > 3) {
        ctx.diags.error(mark_loc(kv.second, ctx.filename),
                        "range must be [lo, hi] or [lo, hi, stride]");
        continue;
      }
      Range r;
      r.lo = arr[0].as<long>();
      r.hi = arr[1].as<long>();
      r.stride = arr.size() == 3 ? arr[2].as<long>() : 1;
      if (r.stride == 0 || (r.hi - r.lo) <= 0 || (r.hi - r.lo) % r.stride != 0 || r.stride < 0)
        ctx.diags.error(mark_loc(kv.second, ctx.filename),
                        "range for '" + var + "': stride must be positive and divide (hi-lo), "
                        "with hi > lo");
      ranges[var] = r;
    }
  }
  for (const auto& v : rs.loop_order) {
    auto it = ranges.find(v);
    if (it == ranges.end()) {
      ctx.diags.error({ctx.filename, cfg.Mark().line + 1, 1},
                      "no range declared for loop variable '" + v + "'");
      rs.ranges.push_back({0, 1, 1});
    } else {
      rs.ranges.push_back(it->second);
      ranges.erase(it);
    }
  }
  for (const auto& [v, r] : ranges)
    ctx.diags.error({ctx.filename, cfg.Mark().line + 1, 1},
                    "range declared for '" + v + "' which is not in loop-order");
  if (cfg["aliases"]) {
    for (const auto& pair : cfg["aliases"]) {
      if (!pair.IsSequence() || pair.size() != 2) {
        ctx.diags.error(mark_loc(cfg["aliases"], ctx.filename),
                        "alias entries must be [input buffer, output buffer] pairs");
        continue;
      }
      rs.aliases.emplace_back(pair[0].as<std::string>(), pair[1].as<std::string>());
    }
  }
  if (cfg["vector-length"]) {
    rs.vector_length = cfg["vector-length"].as<int>();
    if (rs.vector_length < 1)
      ctx.diags.error(mark_loc(cfg["vector-length"], ctx.filename), "vector-length must be >= 1");
  }
  if (cfg["backend"]) rs.backend = cfg["backend"].as<std::string>();
}

// Every iteration variable mentioned as a plain (non-free) subscript must be
// a declared loop variable; free variables are checked at inference time.
void check_loop_vars(ParseCtx& ctx) {
  auto check_pattern = [&](const TermPattern& p) {
    for (const auto& s : p.subscripts) {
      if (!s.is_free() && ctx.rs.dim_of(s.var) < 0)
        ctx.diags.error(p.loc, "unknown iteration variable '" + s.var + "' in " + p.str());
    }
  };
  for (const auto& k : ctx.rs.kernels) {
    for (const auto& [_, p] : k.inputs) check_pattern(p);
    for (const auto& [_, p] : k.outputs) check_pattern(p);
  }
  for (const auto& a : ctx.rs.axioms) check_pattern(a.term);
  for (const auto& g : ctx.rs.goals) check_pattern(g.term);
}

}  // namespace

const DeclParam* DeclInfo::param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

DeclInfo parse_declaration(const std::string& decl) {
  DeclInfo info;
  auto lp = decl.find('(');
  auto rp = decl.rfind(')');
  if (lp == std::string::npos || rp == std::string::npos || rp < lp) return info;
  // function name: last identifier before '('
  {
    std::string cur, last;
    for (size_t i = 0; i < lp; ++i) {
      char ch = decl[i];
      if (ident_char(ch))
        cur += ch;
      else {
        if (!cur.empty()) last = cur;
        cur.clear();
      }
    }
    if (!cur.empty()) last = cur;
    info.function = last;
  }
  std::string inner = decl.substr(lp + 1, rp - lp - 1);
  std::istringstream is(inner);
  std::string piece;
  while (std::getline(is, piece, ',')) {
    DeclParam p;
    std::vector<std::string> toks;
    std::string cur;
    for (char ch : piece) {
      if (ident_char(ch))
        cur += ch;
      else {
        if (!cur.empty()) toks.push_back(cur);
        cur.clear();
        if (ch == '*') p.pointer = true;
        if (ch == '&') p.reference = true;
      }
    }
    if (!cur.empty()) toks.push_back(cur);
    if (toks.empty()) continue;
    p.name = toks.back();
    for (size_t i = 0; i + 1 < toks.size(); ++i) {
      if (toks[i] == "const" || toks[i] == "restrict") continue;
      if (!p.type.empty()) p.type += ' ';
      p.type += toks[i];
    }
    if (p.type.empty()) p.type = "double";
    info.params.push_back(std::move(p));
  }
  return info;
}

std::optional<RuleSet> parse_spec(const std::string& text, const std::string& filename,
                                  DiagList& diags) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    diags.error({filename, e.mark.line + 1, e.mark.column + 1}, std::string("syntax error: ") + e.msg);
    return std::nullopt;
  }
  if (!root.IsMap()) {
    diags.error({filename, 1, 1}, "rule file must be a mapping with kernels/globals/config keys");
    return std::nullopt;
  }

  RuleSet rs;
  {
    auto slash = filename.find_last_of("/\\");
    std::string stem = slash == std::string::npos ? filename : filename.substr(slash + 1);
    auto dot = stem.find_last_of('.');
    if (dot != std::string::npos) stem = stem.substr(0, dot);
    rs.name = stem.empty() ? "spec" : stem;
  }
  ParseCtx ctx{filename, diags, rs, {}};

  try {
    if (root["config"]) parse_config(ctx, root["config"]);
    else diags.error({filename, 1, 1}, "missing `config` section (loop-order and ranges)");

    if (root["kernels"] && !root["kernels"].IsNull()) {
      for (const auto& kv : root["kernels"])
        parse_kernel(ctx, kv.first.as<std::string>(), kv.second);
    }
    if (root["globals"]) parse_globals(ctx, root["globals"]);
    else diags.error({filename, 1, 1}, "missing `globals` section (axioms and goals)");
  } catch (const YAML::Exception& e) {
    diags.error({filename, e.mark.line + 1, e.mark.column + 1}, std::string("syntax error: ") + e.msg);
    return std::nullopt;
  }

  check_loop_vars(ctx);
  if (rs.goals.empty() && !diags.has_errors())
    diags.error({filename, 1, 1}, "rule file declares no goals");

  if (diags.has_errors()) return std::nullopt;
  return rs;
}

std::vector<Diagnostic> validate_rules(const RuleSet& rs) {
  std::vector<Diagnostic> out;
  auto err = [&](SourceLoc loc, std::string msg) {
    out.push_back({Severity::error, std::move(loc), std::move(msg)});
  };

  // Two output patterns overlap when a concrete term could match both: same
  // tag, same rank, and unifiable identifiers.
  auto unifiable = [](const TermPattern& a, const TermPattern& b) {
    if (a.tag != b.tag) return false;
    if (a.subscripts.size() != b.subscripts.size()) return false;
    if (!a.ident_is_free() && !b.ident_is_free() && a.ident != b.ident) return false;
    return true;
  };

  for (size_t i = 0; i < rs.kernels.size(); ++i) {
    const auto& k = rs.kernels[i];
    if (k.outputs.empty()) err(k.loc, "kernel '" + k.name + "' has no outputs");

    // output free variables must be bound by some input (or be global loop vars)
    for (const auto& [param, pat] : k.outputs) {
      auto bound = [&](const std::string& v) {
        for (const auto& [_, in] : k.inputs) {
          if (in.ident == v) return true;
          for (const auto& s : in.subscripts)
            if (s.var == v) return true;
        }
        return false;
      };
      if (pat.ident_is_free() && !bound(pat.ident))
        err(pat.loc, "kernel '" + k.name + "': unbound variable '" + pat.ident +
                         "' in output pattern " + pat.str());
      for (const auto& s : pat.subscripts) {
        if (s.is_free() && !bound(s.var))
          err(pat.loc, "kernel '" + k.name + "': unbound variable '" + s.var +
                           "' in output pattern " + pat.str());
      }
    }

    for (size_t j = i + 1; j < rs.kernels.size(); ++j) {
      for (const auto& [pa, a] : k.outputs)
        for (const auto& [pb, b] : rs.kernels[j].outputs)
          if (unifiable(a, b))
            err(b.loc, "multiple producers: kernels '" + k.name + "' and '" + rs.kernels[j].name +
                           "' can both produce " + a.str());
    }
  }
  return out;
}

namespace {
std::string print_extern(const ExternalDecl& e) {
  std::string s = e.type + " " + e.name;
  for (const auto& o : e.subscripts) {
    s += "[" + o.var;
    if (o.displacement > 0) s += "+" + std::to_string(o.displacement);
    if (o.displacement < 0) s += std::to_string(o.displacement);
    s += "]";
  }
  return s;
}

void print_block(std::ostream& os, const std::string& key,
                 const std::vector<std::string>& lines, int indent) {
  if (lines.empty()) return;
  std::string pad(indent, ' ');
  os << pad << key << ": |\n";
  for (const auto& l : lines) os << pad << "  " << l << "\n";
}
}  // namespace

std::string print_spec(const RuleSet& rs) {
  std::ostringstream os;
  os << "kernels:\n";
  for (const auto& k : rs.kernels) {
    os << "  " << k.name << ":\n";
    if (!k.declaration.empty()) os << "    declaration: \"" << k.declaration << "\"\n";
    if (k.associative) os << "    associative: true\n";
    std::vector<std::string> in, outl, body;
    for (const auto& [p, pat] : k.inputs) in.push_back(p + " : " + pat.str());
    for (const auto& [p, pat] : k.outputs) outl.push_back(p + " : " + pat.str());
    for (const auto& [p, e] : k.bodies) body.push_back(p + " = " + e);
    print_block(os, "inputs", in, 4);
    print_block(os, "outputs", outl, 4);
    print_block(os, "body", body, 4);
  }
  os << "globals:\n";
  std::vector<std::string> axl, gll;
  for (const auto& a : rs.axioms) axl.push_back(print_extern(a.external) + " => " + a.term.str());
  for (const auto& g : rs.goals) gll.push_back(g.term.str() + " => " + print_extern(g.external));
  print_block(os, "inputs", axl, 2);
  print_block(os, "outputs", gll, 2);
  os << "config:\n  loop-order: [";
  for (size_t i = 0; i < rs.loop_order.size(); ++i)
    os << (i ? ", " : "") << rs.loop_order[i];
  os << "]\n  ranges:\n";
  for (size_t i = 0; i < rs.loop_order.size(); ++i) {
    os << "    " << rs.loop_order[i] << ": [" << rs.ranges[i].lo << ", " << rs.ranges[i].hi;
    if (rs.ranges[i].stride != 1) os << ", " << rs.ranges[i].stride;
    os << "]\n";
  }
  if (!rs.aliases.empty()) {
    os << "  aliases: [";
    for (size_t i = 0; i < rs.aliases.size(); ++i)
      os << (i ? ", " : "") << "[" << rs.aliases[i].first << ", " << rs.aliases[i].second << "]";
    os << "]\n";
  }
  os << "  vector-length: " << rs.vector_length << "\n";
  os << "  backend: " << rs.backend << "\n";
  return os.str();
}

bool structurally_equal(const RuleSet& a, const RuleSet& b) {
  auto pat_eq = [](const TermPattern& x, const TermPattern& y) { return x == y; };
  auto io_eq = [&](const std::vector<std::pair<std::string, TermPattern>>& x,
                   const std::vector<std::pair<std::string, TermPattern>>& y) {
    if (x.size() != y.size()) return false;
    for (size_t i = 0; i < x.size(); ++i)
      if (x[i].first != y[i].first || !pat_eq(x[i].second, y[i].second)) return false;
    return true;
  };
  if (a.kernels.size() != b.kernels.size() || a.axioms.size() != b.axioms.size() ||
      a.goals.size() != b.goals.size())
    return false;
  for (size_t i = 0; i < a.kernels.size(); ++i) {
    const auto& x = a.kernels[i];
    const auto& y = b.kernels[i];
    if (x.name != y.name || x.declaration != y.declaration || x.associative != y.associative ||
        x.params != y.params || !io_eq(x.inputs, y.inputs) || !io_eq(x.outputs, y.outputs) ||
        x.bodies != y.bodies)
      return false;
  }
  for (size_t i = 0; i < a.axioms.size(); ++i)
    if (!(a.axioms[i].external == b.axioms[i].external) ||
        !pat_eq(a.axioms[i].term, b.axioms[i].term))
      return false;
  for (size_t i = 0; i < a.goals.size(); ++i)
    if (!(a.goals[i].external == b.goals[i].external) || !pat_eq(a.goals[i].term, b.goals[i].term))
      return false;
  return a.loop_order == b.loop_order && a.ranges == b.ranges && a.aliases == b.aliases &&
         a.vector_length == b.vector_length && a.backend == b.backend;
}

}  // namespace loomfuse
