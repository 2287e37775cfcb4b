#ifndef LOOMFUSE_RULESPEC_HPP
#define LOOMFUSE_RULESPEC_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loomfuse/diag.hpp"

namespace loomfuse {

// One subscript of a term pattern: an iteration (or inference) variable plus a
// constant displacement in grid cells. `var` keeps the trailing '?' for free
// inference variables so that `j?` and a globally bound `j` stay distinct.
struct OffsetExpr {
  std::string var;
  int displacement = 0;

  bool is_free() const { return !var.empty() && var.back() == '?'; }
  std::string base_name() const { return is_free() ? var.substr(0, var.size() - 1) : var; }
  bool operator==(const OffsetExpr&) const = default;
};

// A term pattern: optional producer tag applied to an identifier with
// subscripts, e.g. `laplace(q?[j?-1][i?])`. The identifier itself may be a
// free variable (`q?`).
struct TermPattern {
  std::string tag;  // empty = untagged
  std::string ident;
  std::vector<OffsetExpr> subscripts;
  SourceLoc loc;

  bool ident_is_free() const { return !ident.empty() && ident.back() == '?'; }
  std::string str() const;
  bool operator==(const TermPattern& o) const {
    return tag == o.tag && ident == o.ident && subscripts == o.subscripts;
  }
};

struct KernelRule {
  std::string name;
  std::string declaration;  // opaque signature text, substituted at emission
  bool associative = false;
  std::vector<std::string> params;                    // call order
  std::vector<std::pair<std::string, TermPattern>> inputs;   // param -> pattern
  std::vector<std::pair<std::string, TermPattern>> outputs;  // param -> pattern
  std::map<std::string, std::string> bodies;          // out param -> expression text (oracle only)
  SourceLoc loc;

  const TermPattern* input_of(const std::string& p) const;
  const TermPattern* output_of(const std::string& p) const;
};

// External buffer declaration as written in the globals section,
// e.g. `double g_cell[j?][i?]`.
struct ExternalDecl {
  std::string type;
  std::string name;
  std::vector<OffsetExpr> subscripts;
  SourceLoc loc;
  bool operator==(const ExternalDecl& o) const {
    return type == o.type && name == o.name && subscripts == o.subscripts;
  }
};

struct Axiom {
  ExternalDecl external;
  TermPattern term;
};

struct Goal {
  TermPattern term;
  ExternalDecl external;
};

struct Range {
  long lo = 0;
  long hi = 0;  // exclusive
  long stride = 1;
  long trips() const { return (hi - lo) / stride; }
  bool operator==(const Range&) const = default;
};

struct RuleSet {
  std::string name;  // stem of the input file, used for emitted artifacts
  std::vector<KernelRule> kernels;
  std::vector<Axiom> axioms;
  std::vector<Goal> goals;
  std::vector<std::string> loop_order;  // outermost -> innermost
  std::vector<Range> ranges;            // parallel to loop_order
  std::vector<std::pair<std::string, std::string>> aliases;  // (input buffer, output buffer)
  int vector_length = 1;
  std::string backend = "c99";

  int dim_of(const std::string& var) const;  // index into loop_order, -1 if absent
  const KernelRule* kernel(const std::string& name) const;
};

// Function name and parameter slots extracted from an opaque declaration
// string; used for call substitution and temporary typing.
struct DeclParam {
  std::string type;  // tokens minus the name, '*' and '&' stripped
  std::string name;
  bool pointer = false;
  bool reference = false;
};

struct DeclInfo {
  std::string function;
  std::vector<DeclParam> params;
  const DeclParam* param(const std::string& name) const;
};

DeclInfo parse_declaration(const std::string& decl);

// Parses rule-file text. Returns nullopt (with diagnostics) on any error.
std::optional<RuleSet> parse_spec(const std::string& text, const std::string& filename,
                                  DiagList& diags);

// Structural validation beyond what parsing enforces: single producer per
// output pattern, no zero-output kernels, output variables bound by inputs.
std::vector<Diagnostic> validate_rules(const RuleSet& rs);

// Canonical text form; parse_spec(print_spec(rs)) is structurally equal to rs.
std::string print_spec(const RuleSet& rs);

bool structurally_equal(const RuleSet& a, const RuleSet& b);

}  // namespace loomfuse

#endif
